use std::cmp::Ordering;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::neural::Checkpoint;

/// One metric value with the parameters it belongs to. Unused parameters
/// stay empty in the CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub system: String,
    pub tableau: Option<String>,
    pub compositions: Option<usize>,
    pub step: Option<f64>,
    pub h: Option<f64>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub metric: String,
    pub value: f64,
}

impl ResultRow {
    pub fn new(experiment: &str, system: &str, metric: &str, value: f64) -> Self {
        ResultRow {
            experiment: experiment.into(),
            system: system.into(),
            metric: metric.into(),
            value,
            ..Default::default()
        }
    }

    pub fn tableau(mut self, t: &str) -> Self {
        self.tableau = Some(t.into());
        self
    }

    pub fn compositions(mut self, s: usize) -> Self {
        self.compositions = Some(s);
        self
    }

    /// Sets the data step `T` and the solver step `h = T / S`.
    pub fn steps(mut self, t: f64, h: f64) -> Self {
        self.step = Some(t);
        self.h = Some(h);
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = Some(s);
        self
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    fn key_cmp(&self, o: &Self) -> Ordering {
        let f = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a.total_cmp(&b),
            (a, b) => a.is_some().cmp(&b.is_some()),
        };
        self.experiment
            .cmp(&o.experiment)
            .then_with(|| self.system.cmp(&o.system))
            .then_with(|| self.tableau.cmp(&o.tableau))
            .then_with(|| self.compositions.cmp(&o.compositions))
            .then_with(|| f(self.step, o.step))
            .then_with(|| f(self.h, o.h))
            .then_with(|| self.seed.cmp(&o.seed))
            .then_with(|| self.k.cmp(&o.k))
            .then_with(|| self.metric.cmp(&o.metric))
    }
}

/// Rows of metrics, sorted by key when written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    pub fn sort(&mut self) {
        self.rows.sort_by(ResultRow::key_cmp);
    }

    /// Rows whose metric equals `metric`.
    pub fn metric<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(bad) = self.rows.iter().find(|r| !r.value.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value for metric {}",
                bad.metric
            )));
        }
        let mut sorted = self.clone();
        sorted.sort();
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        if sorted.rows.is_empty() {
            w.write_record([
                "experiment",
                "system",
                "tableau",
                "compositions",
                "step",
                "h",
                "seed",
                "k",
                "metric",
                "value",
            ])
            .map_err(csv_err)?;
        }
        for r in &sorted.rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A sampled trajectory from one source (`true`, `imde` or `learned`).
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub source: String,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trace {
    /// `sqrt(Σ ‖a(t) - b(t)‖² Δt)` over shared sample times.
    pub fn l2_distance(&self, other: &Trace) -> f64 {
        let dt = if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            1.0
        };
        let s: f64 = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum();
        (s * dt).sqrt()
    }

    /// Largest component difference over shared sample times.
    pub fn max_distance(&self, other: &Trace) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Aligned traces written to `series_<tag>.csv` as `t,y1..yD,source`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub tag: String,
    pub traces: Vec<Trace>,
}

impl Series {
    pub fn trace(&self, source: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.source == source)
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let d = self
            .traces
            .first()
            .and_then(|t| t.states.first())
            .map_or(0, Vec::len);
        let mut w = csv::Writer::from_path(dir.join(format!("series_{}.csv", self.tag)))
            .map_err(csv_err)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("y{i}")));
        header.push("source".into());
        w.write_record(&header).map_err(csv_err)?;
        for tr in &self.traces {
            for (t, y) in tr.times.iter().zip(&tr.states) {
                let mut rec = vec![format!("{t}")];
                rec.extend(y.iter().map(|v| format!("{v:e}")));
                rec.push(tr.source.clone());
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Energy along each trace, written to `energy_<tag>.csv` as `t,H,source`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySeries {
    pub tag: String,
    pub rows: Vec<(f64, f64, String)>,
}

impl EnergySeries {
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(format!("energy_{}.csv", self.tag)))
            .map_err(csv_err)?;
        w.write_record(["t", "H", "source"]).map_err(csv_err)?;
        for (t, h, s) in &self.rows {
            w.write_record([format!("{t}"), format!("{h:e}"), s.clone()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a driver produces.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub table: ResultTable,
    pub series: Vec<Series>,
    pub energies: Vec<EnergySeries>,
    pub checkpoints: Vec<(String, Checkpoint)>,
    /// Human-readable reasons for flagged cells or failed checks.
    pub flagged: Vec<String>,
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl RunOutput {
    /// Exit status: 0 when clean, 2 when any cell or check was flagged.
    pub fn exit_code(&self) -> i32 {
        if self.flagged.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.table.write_csv(&dir.join("results.csv"))?;
        for s in &self.series {
            s.write_csv(dir)?;
        }
        for e in &self.energies {
            e.write_csv(dir)?;
        }
        if !self.checkpoints.is_empty() {
            let ck = dir.join("checkpoints");
            std::fs::create_dir_all(&ck)?;
            for (name, c) in &self.checkpoints {
                std::fs::write(
                    ck.join(format!("{name}.json")),
                    serde_json::to_string_pretty(c)?,
                )?;
            }
        }
        let mut meta = self.meta.clone();
        meta.insert("flagged".into(), serde_json::json!(self.flagged));
        std::fs::write(
            dir.join("meta.json"),
            serde_json::to_string_pretty(&serde_json::Value::Object(meta))?,
        )?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sorted_and_written() {
        let dir = std::env::temp_dir().join(format!("imde-out-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut t = ResultTable::default();
        t.push(ResultRow::new("e", "pendulum", "err", 2.0).tableau("midpoint"));
        t.push(
            ResultRow::new("e", "pendulum", "err", 1.0)
                .tableau("euler")
                .steps(0.1, 0.1),
        );
        let path = dir.join("results.csv");
        t.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "experiment,system,tableau,compositions,step,h,seed,k,metric,value"
        );
        assert!(lines[1].contains("euler"));
        t.push(ResultRow::new("e", "p", "bad", f64::NAN));
        assert!(t.write_csv(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn trace_distances() {
        let a = Trace {
            source: "a".into(),
            times: vec![0.0, 0.5],
            states: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
        };
        let b = Trace {
            source: "b".into(),
            times: vec![0.0, 0.5],
            states: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        assert_eq!(a.max_distance(&b), 1.0);
        assert!((a.l2_distance(&b) - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
