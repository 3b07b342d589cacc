use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::common::{
    dataset_for, eval_seed, solver_pairs, step_key, tag, train_model, trajectory_series,
};
use crate::experiments::config::ExperimentConfig;
use crate::experiments::error_order::{base_meta, with_pool};
use crate::experiments::output::{ResultRow, ResultTable, RunOutput, Series};
use crate::imde::ImdeTruncation;
use crate::integrators::ButcherTableau;
use crate::neural::{field_error, Checkpoint};

/// Distances of one trained configuration.
#[derive(Clone, Debug)]
pub struct TrajectoryCell {
    pub tableau: String,
    pub compositions: usize,
    pub step: f64,
    pub seed: u64,
    pub l2_learned_true: f64,
    pub l2_learned_imde: f64,
    pub max_learned_true: f64,
    pub max_learned_imde: f64,
    pub err_true: f64,
    pub err_imde: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrajectoryReport {
    pub cells: Vec<TrajectoryCell>,
    pub output: RunOutput,
}

impl TrajectoryReport {
    pub fn cell(&self, tableau: &str) -> Option<&TrajectoryCell> {
        self.cells.iter().find(|c| c.tableau == tableau)
    }
}

type CellResult = std::result::Result<(TrajectoryCell, Series, Checkpoint), String>;

/// Trains one model per `(tableau, S, seed)` and integrates it next to the
/// true field and the truncated IMDE from the system's initial point.
pub fn run_trajectory(cfg: &ExperimentConfig) -> Result<TrajectoryReport> {
    cfg.validate()?;
    let sys = cfg.system()?;
    let t = cfg.data_step()?;
    let horizon = cfg.horizon()?;
    let region = sys.sampling_region();
    let x0 = sys.initial_point();
    let k = cfg.imde.order;
    let name = sys.name();
    let mut tasks = Vec::new();
    for (tab, s) in solver_pairs(cfg) {
        for &seed in &cfg.train.seeds {
            tasks.push((tab.clone(), s, seed));
        }
    }
    let run = |(tab_name, s, seed): &(String, usize, u64)| -> Result<CellResult> {
        let (s, seed) = (*s, *seed);
        let h = t / s as f64;
        let tab = ButcherTableau::<f64>::builtin(tab_name)?;
        let data = dataset_for(cfg, t, seed)?;
        let cell_id = step_key(t) ^ ((s as u64) << 24);
        let tr = match train_model(cfg, &data, tab_name, s, seed, cell_id) {
            Ok(tr) => tr,
            Err(Error::Divergence { epoch }) => {
                return Ok(Err(format!(
                    "{tab_name} S={s} seed={seed}: diverged at epoch {epoch}"
                )))
            }
            Err(e) => return Err(e),
        };
        let mut series_tag = tag(name, tab_name, s, t);
        if cfg.train.seeds.len() > 1 {
            series_tag.push_str(&format!("_seed{seed}"));
        }
        let series = match trajectory_series(
            &series_tag,
            &sys,
            &tr.params,
            &tab,
            h,
            k,
            &x0,
            horizon,
            cfg.eval.dense_step,
            cfg.eval.sample_every,
        ) {
            Ok(s) => s,
            Err(e) => return Ok(Err(format!("{tab_name} S={s} seed={seed}: {e}"))),
        };
        let (tr_true, tr_imde, tr_net) = (
            series.trace("true").expect("true trace"),
            series.trace("imde").expect("imde trace"),
            series.trace("learned").expect("learned trace"),
        );
        let imde = ImdeTruncation::new(sys.clone(), tab.clone(), k, h)?;
        let cell = TrajectoryCell {
            tableau: tab_name.clone(),
            compositions: s,
            step: t,
            seed,
            l2_learned_true: tr_net.l2_distance(tr_true),
            l2_learned_imde: tr_net.l2_distance(tr_imde),
            max_learned_true: tr_net.max_distance(tr_true),
            max_learned_imde: tr_net.max_distance(tr_imde),
            err_true: field_error(&tr.params, &sys, &region, cfg.eval.points, eval_seed(cfg))?,
            err_imde: field_error(&tr.params, &imde, &region, cfg.eval.points, eval_seed(cfg))?,
            final_loss: tr.final_loss,
        };
        let ck = tr.checkpoint(tab_name, s, t);
        Ok(Ok((cell, series, ck)))
    };
    let results = with_pool(cfg, || {
        tasks.par_iter().map(run).collect::<Result<Vec<_>>>()
    })??;

    let mut out = RunOutput {
        meta: base_meta(cfg),
        ..Default::default()
    };
    out.meta.insert(
        "dense_solver".into(),
        json!({"method": "rk4", "step": cfg.eval.dense_step}),
    );
    out.meta.insert("initial_point".into(), json!(x0));
    let mut cells = Vec::new();
    for r in results {
        match r {
            Ok((c, series, ck)) => {
                push_cell_rows(&mut out.table, name, &c);
                let suffix = if cfg.train.seeds.len() > 1 {
                    format!("_seed{}", c.seed)
                } else {
                    String::new()
                };
                out.checkpoints.push((
                    format!("{}{suffix}", tag(name, &c.tableau, c.compositions, c.step)),
                    ck,
                ));
                out.series.push(series);
                cells.push(c);
            }
            Err(reason) => out.flagged.push(reason),
        }
    }
    Ok(TrajectoryReport { cells, output: out })
}

fn push_cell_rows(table: &mut ResultTable, system: &str, c: &TrajectoryCell) {
    let h = c.step / c.compositions as f64;
    for (m, v) in [
        ("l2_learned_true", c.l2_learned_true),
        ("l2_learned_imde", c.l2_learned_imde),
        ("max_learned_true", c.max_learned_true),
        ("max_learned_imde", c.max_learned_imde),
        ("err_true", c.err_true),
        ("err_imde", c.err_imde),
        ("final_loss", c.final_loss),
    ] {
        table.push(
            ResultRow::new("trajectory", system, m, v)
                .tableau(&c.tableau)
                .compositions(c.compositions)
                .steps(c.step, h)
                .seed(c.seed),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::BuiltinSystem;

    #[test]
    fn injected_true_field_reproduces_true_series() {
        let sys = BuiltinSystem::pendulum();
        let tab = ButcherTableau::rk4();
        let s = trajectory_series("t", &sys, &sys, &tab, 0.04, 2, &[0.0, 1.0], 1.0, 1e-3, 0.05)
            .unwrap();
        let d = s
            .trace("learned")
            .unwrap()
            .max_distance(s.trace("true").unwrap());
        assert!(d <= 1e-6, "{d}");
        assert_eq!(s.trace("imde").unwrap().states.len(), 21);
    }
}
