use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::common::{
    dataset_for, probe_seed, solver_pairs, step_key, tag, train_model, trajectory_series,
};
use crate::experiments::config::ExperimentConfig;
use crate::experiments::error_order::{base_meta, with_pool};
use crate::experiments::output::{EnergySeries, ResultRow, RunOutput};
use crate::imde::symplectic_defect;
use crate::integrators::ButcherTableau;
use crate::neural::sample_region;
use crate::series::{reference_trajectory, VectorField};
use crate::systems::{hamiltonian_energy, BuiltinSystem};

/// Random points at which defects are maximised, besides the initial point.
pub const DEFECT_PROBES: usize = 10;

/// Span of the true-flow conservation check.
pub const CONSERVATION_SPAN: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct DefectRow {
    pub tableau: String,
    pub k: usize,
    /// Defect at the initial point.
    pub at_start: f64,
    /// Largest defect over the probe points.
    pub probe_max: f64,
}

#[derive(Clone, Debug)]
pub struct HamiltonianReport {
    pub defects: Vec<DefectRow>,
    /// `max |H(φ_t(x0)) - H(x0)|` over the conservation span.
    pub true_drift: f64,
    pub output: RunOutput,
}

impl HamiltonianReport {
    pub fn defect(&self, tableau: &str, k: usize) -> Option<&DefectRow> {
        self.defects
            .iter()
            .find(|d| d.tableau == tableau && d.k == k)
    }
}

/// Largest deviation of the energy from its initial value along `states`.
pub fn energy_drift(sys: &BuiltinSystem<f64>, states: &[Vec<f64>]) -> Result<f64> {
    let h0 = hamiltonian_energy(sys, &states[0])?;
    let mut worst = 0.0f64;
    for y in states {
        worst = worst.max((hamiltonian_energy(sys, y)? - h0).abs());
    }
    Ok(worst)
}

/// `symplectic_defect` for `k = 0..=order` at `x0` and at random probes.
pub fn defect_table(
    sys: &BuiltinSystem<f64>,
    tableaux: &[String],
    order: usize,
    x0: &[f64],
    probes: &[Vec<f64>],
) -> Result<Vec<DefectRow>> {
    let jobs: Vec<(String, usize)> = tableaux
        .iter()
        .flat_map(|t| (0..=order).map(move |k| (t.clone(), k)))
        .collect();
    jobs.par_iter()
        .map(|(name, k)| {
            let tab = ButcherTableau::<f64>::builtin(name)?;
            let at_start = symplectic_defect(sys, &tab, *k, x0)?;
            let mut probe_max = 0.0f64;
            for p in probes {
                probe_max = probe_max.max(symplectic_defect(sys, &tab, *k, p)?);
            }
            Ok(DefectRow {
                tableau: name.clone(),
                k: *k,
                at_start,
                probe_max,
            })
        })
        .collect()
}

/// Trains Hamiltonian-system models, records orbits with their energy, and
/// tabulates the symplectic defect of each tableau's IMDE coefficients.
pub fn run_hamiltonian(cfg: &ExperimentConfig) -> Result<HamiltonianReport> {
    cfg.validate()?;
    let sys = cfg.system()?;
    if !sys.is_hamiltonian() {
        return Err(Error::UnsupportedStructure(format!(
            "{} is not a Hamiltonian system",
            sys.name()
        )));
    }
    let name = sys.name();
    let t = cfg.data_step()?;
    let horizon = cfg.horizon()?;
    let x0 = sys.initial_point();
    let k = cfg.imde.order;
    let pairs = solver_pairs(cfg);
    let mut tasks = Vec::new();
    for (tab, s) in &pairs {
        for &seed in &cfg.train.seeds {
            tasks.push((tab.clone(), *s, seed));
        }
    }

    let mut out = RunOutput {
        meta: base_meta(cfg),
        ..Default::default()
    };
    out.meta.insert("initial_point".into(), json!(x0));

    let trained = with_pool(cfg, || {
        tasks
            .par_iter()
            .map(
                |(tab_name, s, seed)| -> Result<std::result::Result<_, String>> {
                    let (s, seed) = (*s, *seed);
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
                        t / s as f64,
                        k,
                        &x0,
                        horizon,
                        cfg.eval.dense_step,
                        cfg.eval.sample_every,
                    ) {
                        Ok(v) => v,
                        Err(e) => return Ok(Err(format!("{tab_name} S={s} seed={seed}: {e}"))),
                    };
                    Ok(Ok((tab_name.clone(), s, seed, tr, series)))
                },
            )
            .collect::<Result<Vec<_>>>()
    })??;

    for r in trained {
        let (tab_name, s, seed, tr, series) = match r {
            Ok(v) => v,
            Err(reason) => {
                out.flagged.push(reason);
                continue;
            }
        };
        let mut rows = Vec::new();
        for trace in &series.traces {
            let drift = energy_drift(&sys, &trace.states)?;
            out.table.push(
                ResultRow::new(
                    "hamiltonian",
                    name,
                    &format!("energy_drift_{}", trace.source),
                    drift,
                )
                .tableau(&tab_name)
                .compositions(s)
                .steps(t, t / s as f64)
                .seed(seed),
            );
            for (time, y) in trace.times.iter().zip(&trace.states) {
                rows.push((*time, hamiltonian_energy(&sys, y)?, trace.source.clone()));
            }
        }
        out.table.push(
            ResultRow::new("hamiltonian", name, "final_loss", tr.final_loss)
                .tableau(&tab_name)
                .compositions(s)
                .steps(t, t / s as f64)
                .seed(seed),
        );
        out.energies.push(EnergySeries {
            tag: series.tag.clone(),
            rows,
        });
        out.checkpoints
            .push((series.tag.clone(), tr.checkpoint(&tab_name, s, t)));
        out.series.push(series);
    }

    let mut tableaux: Vec<String> = pairs.iter().map(|(t, _)| t.clone()).collect();
    if !tableaux.iter().any(|t| t == "implicit_midpoint") {
        tableaux.push("implicit_midpoint".into());
    }
    let probes = sample_region(&sys.sampling_region(), DEFECT_PROBES, probe_seed(cfg, 0));
    let defects = defect_table(&sys, &tableaux, k, &x0, &probes)?;
    for d in &defects {
        for (m, v) in [
            ("defect_start", d.at_start),
            ("defect_probe_max", d.probe_max),
        ] {
            out.table.push(
                ResultRow::new("hamiltonian", name, m, v)
                    .tableau(&d.tableau)
                    .k(d.k),
            );
        }
    }

    let steps = (CONSERVATION_SPAN / cfg.eval.sample_every).round() as usize;
    let orbit = reference_trajectory(&sys, &x0, cfg.eval.sample_every, steps)?;
    let true_drift = energy_drift(&sys, &orbit)?;
    out.table.push(ResultRow::new(
        "hamiltonian",
        name,
        "true_flow_drift",
        true_drift,
    ));

    Ok(HamiltonianReport {
        defects,
        true_drift,
        output: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defect_table_has_symplectic_control() {
        let sys = BuiltinSystem::pendulum();
        let rows = defect_table(
            &sys,
            &["euler".into(), "implicit_midpoint".into()],
            2,
            &[0.0, 1.0],
            &[vec![0.3, -0.2]],
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        let e1 = rows
            .iter()
            .find(|r| r.tableau == "euler" && r.k == 1)
            .unwrap();
        assert!((e1.at_start - 10.80604612).abs() < 1e-6);
        for r in rows.iter().filter(|r| r.tableau == "implicit_midpoint") {
            assert!(r.at_start <= 1e-8 && r.probe_max <= 1e-8);
        }
    }

    #[test]
    fn non_hamiltonian_system_rejected() {
        let mut cfg = ExperimentConfig::preset(crate::experiments::ExperimentKind::Hamiltonian);
        cfg.system.name = "lorenz".into();
        assert!(matches!(
            run_hamiltonian(&cfg),
            Err(Error::UnsupportedStructure(_))
        ));
    }
}
