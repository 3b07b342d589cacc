use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::common::{dataset_for, eval_seed, step_key, tag, train_model};
use crate::experiments::config::ExperimentConfig;
use crate::experiments::output::{ResultRow, ResultTable, RunOutput};
use crate::imde::ImdeTruncation;
use crate::integrators::ButcherTableau;
use crate::neural::{field_error, Checkpoint};
use crate::stats::{fit_loglog_slope, pairwise_log2_ratios};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sweep {
    /// Data step varies, `S = 1`.
    Step,
    /// Composition count varies at fixed data step.
    Compositions,
}

impl Sweep {
    pub fn as_str(self) -> &'static str {
        match self {
            Sweep::Step => "T",
            Sweep::Compositions => "S",
        }
    }
}

/// One trained model of the sweep.
#[derive(Clone, Debug)]
pub struct OrderCell {
    pub tableau: String,
    pub sweep: Sweep,
    pub step: f64,
    pub compositions: usize,
    pub h: f64,
    pub seed: u64,
    /// `Ok((err vs f, err vs f_h^K, final loss))`, or the reason the cell is flagged.
    pub outcome: std::result::Result<(f64, f64, f64), String>,
    pub checkpoint: Option<Checkpoint>,
}

/// Order fit of one (tableau, sweep) pair over seed-averaged errors.
#[derive(Clone, Debug)]
pub struct OrderFit {
    pub tableau: String,
    pub sweep: Sweep,
    pub hs: Vec<f64>,
    pub mean_err_true: Vec<f64>,
    pub mean_err_imde: Vec<f64>,
    pub ratios: Vec<(f64, f64, f64)>,
    pub slope: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ErrorOrderReport {
    pub cells: Vec<OrderCell>,
    pub fits: Vec<OrderFit>,
    pub output: RunOutput,
}

impl ErrorOrderReport {
    pub fn slope(&self, tableau: &str, sweep: Sweep) -> Option<f64> {
        self.fits
            .iter()
            .find(|f| f.tableau == tableau && f.sweep == sweep)
            .and_then(|f| f.slope)
    }
}

/// Least-squares order and pairwise `log₂(e(2h)/e(h))` of an error curve.
pub fn fit_error_order(hs: &[f64], errs: &[f64]) -> Result<(f64, Vec<(f64, f64, f64)>)> {
    let slope = fit_loglog_slope(hs, errs)?;
    Ok((slope, pairwise_log2_ratios(hs, errs)))
}

struct Task {
    tableau: String,
    sweep: Sweep,
    step: f64,
    compositions: usize,
    seed: u64,
}

/// Trains over the configured `T` and `S` grids and fits error orders of
/// the learned field against the true field.
pub fn run_error_order(cfg: &ExperimentConfig) -> Result<ErrorOrderReport> {
    cfg.validate()?;
    let sys = cfg.system()?;
    let mut tasks = Vec::new();
    for tab in &cfg.solver.tableaux {
        for &seed in &cfg.train.seeds {
            for &t in &cfg.sweep.t_grid {
                tasks.push(Task {
                    tableau: tab.clone(),
                    sweep: Sweep::Step,
                    step: t,
                    compositions: 1,
                    seed,
                });
            }
            let fixed = match cfg.sweep.s_grid_step {
                Some(t) => t,
                None => cfg.data_step()?,
            };
            for &s in &cfg.sweep.s_grid {
                tasks.push(Task {
                    tableau: tab.clone(),
                    sweep: Sweep::Compositions,
                    step: fixed,
                    compositions: s,
                    seed,
                });
            }
        }
    }
    let region = sys.sampling_region();
    let eval = eval_seed(cfg);
    let k = cfg.imde.order;
    let run = |task: &Task| -> Result<OrderCell> {
        let h = task.step / task.compositions as f64;
        let tab = ButcherTableau::<f64>::builtin(&task.tableau)?;
        let data = dataset_for(cfg, task.step, task.seed)?;
        let cell_id = step_key(task.step) ^ ((task.compositions as u64) << 24);
        let mut checkpoint = None;
        let outcome = match train_model(
            cfg,
            &data,
            &task.tableau,
            task.compositions,
            task.seed,
            cell_id,
        ) {
            Ok(tr) => {
                let et = field_error(&tr.params, &sys, &region, cfg.eval.points, eval)?;
                let imde = ImdeTruncation::new(sys.clone(), tab, k, h)?;
                let ei = field_error(&tr.params, &imde, &region, cfg.eval.points, eval)?;
                checkpoint = Some(tr.checkpoint(&task.tableau, task.compositions, task.step));
                Ok((et, ei, tr.final_loss))
            }
            Err(Error::Divergence { epoch }) => Err(format!("diverged at epoch {epoch}")),
            Err(e) => return Err(e),
        };
        Ok(OrderCell {
            tableau: task.tableau.clone(),
            sweep: task.sweep,
            step: task.step,
            compositions: task.compositions,
            h,
            seed: task.seed,
            outcome,
            checkpoint,
        })
    };
    let mut cells = with_pool(cfg, || {
        tasks.par_iter().map(run).collect::<Result<Vec<_>>>()
    })??;
    cells.sort_by(|a, b| {
        (&a.tableau, a.sweep, a.seed)
            .cmp(&(&b.tableau, b.sweep, b.seed))
            .then(a.h.total_cmp(&b.h))
    });

    let mut fits = Vec::new();
    for tab in &cfg.solver.tableaux {
        for sweep in [Sweep::Step, Sweep::Compositions] {
            let mut hs: Vec<f64> = cells
                .iter()
                .filter(|c| &c.tableau == tab && c.sweep == sweep)
                .map(|c| c.h)
                .collect();
            hs.sort_by(f64::total_cmp);
            hs.dedup();
            if hs.is_empty() {
                continue;
            }
            let mut used_h = Vec::new();
            let mut mt = Vec::new();
            let mut mi = Vec::new();
            for &h in &hs {
                let ok: Vec<(f64, f64, f64)> = cells
                    .iter()
                    .filter(|c| &c.tableau == tab && c.sweep == sweep && c.h == h)
                    .filter_map(|c| c.outcome.clone().ok())
                    .collect();
                if ok.is_empty() {
                    continue;
                }
                let n = ok.len() as f64;
                used_h.push(h);
                mt.push(ok.iter().map(|o| o.0).sum::<f64>() / n);
                mi.push(ok.iter().map(|o| o.1).sum::<f64>() / n);
            }
            let (slope, ratios) = match fit_error_order(&used_h, &mt) {
                Ok((s, r)) => (Some(s), r),
                Err(_) => (None, Vec::new()),
            };
            fits.push(OrderFit {
                tableau: tab.clone(),
                sweep,
                hs: used_h,
                mean_err_true: mt,
                mean_err_imde: mi,
                ratios,
                slope,
            });
        }
    }

    let output = assemble(cfg, &cells, &fits)?;
    Ok(ErrorOrderReport {
        cells,
        fits,
        output,
    })
}

fn assemble(cfg: &ExperimentConfig, cells: &[OrderCell], fits: &[OrderFit]) -> Result<RunOutput> {
    let name = cfg.system.name.as_str();
    let ex = "error_order";
    let mut table = ResultTable::default();
    let mut flagged = Vec::new();
    for c in cells {
        let row = |m: &str, v: f64| {
            ResultRow::new(ex, name, m, v)
                .tableau(&c.tableau)
                .compositions(c.compositions)
                .steps(c.step, c.h)
                .seed(c.seed)
        };
        match &c.outcome {
            Ok((et, ei, loss)) => {
                table.push(row("err_true", *et));
                table.push(row("err_imde", *ei));
                table.push(row("final_loss", *loss));
            }
            Err(reason) => {
                table.push(row("flagged", 1.0));
                flagged.push(format!(
                    "{} T={} S={} seed={}: {reason}",
                    c.tableau, c.step, c.compositions, c.seed
                ));
            }
        }
    }
    let checkpoints = cells
        .iter()
        .filter_map(|c| {
            let ck = c.checkpoint.clone()?;
            Some((
                format!(
                    "{}_seed{}",
                    tag(name, &c.tableau, c.compositions, c.step),
                    c.seed
                ),
                ck,
            ))
        })
        .collect();
    let mut fit_meta = Vec::new();
    for f in fits {
        let metric = |m: &str| format!("{m}_{}", f.sweep.as_str());
        for (i, h) in f.hs.iter().enumerate() {
            let base = ResultRow::new(ex, name, "", 0.0).tableau(&f.tableau);
            let mut r = base.clone();
            r.h = Some(*h);
            r.metric = metric("mean_err_true");
            r.value = f.mean_err_true[i];
            table.push(r);
            let mut r = base;
            r.h = Some(*h);
            r.metric = metric("mean_err_imde");
            r.value = f.mean_err_imde[i];
            table.push(r);
        }
        // Row `h` carries log2(e(2h) / e(h)).
        for (h, _, ratio) in &f.ratios {
            let mut r = ResultRow::new(ex, name, &metric("log2_ratio"), *ratio).tableau(&f.tableau);
            r.h = Some(*h);
            table.push(r);
        }
        match f.slope {
            Some(s) => {
                table.push(ResultRow::new(ex, name, &metric("order"), s).tableau(&f.tableau))
            }
            None => flagged.push(format!(
                "{} {}-sweep: too few cells for an order fit",
                f.tableau,
                f.sweep.as_str()
            )),
        }
        fit_meta.push(json!({
            "tableau": f.tableau,
            "sweep": f.sweep.as_str(),
            "h": f.hs,
            "mean_err_true": f.mean_err_true,
            "mean_err_imde": f.mean_err_imde,
            "order": f.slope,
        }));
    }
    let mut meta = base_meta(cfg);
    meta.insert("fits".into(), json!(fit_meta));
    Ok(RunOutput {
        table,
        flagged,
        meta,
        checkpoints,
        ..Default::default()
    })
}

/// Config echo, version tag and seeds shared by every sidecar.
pub(crate) fn base_meta(cfg: &ExperimentConfig) -> serde_json::Map<String, serde_json::Value> {
    let mut m = serde_json::Map::new();
    m.insert("kind".into(), json!(cfg.kind.as_str()));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("seed".into(), json!(cfg.seed));
    m.insert("seeds".into(), json!(cfg.train.seeds));
    m.insert("config".into(), json!(cfg));
    m
}

/// Runs `f` inside a pool of `cfg.jobs` threads (all cores when unset).
pub(crate) fn with_pool<R: Send>(
    cfg: &ExperimentConfig,
    f: impl FnOnce() -> R + Send,
) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        b = b.num_threads(j);
    }
    let pool = b
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}
