use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::config::{ExperimentConfig, Precision};
use crate::experiments::dataset::{gen_dataset, task_seed};
use crate::experiments::output::{Series, Trace};
use crate::imde::ImdeTruncation;
use crate::integrators::{rk_step, ButcherTableau};
use crate::neural::{mlp_init, train_node, Checkpoint, Dataset, MlpParams, TrainConfig};
use crate::series::{reference_trajectory, VectorField};
use crate::systems::BuiltinSystem;

/// Stream families of [`task_seed`].
#[derive(Clone, Copy)]
pub(crate) enum Stream {
    Data = 1,
    Init = 2,
    Shuffle = 3,
    Eval = 4,
    Probe = 5,
}

pub(crate) fn stream(kind: Stream, a: u64, b: u64) -> u64 {
    ((kind as u64) << 56) | ((a & 0xff_ffff) << 32) | (b & 0xffff_ffff)
}

/// Bit pattern of a step, so equal steps share data across sweeps.
pub(crate) fn step_key(t: f64) -> u64 {
    (t.to_bits() >> 20) & 0xffff_ffff
}

pub(crate) fn dataset_for(cfg: &ExperimentConfig, t: f64, seed: u64) -> Result<Dataset<f64>> {
    let sys = cfg.system()?;
    let s = task_seed(cfg.seed, stream(Stream::Data, seed, step_key(t)));
    gen_dataset(&sys, cfg.data.n, t, cfg.data_mode()?, s)
}

/// Outcome of one training task.
pub(crate) struct Trained {
    pub params: MlpParams<f64>,
    pub final_loss: f64,
    pub initial_loss: f64,
}

impl Trained {
    pub fn checkpoint(&self, tableau: &str, compositions: usize, step: f64) -> Checkpoint {
        let mut c = self.params.to_checkpoint();
        c.metadata.insert("tableau".into(), json!(tableau));
        c.metadata
            .insert("compositions".into(), json!(compositions));
        c.metadata.insert("step".into(), json!(step));
        c.metadata
            .insert("initial_loss".into(), json!(self.initial_loss));
        c.metadata
            .insert("final_loss".into(), json!(self.final_loss));
        c
    }
}

/// Trains a fresh network on `data` and returns it in `f64`.
pub(crate) fn train_model(
    cfg: &ExperimentConfig,
    data: &Dataset<f64>,
    tableau: &str,
    compositions: usize,
    seed: u64,
    cell: u64,
) -> Result<Trained> {
    let dims = cfg.net_dims()?;
    let init_seed = task_seed(cfg.seed, stream(Stream::Init, seed, cell));
    let tc = TrainConfig {
        tableau: tableau.into(),
        compositions,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        lr_start: cfg.train.lr_start,
        lr_end: cfg.train.lr_end,
        seed: task_seed(cfg.seed, stream(Stream::Shuffle, seed, cell)),
    };
    let (params, losses) = match cfg.train.precision {
        Precision::F64 => {
            let o = train_node(&tc, data, mlp_init::<f64>(&dims, init_seed)?)?;
            (o.params, o.losses.clone())
        }
        Precision::F32 => {
            let o = train_node(&tc, &data.cast::<f32>(), mlp_init::<f32>(&dims, init_seed)?)?;
            (
                o.params.cast::<f64>(),
                o.losses.iter().map(|v| *v as f64).collect(),
            )
        }
    };
    Ok(Trained {
        params,
        initial_loss: losses.first().copied().unwrap_or(f64::NAN),
        final_loss: losses.last().copied().unwrap_or(f64::NAN),
    })
}

pub(crate) fn eval_seed(cfg: &ExperimentConfig) -> u64 {
    task_seed(cfg.seed, stream(Stream::Eval, 0, 0))
}

pub(crate) fn probe_seed(cfg: &ExperimentConfig, i: u64) -> u64 {
    task_seed(cfg.seed, stream(Stream::Probe, i, 0))
}

/// Samples of an RK4 solution with step `dense`, taken every `every` time units.
pub fn dense_rk4<F: VectorField<Real = f64>>(
    f: &F,
    x: &[f64],
    dense: f64,
    every: f64,
    samples: usize,
) -> Result<Vec<Vec<f64>>> {
    let sub = (every / dense).round().max(1.0) as usize;
    let h = every / sub as f64;
    let rk4 = ButcherTableau::rk4();
    let mut out = Vec::with_capacity(samples + 1);
    let mut y = x.to_vec();
    out.push(y.clone());
    for _ in 0..samples {
        y = rk_step(&rk4, f, &y, h, sub)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dense integration left the finite range"));
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Aligned `true`, `imde` and `learned` traces from `x0` over `[0, horizon]`.
///
/// The true field and the truncated IMDE go through the reference Taylor
/// flow; the learned field through RK4 at `dense` step.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_series<L: VectorField<Real = f64>>(
    tag: &str,
    sys: &BuiltinSystem<f64>,
    learned: &L,
    tab: &ButcherTableau<f64>,
    h: f64,
    k: usize,
    x0: &[f64],
    horizon: f64,
    dense: f64,
    every: f64,
) -> Result<Series> {
    let samples = (horizon / every).round() as usize;
    let times: Vec<f64> = (0..=samples).map(|i| i as f64 * every).collect();
    let imde = ImdeTruncation::new(sys.clone(), tab.clone(), k, h)?;
    let traces = vec![
        Trace {
            source: "true".into(),
            times: times.clone(),
            states: reference_trajectory(sys, x0, every, samples)?,
        },
        Trace {
            source: "imde".into(),
            times: times.clone(),
            states: reference_trajectory(&imde, x0, every, samples)?,
        },
        Trace {
            source: "learned".into(),
            times,
            states: dense_rk4(learned, x0, dense, every, samples)?,
        },
    ];
    Ok(Series {
        tag: tag.into(),
        traces,
    })
}

/// `system_tableau_S<S>_T<T>` with the step written without a dot.
pub(crate) fn tag(system: &str, tableau: &str, s: usize, t: f64) -> String {
    format!(
        "{system}_{tableau}_S{s}_T{}",
        format!("{t}").replace('.', "p")
    )
}

/// `(tableau, S)` pairs: one S for every tableau, or zipped lists.
pub(crate) fn solver_pairs(cfg: &ExperimentConfig) -> Vec<(String, usize)> {
    let c = &cfg.solver.compositions;
    cfg.solver
        .tableaux
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), if c.len() == 1 { c[0] } else { c[i] }))
        .collect()
}
