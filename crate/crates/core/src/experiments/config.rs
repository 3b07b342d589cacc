use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imde::MAX_TRUNCATION;
use crate::integrators::ButcherTableau;
use crate::systems::BuiltinSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Trajectory,
    ErrorOrder,
    Hamiltonian,
    ImdeVerify,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Trajectory => "trajectory",
            ExperimentKind::ErrorOrder => "error_order",
            ExperimentKind::Hamiltonian => "hamiltonian",
            ExperimentKind::ImdeVerify => "imde_verify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    RegionSample,
    SingleTrajectory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            name: "pendulum".into(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Number of training pairs.
    pub n: usize,
    /// Data step `T`; the system default when absent.
    pub step: Option<f64>,
    /// Sampling mode; the system default when absent.
    pub mode: Option<DataMode>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            n: 2000,
            step: None,
            mode: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tableaux: Vec<String>,
    pub compositions: Vec<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tableaux: vec!["euler".into()],
            compositions: vec![1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub hidden: Vec<usize>,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            hidden: vec![64, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub lr_start: f64,
    pub lr_end: f64,
    pub precision: Precision,
    /// Independent repetitions; each index draws its own data and weights.
    pub seeds: Vec<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 20_000,
            batch_size: None,
            lr_start: 1e-2,
            lr_end: 1e-5,
            precision: Precision::F32,
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImdeSection {
    /// Truncation order `K`.
    pub order: usize,
}

impl Default for ImdeSection {
    fn default() -> Self {
        ImdeSection { order: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Data steps for the sweep at `S = 1`.
    pub t_grid: Vec<f64>,
    /// Composition counts for the sweep at fixed `T`.
    pub s_grid: Vec<usize>,
    /// Fixed `T` of the composition sweep; `data.step` when absent.
    pub s_grid_step: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            t_grid: vec![0.04, 0.08, 0.16],
            s_grid: Vec::new(),
            s_grid_step: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Sample count of field errors.
    pub points: usize,
    /// Trajectory horizon; the system default when absent.
    pub horizon: Option<f64>,
    /// RK4 step of the dense integration of learned fields.
    pub dense_step: f64,
    /// Spacing of emitted series samples.
    pub sample_every: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            points: 2000,
            horizon: None,
            dense_step: 1e-3,
            sample_every: 0.01,
        }
    }
}

/// A complete experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub imde: ImdeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub eval: EvalSection,
}

impl ExperimentConfig {
    /// Built-in defaults of each experiment kind.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            kind,
            seed: 0,
            jobs: None,
            out: None,
            system: Default::default(),
            data: Default::default(),
            solver: Default::default(),
            net: Default::default(),
            train: Default::default(),
            imde: Default::default(),
            sweep: Default::default(),
            eval: Default::default(),
        };
        match kind {
            ExperimentKind::ErrorOrder => {
                cfg.solver.tableaux = vec!["euler".into(), "midpoint".into()];
            }
            ExperimentKind::Trajectory => {
                cfg.solver.tableaux = vec!["euler".into(), "midpoint".into(), "rk4".into()];
                cfg.train.seeds = vec![0];
            }
            ExperimentKind::Hamiltonian => {
                cfg.solver.tableaux = vec!["euler".into(), "midpoint".into()];
                cfg.solver.compositions = vec![6, 1];
                cfg.data.step = Some(0.12);
                cfg.train.seeds = vec![0];
            }
            ExperimentKind::ImdeVerify => {
                cfg.solver.tableaux = vec!["euler".into(), "midpoint".into(), "rk4".into()];
            }
        }
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn system(&self) -> Result<BuiltinSystem<f64>> {
        BuiltinSystem::new(&self.system.name, &self.system.params)
    }

    pub fn data_step(&self) -> Result<f64> {
        Ok(self.data.step.unwrap_or(self.system()?.data_step()))
    }

    pub fn data_mode(&self) -> Result<DataMode> {
        Ok(self
            .data
            .mode
            .unwrap_or(if self.system()?.single_trajectory_data() {
                DataMode::SingleTrajectory
            } else {
                DataMode::RegionSample
            }))
    }

    pub fn horizon(&self) -> Result<f64> {
        Ok(self.eval.horizon.unwrap_or(self.system()?.horizon()))
    }

    /// Layer sizes `(D, hidden..., D)`.
    pub fn net_dims(&self) -> Result<Vec<usize>> {
        let d = crate::series::VectorField::dim(&self.system()?);
        let mut dims = vec![d];
        dims.extend(&self.net.hidden);
        dims.push(d);
        Ok(dims)
    }

    /// Checks every name and range; failures are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.system().map_err(cfg_err)?;
        if self.solver.tableaux.is_empty() {
            return Err(Error::Config("solver.tableaux is empty".into()));
        }
        for t in &self.solver.tableaux {
            ButcherTableau::<f64>::builtin(t).map_err(cfg_err)?;
        }
        if self.solver.compositions.is_empty() || self.solver.compositions.contains(&0) {
            return Err(Error::Config(
                "solver.compositions must be nonempty and positive".into(),
            ));
        }
        let (nc, nt) = (self.solver.compositions.len(), self.solver.tableaux.len());
        if nc != 1 && nc != nt {
            return Err(Error::Config(
                "solver.compositions needs one entry or one per tableau".into(),
            ));
        }
        if self.data.n == 0 {
            return Err(Error::Config("data.n must be positive".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if let Some(t) = self.data.step {
            if !positive(t) {
                return Err(Error::Config("data.step must be positive".into()));
            }
        }
        if self.net.hidden.contains(&0) {
            return Err(Error::Config("net.hidden widths must be positive".into()));
        }
        if self.train.seeds.is_empty() {
            return Err(Error::Config("train.seeds is empty".into()));
        }
        if self.train.batch_size == Some(0) {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if !(positive(self.train.lr_start) && positive(self.train.lr_end)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.imde.order > MAX_TRUNCATION {
            return Err(Error::Config(format!(
                "imde.order exceeds the cap {MAX_TRUNCATION}"
            )));
        }
        if !self.sweep.t_grid.iter().all(|t| positive(*t)) || self.sweep.s_grid.contains(&0) {
            return Err(Error::Config("sweep grids must be positive".into()));
        }
        if self.kind == ExperimentKind::ErrorOrder {
            let t_ok = self.sweep.t_grid.is_empty() || self.sweep.t_grid.len() >= 3;
            let s_ok = self.sweep.s_grid.is_empty() || self.sweep.s_grid.len() >= 3;
            if !t_ok || !s_ok || (self.sweep.t_grid.is_empty() && self.sweep.s_grid.is_empty()) {
                return Err(Error::Config(
                    "error-order sweeps need at least three grid points".into(),
                ));
            }
        }
        if let Some(t) = self.sweep.s_grid_step {
            if !positive(t) {
                return Err(Error::Config("sweep.s_grid_step must be positive".into()));
            }
        }
        if self.eval.points == 0
            || !positive(self.eval.dense_step)
            || !positive(self.eval.sample_every)
        {
            return Err(Error::Config("eval settings must be positive".into()));
        }
        if let Some(h) = self.eval.horizon {
            if !positive(h) {
                return Err(Error::Config("eval.horizon must be positive".into()));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("kind = \"error_order\"\n").unwrap();
        assert_eq!(cfg.data.n, 2000);
        assert_eq!(cfg.data_step().unwrap(), 0.04);
        assert_eq!(cfg.net_dims().unwrap(), vec![2, 64, 64, 2]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("kind = \"trajectory\"\nepochz = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(
            ExperimentConfig::from_toml("kind = \"trajectory\"\n[train]\nepoch = 3\n").is_err()
        );
        assert!(ExperimentConfig::from_toml(
            "kind = \"trajectory\"\n[system]\nname = \"duffing\"\n"
        )
        .is_err());
        assert!(ExperimentConfig::from_toml(
            "kind = \"trajectory\"\n[solver]\ntableaux = [\"heun\"]\n"
        )
        .is_err());
    }

    #[test]
    fn preset_roundtrips_through_toml() {
        for kind in [
            ExperimentKind::Trajectory,
            ExperimentKind::ErrorOrder,
            ExperimentKind::Hamiltonian,
            ExperimentKind::ImdeVerify,
        ] {
            let cfg = ExperimentConfig::preset(kind);
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
    }

    #[test]
    fn short_sweeps_rejected() {
        let text = "kind = \"error_order\"\n[sweep]\nt_grid = [0.1, 0.2]\n";
        assert!(ExperimentConfig::from_toml(text).is_err());
    }
}
