//! Reproducible experiment drivers and their on-disk outputs.

mod common;
pub mod config;
pub mod dataset;
pub mod error_order;
pub mod hamiltonian;
pub mod output;
pub mod trajectory;
pub mod verify;

pub use common::{dense_rk4, trajectory_series};
pub use config::{DataMode, ExperimentConfig, ExperimentKind, Precision};
pub use dataset::{gen_dataset, task_seed};
pub use error_order::{fit_error_order, run_error_order, ErrorOrderReport, Sweep};
pub use hamiltonian::{run_hamiltonian, HamiltonianReport};
pub use output::{ResultRow, ResultTable, RunOutput, Series, Trace};
pub use trajectory::{run_trajectory, TrajectoryReport};
pub use verify::{run_verify, VerifyReport};

/// Runs the driver selected by `cfg.kind`.
pub fn run(cfg: &ExperimentConfig) -> crate::Result<RunOutput> {
    Ok(match cfg.kind {
        ExperimentKind::ErrorOrder => run_error_order(cfg)?.output,
        ExperimentKind::Trajectory => run_trajectory(cfg)?.output,
        ExperimentKind::Hamiltonian => run_hamiltonian(cfg)?.output,
        ExperimentKind::ImdeVerify => run_verify(cfg)?.output,
    })
}
