use std::fs;
use std::path::PathBuf;

use imde_core::experiments::{
    gen_dataset, run, run_trajectory, task_seed, DataMode, ExperimentConfig, ExperimentKind,
};
use imde_core::System64;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("imde-pipeline-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn small_trajectory() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
kind = "trajectory"
seed = 7
jobs = 1

[data]
n = 64
step = 0.1

[solver]
tableaux = ["euler", "midpoint"]
compositions = [1]

[net]
hidden = [8]

[train]
epochs = 40
seeds = [0]

[eval]
points = 32
horizon = 1.0
sample_every = 0.05
"#,
    )
    .unwrap()
}

#[test]
fn trajectory_run_writes_every_artifact() {
    let cfg = small_trajectory();
    let out = run(&cfg).unwrap();
    let dir = scratch("trajectory");
    out.write(&dir).unwrap();

    let results = fs::read_to_string(dir.join("results.csv")).unwrap();
    let header = results.lines().next().unwrap();
    assert_eq!(
        header,
        "experiment,system,tableau,compositions,step,h,seed,k,metric,value"
    );
    assert!(results.lines().any(|l| l.contains("l2_")));
    for tab in ["euler", "midpoint"] {
        let series = dir.join(format!("series_pendulum_{tab}_S1_T0p1.csv"));
        let text =
            fs::read_to_string(&series).unwrap_or_else(|e| panic!("{}: {e}", series.display()));
        assert!(text.starts_with("t,y1,y2,source"));
        for src in ["true", "imde", "learned"] {
            assert!(
                text.lines().any(|l| l.ends_with(src)),
                "{tab}: no {src} rows"
            );
        }
    }
    assert!(dir.join("meta.json").exists());
    let ck = fs::read_dir(dir.join("checkpoints")).unwrap().count();
    assert_eq!(ck, 2);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn same_seed_reproduces_results() {
    let cfg = small_trajectory();
    let a = run_trajectory(&cfg).unwrap();
    let b = run_trajectory(&cfg).unwrap();
    assert_eq!(a.output.table, b.output.table);
    let mut other = cfg.clone();
    other.seed = 8;
    let c = run_trajectory(&other).unwrap();
    assert_ne!(a.output.table, c.output.table);
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = small_trajectory();
    let mut wide = cfg.clone();
    wide.jobs = Some(3);
    let a = run_trajectory(&cfg).unwrap();
    let b = run_trajectory(&wide).unwrap();
    assert_eq!(a.output.table, b.output.table);
}

#[test]
fn dataset_pairs_follow_the_flow() {
    let sys = System64::pendulum();
    let data = gen_dataset(&sys, 50, 0.1, DataMode::SingleTrajectory, task_seed(3, 0)).unwrap();
    assert_eq!(data.len(), 50);
    let dir = scratch("dataset");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("d.csv");
    data.write_csv(&path).unwrap();
    let lines = fs::read_to_string(&path).unwrap().lines().count();
    assert_eq!(lines, 51);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn configs_reject_bad_input() {
    assert!(ExperimentConfig::from_toml("kind = \"trajectory\"\nbogus = 1\n").is_err());
    assert!(ExperimentConfig::from_toml("kind = \"nope\"\n").is_err());

    let mut cfg = ExperimentConfig::preset(ExperimentKind::Trajectory);
    cfg.imde.order = 9;
    assert!(cfg.validate().is_err());

    let mut cfg = ExperimentConfig::preset(ExperimentKind::Trajectory);
    cfg.solver.tableaux = vec!["heun".into()];
    assert!(cfg.validate().is_err());

    let mut cfg = ExperimentConfig::preset(ExperimentKind::Hamiltonian);
    cfg.system.name = "lorenz".into();
    assert!(run(&cfg).is_err());
}

#[test]
fn presets_round_trip_through_toml() {
    for kind in [
        ExperimentKind::Trajectory,
        ExperimentKind::ErrorOrder,
        ExperimentKind::Hamiltonian,
        ExperimentKind::ImdeVerify,
    ] {
        let cfg = ExperimentConfig::preset(kind);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        back.validate().unwrap();
    }
}
