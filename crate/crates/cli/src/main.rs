use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imde_core::experiments::{self, gen_dataset, ExperimentConfig, ExperimentKind, RunOutput};
use imde_core::imde::imde_coeffs;
use imde_core::integrators::ButcherTableau;
use imde_core::{Error, VectorField};

#[derive(Parser)]
#[command(
    name = "imde",
    version,
    about = "Inverse modified equations for Neural ODE solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment file; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training set as CSV.
    Dataset {
        #[command(flatten)]
        common: Common,
        /// Number of pairs; overrides `data.n`.
        #[arg(long)]
        n: Option<usize>,
        /// Data step; overrides `data.step`.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Print IMDE coefficients f_0..f_K at a point.
    Imde {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "euler")]
        tableau: String,
        /// Truncation order; overrides `imde.order`.
        #[arg(long)]
        order: Option<usize>,
        /// Comma-separated point; the system's initial point when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
    },
    /// Learned, IMDE and true trajectories.
    Trajectory(Common),
    /// Error order of learned fields against the step.
    ErrorOrder(Common),
    /// Orbits, energies and symplectic defects.
    Hamiltonian(Common),
    /// IMDE invariant suite; exits 2 on any failed check.
    Verify(Common),
}

fn load(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::preset(kind),
    };
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "config describes a {} run, not {}",
            cfg.kind.as_str(),
            kind.as_str()
        )));
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.kind.as_str()))
}

fn run_kind(common: &Common, kind: ExperimentKind) -> Result<i32, Error> {
    let cfg = load(common, kind)?;
    let out: RunOutput = experiments::run(&cfg)?;
    let dir = out_dir(&cfg);
    out.write(&dir)?;
    for r in &out.table.rows {
        if r.metric.starts_with("order")
            || r.metric.ends_with(":pass")
            || r.metric.starts_with("l2_")
        {
            println!(
                "{:<12} {:<18} {:<40} {:.6e}",
                r.tableau.as_deref().unwrap_or("-"),
                r.compositions.map_or("-".into(), |s| format!("S={s}")),
                r.metric,
                r.value
            );
        }
    }
    for f in &out.flagged {
        eprintln!("flagged: {f}");
    }
    println!("wrote {}", dir.display());
    Ok(out.exit_code())
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Dataset { common, n, step } => {
            // Dataset generation reuses the trajectory defaults for data settings.
            let mut cfg = match &common.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::preset(ExperimentKind::Trajectory),
            };
            if let Some(n) = n {
                cfg.data.n = n;
            }
            if let Some(t) = step {
                cfg.data.step = Some(t);
            }
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let sys = cfg.system()?;
            let t = cfg.data_step()?;
            let seed = experiments::task_seed(cfg.seed, 0);
            let data = gen_dataset(&sys, cfg.data.n, t, cfg.data_mode()?, seed)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("out/dataset"));
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("dataset_{}.csv", sys.name()));
            data.write_csv(&path)?;
            println!("wrote {} pairs to {}", data.len(), path.display());
            Ok(0)
        }
        Command::Imde {
            common,
            tableau,
            order,
            point,
        } => {
            let mut cfg = match &common.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::preset(ExperimentKind::ImdeVerify),
            };
            if let Some(k) = order {
                cfg.imde.order = k;
            }
            cfg.validate()?;
            let sys = cfg.system()?;
            let tab = ButcherTableau::<f64>::builtin(&tableau)?;
            let x = point.unwrap_or_else(|| sys.initial_point());
            if x.len() != sys.dim() {
                return Err(Error::Config(format!(
                    "point has {} components, {} expects {}",
                    x.len(),
                    sys.name(),
                    sys.dim()
                )));
            }
            let coeffs = imde_coeffs(&sys, &tab, &x, cfg.imde.order)?;
            let mut text = String::from("k");
            for i in 1..=x.len() {
                text.push_str(&format!(",f{i}"));
            }
            text.push('\n');
            for (k, c) in coeffs.iter().enumerate() {
                text.push_str(&k.to_string());
                for v in c {
                    text.push_str(&format!(",{v:.17e}"));
                }
                text.push('\n');
            }
            print!("{text}");
            if let Some(dir) = common.out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("imde_coeffs.csv"), text)?;
            }
            Ok(0)
        }
        Command::Trajectory(c) => run_kind(&c, ExperimentKind::Trajectory),
        Command::ErrorOrder(c) => run_kind(&c, ExperimentKind::ErrorOrder),
        Command::Hamiltonian(c) => run_kind(&c, ExperimentKind::Hamiltonian),
        Command::Verify(c) => run_kind(&c, ExperimentKind::ImdeVerify),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
