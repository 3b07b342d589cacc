use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn imde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("imde-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_config_key_exits_with_one() {
    let dir = scratch("badkey");
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, "kind = \"trajectory\"\n[train]\nepoch = 3\n").unwrap();
    let out = imde(&["trajectory", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn mismatched_kind_exits_with_one() {
    let dir = scratch("kind");
    let cfg = dir.join("h.toml");
    fs::write(&cfg, "kind = \"hamiltonian\"\n").unwrap();
    let out = imde(&["trajectory", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn imde_prints_euler_coefficients() {
    let out = imde(&[
        "imde",
        "--tableau",
        "euler",
        "--order",
        "1",
        "--point",
        "0,1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    // f(0,1) = (-10 sin 1, 0); Euler f_1 = f'f/2 = (0, -5 sin 1).
    let s = 1f64.sin();
    assert!((rows[0][0] + 10.0 * s).abs() < 1e-12 && rows[0][1].abs() < 1e-12);
    assert!(rows[1][0].abs() < 1e-12 && (rows[1][1] + 5.0 * s).abs() < 1e-12);
}

#[test]
fn point_of_wrong_dimension_is_rejected() {
    let out = imde(&["imde", "--point", "1,2,3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dataset_command_writes_csv() {
    let dir = scratch("dataset");
    let out = imde(&[
        "dataset",
        "--n",
        "20",
        "--step",
        "0.05",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.join("dataset_pendulum.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x_1,x_2,z_1,z_2,T"));
    assert_eq!(text.lines().count(), 21);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_suite_passes() {
    let dir = scratch("verify");
    let out = imde(&["verify", "--out", dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{stdout}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("results.csv").exists());
    assert!(dir.join("meta.json").exists());
    fs::remove_dir_all(&dir).unwrap();
}
