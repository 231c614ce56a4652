use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn hjlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hjlab"))
}

/// Writes `body` plus an output directory inside `dir` to `dir/run.toml`.
fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    let out = dir.join("out");
    std::fs::write(
        &p,
        format!("run.out_dir = {:?}\n{body}", out.to_string_lossy()),
    )
    .unwrap();
    p
}

fn code(cmd: &str, cfg: &Path) -> i32 {
    hjlab()
        .arg(cmd)
        .arg(cfg)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn files(dir: &Path, prefix: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(prefix))
        .collect();
    v.sort();
    v
}

#[test]
fn usage_errors() {
    let out = hjlab().arg("frobnicate").arg("x.toml").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(hjlab().output().unwrap().status.code(), Some(2));
    assert_eq!(
        hjlab().arg("--help").output().unwrap().status.code(),
        Some(0)
    );
    assert_eq!(
        hjlab()
            .args(["lambda0", "a.toml", "b.toml"])
            .output()
            .unwrap()
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_errors_exit_2() {
    let d = TempDir::new().unwrap();
    assert_eq!(code("lambda0", &d.path().join("missing.toml")), 2);
    let cases = [
        "theta.lambda_grid = []",
        "run.verbose = true",
        "env.form = \"separable\"\nenv.potential = { model = \"random_fourier\", modes = 4, amplitude = 1.0, decay = -1.0 }",
        "cell.window = [5.0, -5.0]",
    ];
    for body in cases {
        let cfg = config(d.path(), body);
        assert_eq!(code("effective", &cfg), 2, "{body}");
    }
}

#[test]
fn sample_env_writes_one_manifest_per_seed() {
    let d = TempDir::new().unwrap();
    for seeds in [vec![0u64], (0..8).collect()] {
        let cfg = config(d.path(), &format!("run.seeds = {seeds:?}"));
        assert_eq!(code("sample-env", &cfg), 0);
        let dir = d.path().join("out/sample-env");
        assert_eq!(files(&dir, "realization_seed").len(), seeds.len());
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(m["artifacts"].as_array().unwrap().len(), seeds.len());
        assert_eq!(m["seeds"].as_array().unwrap().len(), seeds.len());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

#[test]
fn outputs_are_reproducible() {
    let d = TempDir::new().unwrap();
    let cfg = config(d.path(), "run.seeds = [3, 4]\ncell.window = [-8.0, 8.0]");
    let read = |name: &str| std::fs::read(d.path().join("out").join(name)).unwrap();
    assert_eq!(code("sample-env", &cfg), 0);
    assert_eq!(code("lambda0", &cfg), 0);
    let first = (
        read("sample-env/realization_seed3.json"),
        read("lambda0/lambda0.csv"),
    );
    assert_eq!(code("sample-env", &cfg), 0);
    assert_eq!(code("lambda0", &cfg), 0);
    assert_eq!(
        first,
        (
            read("sample-env/realization_seed3.json"),
            read("lambda0/lambda0.csv")
        )
    );
    let csv = String::from_utf8(first.1).unwrap();
    assert!(csv.starts_with("seed,lambda0,bracket_lo,bracket_hi\n"));
    assert!(!csv.contains('\r'));
}

#[test]
fn validate_exit_codes_follow_checks() {
    let d = TempDir::new().unwrap();
    let cfg = config(
        d.path(),
        "validate.suite = \"class\"\nvalidate.double_run = true",
    );
    assert_eq!(code("validate", &cfg), 0);
    let dir = d.path().join("out/validate");
    let table = std::fs::read_to_string(dir.join("summary.md")).unwrap();
    assert!(table.contains("| class.membership[0] | pass |"));
    assert!(table.contains("| reproducibility | pass |"));
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("reports.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);

    // The cosine potential with α1 = 1 violates the x-Lipschitz bound.
    let cfg = config(
        d.path(),
        "validate.suite = \"class\"\nenv.form = \"separable\"\nenv.potential = { model = \"periodic_cosine\", terms = [{ amp = 1.0, harmonic = 1 }] }",
    );
    assert_eq!(code("validate", &cfg), 1);
}

#[test]
fn runtime_errors_exit_3() {
    let d = TempDir::new().unwrap();
    let cfg = config(
        d.path(),
        "parabolic.t_end = 1.0\nparabolic.solver.max_steps = 10",
    );
    let out = hjlab().arg("parabolic").arg(&cfg).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn effective_records_every_stage() {
    let d = TempDir::new().unwrap();
    let body = "cell.window = [-12.0, 12.0]\ntheta.window = [-12.0, 12.0]\ntheta.lambda_offsets = [0.5, 1.0, 2.0]\ntheta.theta_grid = [-1.0, 0.0, 1.0]\ntheta.gap_tol = 0.5\nrun.plots = true";
    let cfg = config(d.path(), body);
    assert_eq!(code("effective", &cfg), 0);
    let dir = d.path().join("out/effective");
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let arts: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for a in [
        "theta_map.csv",
        "gaps.json",
        "theta_map.svg",
        "effective.csv",
        "effective.svg",
    ] {
        assert!(arts.contains(&a), "{a} missing from {arts:?}");
        assert!(dir.join(a).exists());
    }
    let csv = std::fs::read_to_string(dir.join("effective.csv")).unwrap();
    let vals: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // θ = 0 lies on the flat part at λ0; θ = ±1 above it.
    assert!((vals[0] - vals[2]).abs() < 1e-6);
    assert!(vals[0] > vals[1] + 0.5);
}
