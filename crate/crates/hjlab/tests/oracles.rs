//! The live spectral oracles against frozen fixtures, and the corrector
//! pipeline against both.

use std::path::PathBuf;

use hjlab::config::RunConfig;
use hjlab::env::sample_realization;
use hjlab::io::csv::read_table;
use hjlab::theta::{effective_pipeline, lambda0_over, ThetaOptions};
use hjlab::validate::{floquet, hopf_cole, periodic_ground_state};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn potential(name: &str) -> impl Fn(f64) -> f64 {
    let two = if name == "cos_cos2" { 0.3 } else { 0.0 };
    move |x: f64| {
        (2.0 * std::f64::consts::PI * x).cos() + two * (4.0 * std::f64::consts::PI * x).cos()
    }
}

#[test]
fn finite_difference_ground_state_matches_fixture() {
    let t = read_table(&fixture("hopf_cole_lambda0.csv")).unwrap();
    let (e0, fd) = (t.column("e0").unwrap(), t.column("e0_fd2048").unwrap());
    for (k, name) in ["cos", "cos_cos2"].iter().enumerate() {
        let e = periodic_ground_state(potential(name), 1.0, 2048).unwrap();
        // Dense eigensolvers are accurate to about ‖A‖ ε ≈ 4 n² ε here.
        assert!((e - fd[k]).abs() < 1e-8, "{name}: {e} vs {}", fd[k]);
        assert!(
            (e - e0[k]).abs() < 1e-5,
            "{name}: {e} vs spectral {}",
            e0[k]
        );
    }
}

#[test]
fn floquet_log_derivatives_match_fixture() {
    for name in ["cos", "cos_cos2"] {
        let t = read_table(&fixture(&format!("floquet_{name}.csv"))).unwrap();
        let lambda = t.column("lambda").unwrap()[0];
        let (fmax, fmin, tmax, tmin) = floquet(potential(name), 1.0, lambda, 256).unwrap();
        let sup = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        assert!(sup(&fmax, &t.column("f_max").unwrap()) < 1e-7, "{name}");
        assert!(sup(&fmin, &t.column("f_min").unwrap()) < 1e-7, "{name}");
        assert!((tmax - t.column("theta_max").unwrap()[0]).abs() < 1e-8);
        assert!((tmin - t.column("theta_min").unwrap()[0]).abs() < 1e-8);
    }
}

#[test]
fn floquet_requires_level_above_spectrum() {
    let e0 = periodic_ground_state(potential("cos"), 1.0, 512).unwrap();
    assert!(floquet(potential("cos"), 1.0, -e0 - 0.05, 64).is_err());
}

#[test]
fn hopf_cole_record_is_consistent() {
    let cfg = RunConfig::default();
    let r = sample_realization(&cfg.env, 0).unwrap();
    let hc = hopf_cole(&r, 1.0, 1024, 32).unwrap();
    assert_eq!(hc.x.len(), 32);
    assert!((hc.lambda + hc.e0 - 1.0).abs() < 1e-15);
    assert!(hc.theta_max > 0.0 && (hc.theta_max + hc.theta_min).abs() < 1e-9);
    // The log-derivative averages to the exponent over one period.
    let mean = hc.f_max.iter().sum::<f64>() / 32.0;
    assert!((mean - hc.theta_max).abs() < 1e-6);
}

#[test]
fn effective_curve_matches_spectral_fixture() {
    let cfg = RunConfig::default();
    let reals = vec![sample_realization(&cfg.env, 0).unwrap()];
    let o = ThetaOptions {
        gap_tol: 0.1,
        ..ThetaOptions::default()
    };
    let window = (-16.0, 16.0);
    let l0 = lambda0_over(&reals, window, 1e-7, &o.cell).unwrap();
    let levels: Vec<f64> = (1..=12).map(|k| l0 + 0.25 * k as f64).collect();
    let thetas = [-1.5, -1.2, 0.0, 1.2, 1.5];
    let p = effective_pipeline(&reals, l0, &levels, window, &thetas, &o).unwrap();
    let t = read_table(&fixture("effective_cos.csv")).unwrap();
    let (tt, hh) = (t.column("theta").unwrap(), t.column("hbar").unwrap());
    for (th, v) in thetas.iter().zip(&p.curve.value) {
        let k = tt.iter().position(|x| (x - th).abs() < 1e-9).unwrap();
        assert!((v - hh[k]).abs() < 5e-3, "θ = {th}: {v} vs {}", hh[k]);
    }
}
