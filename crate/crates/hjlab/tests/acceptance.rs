//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use hjlab::cell::{bounded_solution_window, estimate_lambda0, CellOptions, Extremal};
use hjlab::config::{ParabolicSection, RunConfig};
use hjlab::env::{
    sample_realization, ClassParams, EnvironmentSpec, FieldModel, Kernel, Realization,
};
use hjlab::io::csv::read_table;
use hjlab::parabolic::{epsilon_study, EpsOptions};
use hjlab::theta::{
    build_theta_map_on, effective_pipeline, lambda0_over, realizations, ThetaOptions,
};
use hjlab::validate::{
    bound_suite, bridge_check, comparison_suite, duality_on, oracle_constant_coeff,
    oracle_hopf_cole, run_parabolic, CheckReport, Context,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn with_env(env: EnvironmentSpec) -> RunConfig {
    RunConfig {
        env,
        ..RunConfig::default()
    }
}

fn cosine() -> EnvironmentSpec {
    RunConfig::default().env
}

fn cosine_cos2() -> EnvironmentSpec {
    let terms = r#"
        env.form = "separable"
        env.kernel = { kind = "abs_power", gamma = 2.0 }
        env.potential = { model = "periodic_cosine", terms = [{ amp = 1.0, harmonic = 1 }, { amp = 0.3, harmonic = 2 }] }
        env.class = { alpha0 = 1.0, alpha1 = 11.0, gamma = 2.0, kappa = 1.0, a_min = 1.0 }
    "#;
    RunConfig::from_toml(terms).unwrap().env
}

fn double_well() -> EnvironmentSpec {
    EnvironmentSpec::double_well(FieldModel::cosine(0.5)).with_class(ClassParams {
        alpha0: 0.5,
        alpha1: 4.0,
        gamma: 4.0,
        ..ClassParams::default()
    })
}

fn random_double_well() -> EnvironmentSpec {
    let f = FieldModel::RandomFourier {
        modes: 8,
        amplitude: 0.5,
        decay: 1.0,
        length: 4.0,
        jitter: 0.1,
        mean: 0.0,
    };
    EnvironmentSpec::double_well(f).with_class(ClassParams {
        alpha0: 0.5,
        alpha1: 8.0,
        gamma: 4.0,
        ..ClassParams::default()
    })
}

fn random() -> EnvironmentSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/random.toml");
    RunConfig::load(&path).unwrap().env
}

fn envs() -> Vec<(&'static str, EnvironmentSpec)> {
    vec![
        ("cosine", cosine()),
        ("double_well", double_well()),
        ("random", random()),
    ]
}

fn sample(spec: &EnvironmentSpec) -> Realization {
    sample_realization(spec, 0).unwrap()
}

fn lambda0(r: &Realization) -> f64 {
    let cfg = RunConfig::default();
    estimate_lambda0(
        r,
        RunConfig::window(cfg.cell.window),
        cfg.cell.lambda0_tol,
        &cfg.cell.solver,
    )
    .unwrap()
    .value
}

fn theta_grid_9() -> Vec<f64> {
    (0..9).map(|k| -2.0 + 0.5 * k as f64).collect()
}

/// Outcome of one criterion: verdict, a one-line summary and failure details.
struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            pass: true,
            summary: String::new(),
            details: vec![],
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.pass = false;
            self.details.push(what.into());
        }
    }

    fn report(&mut self, label: &str, r: &CheckReport) {
        let worst: Vec<String> = r
            .tolerances
            .keys()
            .filter(|k| !k.contains('['))
            .map(|k| format!("{k}={:.3e}", r.measured[k]))
            .collect();
        if !worst.is_empty() {
            self.summary
                .push_str(&format!(" {label}[{}]", worst.join(" ")));
        }
        self.check(
            r.passed(),
            format!(
                "{label}: {} {:?} {:?} {:?}",
                r.id, r.status, r.measured, r.notes
            ),
        );
    }
}

fn constant_coefficient() -> Verdict {
    let mut v = Verdict::new();
    let specs = [
        (
            "p^2",
            EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, FieldModel::constant(0.0)),
        ),
        (
            "|p|^3",
            EnvironmentSpec::separable(Kernel::AbsPower { gamma: 3.0 }, FieldModel::constant(0.0))
                .with_class(ClassParams {
                    gamma: 3.0,
                    alpha1: 3.0,
                    ..ClassParams::default()
                }),
        ),
        (
            "(p^2-1)^2",
            EnvironmentSpec::double_well(FieldModel::constant(0.0)).with_class(ClassParams {
                alpha0: 0.5,
                alpha1: 4.0,
                gamma: 4.0,
                ..ClassParams::default()
            }),
        ),
    ];
    for (name, spec) in specs {
        let cfg = with_env(spec);
        let r = sample(&cfg.env);
        let rep = oracle_constant_coeff(&Context::new(&cfg, None), &r, &theta_grid_9());
        v.report(name, &rep);
    }
    v
}

fn hopf_cole() -> Verdict {
    let mut v = Verdict::new();
    let lambdas = read_table(&fixture("hopf_cole_lambda0.csv")).unwrap();
    let fixture_l0 = lambdas.column("lambda0").unwrap();
    for (k, (name, spec)) in [("cos", cosine()), ("cos_cos2", cosine_cos2())]
        .into_iter()
        .enumerate()
    {
        let cfg = with_env(spec);
        let r = sample(&cfg.env);
        let live = oracle_hopf_cole(&Context::new(&cfg, None), &r);
        v.report(&format!("{name}/live"), &live);

        // Frozen spectral fixtures: λ0 and the maximal corrector at λ0 + 1.
        let l0 = live
            .measured
            .get("lambda0_cell")
            .copied()
            .unwrap_or(f64::NAN);
        let e0 = (l0 - fixture_l0[k]).abs();
        let t = read_table(&fixture(&format!("floquet_{name}.csv"))).unwrap();
        let (xs, lam, fmax) = (
            t.column("x").unwrap(),
            t.column("lambda").unwrap()[0],
            t.column("f_max").unwrap(),
        );
        let o = CellOptions {
            dx_out: 1.0 / 256.0,
            ..CellOptions::default()
        };
        let f = bounded_solution_window(&r, lam, (-24.0, 24.0), Extremal::Maximal, &o).unwrap();
        let sup = xs
            .iter()
            .zip(&fmax)
            .map(|(x, g)| (f.value_at(*x) - g).abs())
            .fold(0.0, f64::max);
        v.summary.push_str(&format!(
            " {name}/fixture[lambda0_err={e0:.2e} f_max_sup={sup:.2e}]"
        ));
        v.check(e0 <= 1e-4, format!("{name}: λ0 error {e0}"));
        v.check(sup <= 1e-3, format!("{name}: f_max sup error {sup}"));
    }
    v
}

fn theta_properties() -> Verdict {
    let mut v = Verdict::new();
    let spec = random();
    let seeds: Vec<u64> = (0..8).collect();
    let reals = realizations(&spec, &seeds).unwrap();
    let o = ThetaOptions::default();
    let cfg = RunConfig::default();
    let window = (-40.0, 40.0);
    let l0 = lambda0_over(&reals, window, cfg.cell.lambda0_tol, &o.cell).unwrap();
    let levels: Vec<f64> = (1..=20).map(|k| l0 + 10.0 * k as f64 / 20.0).collect();
    let map = build_theta_map_on(&reals, &levels, window, Some(l0), &o).unwrap();
    let min_stderr = map
        .samples
        .iter()
        .map(|s| s.stderr)
        .fold(f64::INFINITY, f64::min);
    let max_stderr = map.samples.iter().map(|s| s.stderr).fold(0.0, f64::max);
    v.summary = format!(
        " lambda0={l0:.5} levels={} failed={} stderr=[{min_stderr:.2e},{max_stderr:.2e}] monotone={} disjoint={}",
        map.samples.len(),
        map.failed.len(),
        map.monotone,
        map.disjoint
    );
    v.check(
        map.samples.len() == 20,
        format!("failed levels {:?}", map.failed),
    );
    v.check(
        map.monotone && map.disjoint,
        format!("flags {:?}", map.flags),
    );
    v
}

fn duality() -> Verdict {
    let mut v = Verdict::new();
    let r = sample(&cosine());
    let l0 = lambda0(&r);
    let d = duality_on(
        &r,
        l0 + 1.0,
        1.0 / 256.0,
        5.0,
        12.0,
        &CellOptions::default(),
    )
    .unwrap();
    v.summary = format!(
        " sup_drift={:.3e} (λ = λ0 + 1, dx = 1/256, t = 5)",
        d.sup_drift
    );
    v.check(d.sup_drift <= 5e-3, format!("drift {}", d.sup_drift));
    v
}

fn parabolic_agrees(v: &mut Verdict, label: &str, r: &Realization, theta: f64, target: f64) {
    let p = ParabolicSection {
        theta,
        t_end: 30.0,
        ..ParabolicSection::default()
    };
    let run = run_parabolic(r, theta, &p).unwrap();
    let mid = 0.5 * (run.hl_est + run.hu_est);
    let width = run.hu_est - run.hl_est;
    v.summary.push_str(&format!(
        " {label}(θ={theta:.3}: Δ={:.2e} width={width:.2e})",
        (mid - target).abs()
    ));
    v.check(
        (mid - target).abs() <= 5e-2,
        format!("{label} θ={theta}: parabolic {mid} vs {target}"),
    );
    v.check(width <= 1e-2, format!("{label} θ={theta}: width {width}"));
}

fn flat_parts() -> Verdict {
    let mut v = Verdict::new();
    let o = ThetaOptions::default();
    let cfg = RunConfig::default();
    let window = (-24.0, 24.0);
    let levels =
        |l0: f64| -> Vec<f64> { [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|d| l0 + d).collect() };

    // Periodic double well: interior solutions fill the middle of the image.
    let reals = realizations(&double_well(), &[0]).unwrap();
    let l0 = lambda0_over(&reals, window, cfg.cell.lambda0_tol, &o.cell).unwrap();
    let thetas = [-0.5, 0.0, 0.5];
    let p = effective_pipeline(&reals, l0, &levels(l0), window, &thetas, &o).unwrap();
    v.summary
        .push_str(&format!(" periodic: gaps={}", p.scan.gaps.len()));
    for g in &p.scan.gaps {
        v.check(
            g.labels_agree(o.lambda_tol),
            format!("periodic gap labels {g:?}"),
        );
    }
    v.check(
        p.scan.unresolved.is_empty(),
        format!("periodic unresolved {:?}", p.scan.unresolved),
    );
    for (t, h) in thetas.iter().zip(&p.curve.value) {
        parabolic_agrees(&mut v, "periodic", &reals[0], *t, *h);
    }

    // Random double well: gaps labelled on both sides, parabolic slope at
    // interior points equal to the label.
    let reals = realizations(&random_double_well(), &[0]).unwrap();
    let l0 = lambda0_over(&reals, window, cfg.cell.lambda0_tol, &o.cell).unwrap();
    let p = effective_pipeline(&reals, l0, &levels(l0), window, &[0.0], &o).unwrap();
    v.summary
        .push_str(&format!(" random: gaps={}", p.scan.gaps.len()));
    v.check(
        p.scan.unresolved.is_empty(),
        format!("random unresolved {:?}", p.scan.unresolved),
    );
    for g in &p.scan.gaps {
        v.check(
            g.labels_agree(o.lambda_tol),
            format!("random gap labels {g:?}"),
        );
        for s in [0.25, 0.5, 0.75] {
            parabolic_agrees(
                &mut v,
                "random",
                &reals[0],
                g.theta1 + s * (g.theta2 - g.theta1),
                g.lambda(),
            );
        }
    }
    v
}

fn bridging() -> Verdict {
    let mut v = Verdict::new();
    for (name, spec) in envs() {
        let cfg = with_env(spec);
        let r = sample(&cfg.env);
        let rep = bridge_check(&Context::new(&cfg, None), &r, lambda0(&r));
        v.report(name, &rep);
    }
    v
}

fn eps_convergence() -> Verdict {
    let mut v = Verdict::new();
    let r = sample(&cosine());
    let study = epsilon_study(
        &r,
        0.0,
        &[0.25, 0.125, 0.0625, 0.03125],
        1.0,
        &EpsOptions::default(),
    )
    .unwrap();
    let diffs: Vec<f64> = study.rows.iter().filter_map(|r| r.diff_prev).collect();
    let last = *diffs.last().unwrap();
    let limit = study.extrapolated.unwrap_or(f64::NAN);

    let reals = vec![r];
    let o = ThetaOptions::default();
    let window = (-24.0, 24.0);
    let l0 = lambda0_over(&reals, window, 1e-7, &o.cell).unwrap();
    let levels: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|d| l0 + d).collect();
    let p = effective_pipeline(&reals, l0, &levels, window, &[0.0], &o).unwrap();
    let h0 = p.curve.value[0];
    v.summary = format!(
        " diffs=[{}] extrapolated={limit:.6} effective(0)={h0:.6}",
        diffs
            .iter()
            .map(|d| format!("{d:.2e}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    v.check(study.diffs_decreasing, "differences not decreasing");
    v.check(last <= 1e-2, format!("final difference {last}"));
    v.check(
        (limit - h0).abs() <= 2e-2,
        format!("extrapolated {limit} vs {h0}"),
    );
    v
}

fn comparison() -> Verdict {
    let mut v = Verdict::new();
    for (k, (name, spec)) in envs().into_iter().enumerate() {
        let cfg = with_env(spec);
        let r = sample(&cfg.env);
        let rep = comparison_suite(&Context::new(&cfg, None), &r, 100, k as u64);
        v.summary.push_str(&format!(
            " {name}[violations={}]",
            rep.measured["violations"]
        ));
        v.check(
            rep.passed(),
            format!("{name}: {:?} {:?}", rep.measured, rep.notes),
        );
    }
    v
}

fn bounds() -> Verdict {
    let mut v = Verdict::new();
    for (name, spec) in envs() {
        let mut cfg = with_env(spec);
        cfg.cell.corrector_offsets = vec![0.1, 0.5, 1.0, 2.0];
        let r = sample(&cfg.env);
        for rep in bound_suite(&Context::new(&cfg, None), &r, lambda0(&r)) {
            let band = rep
                .measured
                .iter()
                .filter(|(k, _)| k.starts_with("band_excess"))
                .map(|(_, v)| *v);
            let band = band.fold(f64::NEG_INFINITY, f64::max);
            if band.is_finite() {
                v.summary
                    .push_str(&format!(" {name}[band_excess={band:.2e}]"));
            }
            if let Some(s) = rep.measured.get("fit_slope") {
                v.summary.push_str(&format!(" {name}[slope={s:.3}]"));
            }
            v.check(
                rep.passed(),
                format!(
                    "{name}: {} {:?} {:?} {:?}",
                    rep.id, rep.status, rep.measured, rep.notes
                ),
            );
        }
    }
    v
}

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("constant-coefficient exactness", constant_coefficient),
        ("Hopf-Cole oracle", hopf_cole),
        ("image monotone and disjoint", theta_properties),
        ("corrector duality", duality),
        ("flat parts", flat_parts),
        ("bridging residuals", bridging),
        ("epsilon convergence", eps_convergence),
        ("discrete comparison", comparison),
        ("corrector bounds", bounds),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.contains(f.as_str()) || *f == (i + 1).to_string())
        {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {}. {name} ({secs:.1}s):{}", i + 1, v.summary);
        for d in &v.details {
            println!("    {d}");
        }
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
