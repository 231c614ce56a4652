use hjlab::config::RunConfig;
use hjlab::par;
use hjlab::parabolic::{solve_ehj, Grid1D, SolverOptions};
use hjlab::theta::{build_theta_map_on, realizations, ThetaOptions};

#[test]
fn worker_count_does_not_change_results() {
    let cfg = RunConfig::default();
    let reals = realizations(&cfg.env, &[0, 1, 2]).unwrap();
    let grid = Grid1D::centered(40.0, 1.0 / 64.0, 0.5, 0.9).unwrap();
    let o = SolverOptions {
        n_samples: 5,
        ..SolverOptions::default()
    };
    let run = |w| {
        par::with_workers(w, || {
            let p = solve_ehj(&reals[0], &grid, 0.2, &[], &o, None).unwrap();
            let m = build_theta_map_on(
                &reals,
                &[1.0, 2.0],
                (-6.0, 6.0),
                None,
                &ThetaOptions::default(),
            )
            .unwrap();
            (p.slope_series, p.u_center, m.samples)
        })
    };
    let (a, b) = (run(1), run(4));
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    assert_eq!(bits(&a.1), bits(&b.1));
    assert_eq!(a.2, b.2);
}
