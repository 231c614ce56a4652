//! Named, reproducible check suites and the independent oracles they use.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{detect_gap_level, mollify_glue, shoot_descend, Evidence, Verdict};
use crate::cell::{
    bounded_solution_window, check_ordering, estimate_lambda0, min_h, p_bounds_with, CellOptions,
    CorrectorSolution, Extremal, Ordering,
};
use crate::config::{RunConfig, SUITES};
use crate::env::{verify_class, FieldModel, Form, Kernel, Realization};
use crate::error::{Error, Result};
use crate::io::write_json;
use crate::par;
use crate::parabolic::{
    comparison_check, duality_drift, front_speed, solve_ehj, DualityReport, Grid1D, SolverOptions,
};
use crate::theta::{
    build_theta_map_on, effective_pipeline, invert_to_effective, lambda0_over, realizations,
    refine_gaps, ThetaOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

/// Outcome of one check. `status` is `Pass` exactly when every recorded
/// inequality held.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: String,
    pub status: Status,
    pub measured: BTreeMap<String, f64>,
    /// Bound per measured quantity; the sign convention is in `relations`.
    pub tolerances: BTreeMap<String, f64>,
    /// `"<="` or `">="` per bounded quantity.
    pub relations: BTreeMap<String, String>,
    pub artifacts: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(id: &str, seeds: &[u64], config_hash: &str) -> Self {
        CheckReport {
            id: id.into(),
            status: Status::Pass,
            measured: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            relations: BTreeMap::new(),
            artifacts: vec![],
            seeds: seeds.to_vec(),
            config_hash: config_hash.into(),
            notes: vec![],
        }
    }

    fn fail(&mut self) {
        self.status = Status::Fail;
    }

    pub fn measure(&mut self, name: &str, value: f64) {
        self.measured.insert(name.into(), value);
    }

    /// Records `value <= tol`.
    pub fn at_most(&mut self, name: &str, value: f64, tol: f64) {
        self.measure(name, value);
        self.tolerances.insert(name.into(), tol);
        self.relations.insert(name.into(), "<=".into());
        if !(value <= tol) {
            self.fail();
        }
    }

    /// Records `value >= tol`.
    pub fn at_least(&mut self, name: &str, value: f64, tol: f64) {
        self.measure(name, value);
        self.tolerances.insert(name.into(), tol);
        self.relations.insert(name.into(), ">=".into());
        if !(value >= tol) {
            self.fail();
        }
    }

    /// Records `value > 0`.
    pub fn positive(&mut self, name: &str, value: f64) {
        self.measure(name, value);
        self.tolerances.insert(name.into(), 0.0);
        self.relations.insert(name.into(), ">".into());
        if !(value > 0.0) {
            self.fail();
        }
    }

    /// Records a boolean assertion as 1 (held) or 0.
    pub fn require(&mut self, name: &str, ok: bool) {
        self.at_least(name, if ok { 1.0 } else { 0.0 }, 1.0);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Marks the check inconclusive unless it already failed.
    pub fn inconclusive(&mut self, why: impl Into<String>) {
        if self.status == Status::Pass {
            self.status = Status::Inconclusive;
        }
        self.notes.push(why.into());
    }

    fn errored(mut self, e: &Error) -> Self {
        self.inconclusive(format!("error: {e}"));
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Where a suite writes artifacts, and what it stamps on its reports.
#[derive(Clone, Debug)]
pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub hash: String,
    pub out_dir: Option<PathBuf>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig, out_dir: Option<&Path>) -> Self {
        Context {
            cfg,
            hash: cfg.hash(),
            out_dir: out_dir.map(Path::to_path_buf),
        }
    }

    fn report(&self, id: &str) -> CheckReport {
        CheckReport::new(id, &self.cfg.run.seeds, &self.hash)
    }

    fn artifact(&self, name: &str) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(name))
    }

    fn cell(&self) -> CellOptions {
        self.cfg.cell.solver
    }

    fn cell_window(&self) -> (f64, f64) {
        RunConfig::window(self.cfg.cell.window)
    }
}

fn first_seed(ctx: &Context) -> Result<Realization> {
    Ok(realizations(&ctx.cfg.env, &ctx.cfg.run.seeds[..1])?.remove(0))
}

// ---------------------------------------------------------------- oracles

/// Principal periodic eigenpair of `-φ'' - V φ` and the Floquet
/// log-derivatives `φ'/φ` of `φ'' = (λ - V) φ` for `H = p² + V`, `a ≡ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopfCole {
    pub period: f64,
    /// Lowest eigenvalue of the finite-difference operator.
    pub e0: f64,
    pub nodes_per_period: usize,
    pub lambda: f64,
    /// Nodes `k period / n` of one period.
    pub x: Vec<f64>,
    pub f_max: Vec<f64>,
    pub f_min: Vec<f64>,
    pub theta_max: f64,
    pub theta_min: f64,
}

/// Solves the cyclic tridiagonal system with constant off-diagonal `c`,
/// diagonal `d` and right-hand side `b` (Sherman-Morrison on Thomas).
fn cyclic_solve(d: &[f64], c: f64, b: &[f64]) -> Vec<f64> {
    let n = d.len();
    let thomas = |diag: &[f64], rhs: &[f64]| {
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = c / diag[0];
        dp[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - c * cp[i - 1];
            cp[i] = c / m;
            dp[i] = (rhs[i] - c * dp[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        x
    };
    let gamma = -d[0];
    let mut dd = d.to_vec();
    dd[0] -= gamma;
    dd[n - 1] -= c * c / gamma;
    let y = thomas(&dd, b);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c;
    let z = thomas(&dd, &u);
    let k = (y[0] + c * y[n - 1] / gamma) / (1.0 + z[0] + c * z[n - 1] / gamma);
    y.iter().zip(&z).map(|(y, z)| y - k * z).collect()
}

/// Lowest eigenvalue of the periodic finite-difference operator `-D² - V`
/// by shifted inverse iteration.
pub fn periodic_ground_state(v: impl Fn(f64) -> f64, period: f64, n: usize) -> Result<f64> {
    if n < 8 {
        return Err(Error::Precondition(
            "need at least 8 nodes per period".into(),
        ));
    }
    let h = period / n as f64;
    let vs: Vec<f64> = (0..n).map(|i| v(i as f64 * h)).collect();
    let vmax = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = -vmax - 1.0;
    let off = -1.0 / (h * h);
    let diag: Vec<f64> = vs.iter().map(|v| 2.0 / (h * h) - v - shift).collect();
    let mut y = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..500 {
        let z = cyclic_solve(&diag, off, &y);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z: Vec<f64> = z.iter().map(|v| v / norm).collect();
        let change = z
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        y = z;
        if change <= 1e-13 {
            // ⟨y, (A - s)⁻¹ y⟩ = 1 / (E - s) without the 1/h² cancellation of yᵀAy.
            let z = cyclic_solve(&diag, off, &y);
            return Ok(shift + 1.0 / y.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    Err(Error::Numerical(
        "inverse iteration did not converge".into(),
    ))
}

/// `φ'' = (λ - V) φ` over one period by RK4 with `steps` steps, from `(φ, φ')`.
/// Returns the state at every `every`-th step, including the start.
fn linear_rk4(
    v: &impl Fn(f64) -> f64,
    lambda: f64,
    y0: [f64; 2],
    period: f64,
    steps: usize,
    every: usize,
) -> Vec<[f64; 2]> {
    let h = period / steps as f64;
    let rhs = |x: f64, y: [f64; 2]| [y[1], (lambda - v(x)) * y[0]];
    let mut y = y0;
    let mut out = vec![y];
    for k in 0..steps {
        let x = k as f64 * h;
        let k1 = rhs(x, y);
        let k2 = rhs(
            x + 0.5 * h,
            [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]],
        );
        let k3 = rhs(
            x + 0.5 * h,
            [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]],
        );
        let k4 = rhs(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if (k + 1) % every == 0 {
            out.push(y);
        }
    }
    out
}

/// Floquet log-derivatives at level `λ` above the periodic spectrum bottom.
pub fn floquet(
    v: impl Fn(f64) -> f64,
    period: f64,
    lambda: f64,
    nodes: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let refine = (4096 / nodes.max(1)).max(4);
    let steps = nodes * refine;
    let a = linear_rk4(&v, lambda, [1.0, 0.0], period, steps, steps);
    let b = linear_rk4(&v, lambda, [0.0, 1.0], period, steps, steps);
    let (m11, m21, m12, m22) = (a[1][0], a[1][1], b[1][0], b[1][1]);
    let tr = m11 + m22;
    if !(tr > 2.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "monodromy trace {tr} not hyperbolic at λ = {lambda}"
        )));
    }
    let disc = (tr * tr - 4.0).sqrt();
    let branch = |mu: f64| -> Result<(Vec<f64>, f64)> {
        // Eigenvector (1, s) of the monodromy for the multiplier μ.
        let s = if m12.abs() > m21.abs() * 1e-12 && m12 != 0.0 {
            (mu - m11) / m12
        } else {
            m21 / (mu - m22)
        };
        let traj = linear_rk4(&v, lambda, [1.0, s], period, steps, refine);
        let f: Vec<f64> = traj[..nodes].iter().map(|y| y[1] / y[0]).collect();
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("Floquet solution vanished".into()));
        }
        Ok((f, mu.ln() / period))
    };
    let (f_max, t_max) = branch(0.5 * (tr + disc))?;
    let (f_min, t_min) = branch(0.5 * (tr - disc))?;
    Ok((f_max, f_min, t_max, t_min))
}

/// Potential and period when the environment is `p² + V` with `a ≡ 1` and
/// periodic cosine `V`.
pub fn hopf_cole_target(r: &Realization) -> Option<(f64, impl Fn(f64) -> f64 + '_)> {
    let s = r.spec();
    let quadratic = matches!(s.form, Form::Separable)
        && matches!(s.kernel, Some(Kernel::AbsPower { gamma }) if gamma == 2.0);
    let unit = matches!(s.diffusion, FieldModel::Constant { value } if value == 1.0);
    match (&s.potential, quadratic && unit) {
        (FieldModel::PeriodicCosine { period, .. }, true) => {
            Some((*period, move |x: f64| r.eval_h(x, 0.0)))
        }
        _ => None,
    }
}

pub fn hopf_cole(
    r: &Realization,
    lambda_offset: f64,
    nodes_fd: usize,
    nodes_out: usize,
) -> Result<HopfCole> {
    let (period, v) = hopf_cole_target(r).ok_or_else(|| {
        Error::Precondition("Hopf-Cole oracle needs H = p² + periodic V and a ≡ 1".into())
    })?;
    let e0 = periodic_ground_state(&v, period, nodes_fd)?;
    let lambda = -e0 + lambda_offset;
    let (f_max, f_min, theta_max, theta_min) = floquet(&v, period, lambda, nodes_out)?;
    Ok(HopfCole {
        period,
        e0,
        nodes_per_period: nodes_fd,
        lambda,
        x: (0..nodes_out)
            .map(|k| k as f64 * period / nodes_out as f64)
            .collect(),
        f_max,
        f_min,
        theta_max,
        theta_min,
    })
}

/// Mean over whole periods near the window centre, sampled at the oracle nodes.
fn period_mean(f: &CorrectorSolution, x0: f64, period: f64, nodes: usize, periods: usize) -> f64 {
    let n = nodes * periods;
    (0..n)
        .map(|k| f.value_at(x0 + k as f64 * period / nodes as f64))
        .sum::<f64>()
        / n as f64
}

/// λ0 and the extremal correctors at `λ0 + 1` against the Hopf-Cole oracle.
pub fn oracle_hopf_cole(ctx: &Context, r: &Realization) -> CheckReport {
    let mut rep = ctx.report("cell.hopf_cole");
    let res = (|| -> Result<()> {
        let hc = hopf_cole(r, 1.0, 2048, 64)?;
        let o = ctx.cell();
        let w = ctx.cell_window();
        let est = estimate_lambda0(r, w, ctx.cfg.cell.lambda0_tol, &o)?;
        rep.measure("lambda0_oracle", -hc.e0);
        rep.measure("lambda0_cell", est.value);
        rep.at_most("lambda0_abs_err", (est.value + hc.e0).abs(), 1e-4);
        let x0 = (0.5 * (w.0 + w.1) / hc.period).floor() * hc.period;
        for (ext, name, oracle, mean) in [
            (Extremal::Maximal, "max", &hc.f_max, hc.theta_max),
            (Extremal::Minimal, "min", &hc.f_min, hc.theta_min),
        ] {
            let f = bounded_solution_window(r, hc.lambda, w, ext, &o)?;
            let sup =
                hc.x.iter()
                    .zip(oracle)
                    .map(|(x, g)| (f.value_at(x0 + x) - g).abs())
                    .fold(0.0, f64::max);
            rep.at_most(&format!("f_{name}_sup_err"), sup, 1e-3);
            let m = period_mean(&f, x0 - 2.0 * hc.period, hc.period, hc.x.len(), 4);
            rep.at_most(&format!("theta_{name}_abs_err"), (m - mean).abs(), 1e-3);
        }
        Ok(())
    })();
    match res {
        Ok(()) => rep,
        Err(e) => rep.errored(&e),
    }
}

/// λ levels `λ0 + span (k/n)²`, doubling `span` until Θ covers the θ grid.
fn covering_map(
    reals: &[Realization],
    lambda0: f64,
    theta_grid: &[f64],
    window: (f64, f64),
    o: &ThetaOptions,
) -> Result<crate::theta::ThetaMap> {
    let (tlo, thi) = theta_grid
        .iter()
        .fold((0.0f64, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    let mut span = 1.0;
    for _ in 0..12 {
        let n = 48;
        let levels: Vec<f64> = (0..=n)
            .map(|k| lambda0 + span * (k as f64 / n as f64).powi(2))
            .collect();
        let map = build_theta_map_on(reals, &levels, window, Some(lambda0), o)?;
        let cloud = map.cloud();
        if let (Some(first), Some(last)) = (cloud.first(), cloud.last()) {
            if first.0 <= tlo && last.0 >= thi {
                return Ok(map);
            }
        }
        span *= 2.0;
    }
    Err(Error::Numerical("Θ image does not cover the θ grid".into()))
}

/// For x-free H both the Θ-inverse and the parabolic slope must equal `H(θ)`.
pub fn oracle_constant_coeff(ctx: &Context, r: &Realization, theta_grid: &[f64]) -> CheckReport {
    let mut rep = ctx.report("end2end.constant_coeff");
    let res = (|| -> Result<()> {
        if !r.is_x_free() {
            return Err(Error::Precondition("H depends on x".into()));
        }
        let cfg = ctx.cfg;
        let o = cfg.theta.options(&ctx.cell());
        let window = (-8.0, 8.0);
        let lambda0 = min_h(r, window);
        let reals = vec![r.clone()];
        let mut map = covering_map(&reals, lambda0, theta_grid, window, &o)?;
        let scan = refine_gaps(&reals, &mut map, window, &o);
        let curve = invert_to_effective(&map, &scan.gaps, theta_grid)?;
        let (mut inv_err, mut par_err) = (0.0f64, 0.0f64);
        for (k, &t) in theta_grid.iter().enumerate() {
            let exact = r.eval_h(0.0, t);
            rep.measure(&format!("exact[{t}]"), exact);
            rep.measure(&format!("inverse[{t}]"), curve.value[k]);
            inv_err = inv_err.max((curve.value[k] - exact).abs());
            let grid = Grid1D::centered(front_speed(r, t, window) + 8.0, 1.0 / 32.0, t, 0.9)?;
            let run = solve_ehj(
                r,
                &grid,
                1.0,
                &[],
                &SolverOptions {
                    n_samples: 8,
                    ..cfg.parabolic.solver.clone()
                },
                None,
            )?;
            let slope = *run.slope_series.last().unwrap_or(&f64::NAN);
            rep.measure(&format!("parabolic[{t}]"), slope);
            par_err = par_err.max((slope - exact).abs());
        }
        rep.at_most("inverse_max_err", inv_err, 1e-2);
        rep.at_most("parabolic_max_err", par_err, 1e-2);
        if let Some(p) = ctx.artifact("constant_coeff_effective.csv") {
            curve.write_csv(&p)?;
            rep.artifacts.push(p);
        }
        Ok(())
    })();
    match res {
        Ok(()) => rep,
        Err(e) => rep.errored(&e),
    }
}

// ---------------------------------------------------------------- suites

fn class_suite(ctx: &Context) -> Vec<CheckReport> {
    let seeds = &ctx.cfg.run.seeds;
    par::map(seeds, |&seed| {
        let mut rep = ctx.report(&format!("class.membership[{seed}]"));
        rep.seeds = vec![seed];
        match realizations(&ctx.cfg.env, &[seed]) {
            Ok(rs) => {
                let w = ctx.cell_window();
                let xw = (w.0.max(-10.0), w.1.min(10.0));
                let c = verify_class(&rs[0], xw, (-4.0, 4.0), 1.0 / 32.0, 1.0 / 8.0);
                for chk in &c.checks {
                    rep.at_most(&format!("{}_excess", chk.name), chk.worst_excess, 1e-9);
                }
                rep
            }
            Err(e) => rep.errored(&e),
        }
    })
}

fn extremals(
    r: &Realization,
    lambda: f64,
    w: (f64, f64),
    o: &CellOptions,
) -> Result<(CorrectorSolution, CorrectorSolution)> {
    Ok((
        bounded_solution_window(r, lambda, w, Extremal::Minimal, o)?,
        bounded_solution_window(r, lambda, w, Extremal::Maximal, o)?,
    ))
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Confinement, ordering and separation of the extremal correctors.
pub fn bound_suite(ctx: &Context, r: &Realization, lambda0: f64) -> Vec<CheckReport> {
    let o = ctx.cell();
    let w = ctx.cell_window();
    let mut out = vec![];

    let mut conf = ctx.report("cell.confinement");
    let mut order = ctx.report("cell.ordering");
    for &off in &ctx.cfg.cell.corrector_offsets {
        let lambda = lambda0 + off;
        match extremals(r, lambda, w, &o) {
            Ok((lo, hi)) => {
                let band = p_bounds_with(r, lambda, w, 1.0 / 512.0);
                let excess =
                    lo.f.iter()
                        .chain(&hi.f)
                        .map(|&v| (v - band.p_plus).max(band.p_minus - v))
                        .fold(f64::NEG_INFINITY, f64::max);
                conf.at_most(&format!("band_excess[{off}]"), excess, 1e-6);
                conf.at_most(
                    &format!("residual_sup[{off}]"),
                    lo.residual_sup.max(hi.residual_sup),
                    o.residual_tol,
                );
                let ok = !matches!(check_ordering(&lo, &hi), Ordering::Crossing { .. });
                order.require(&format!("min_below_max[{off}]"), ok);
            }
            Err(e) => {
                conf.inconclusive(format!("λ0 + {off}: {e}"));
                order.inconclusive(format!("λ0 + {off}: {e}"));
            }
        }
    }
    out.push(conf);
    out.push(order);

    let mut sep = ctx.report("cell.separation");
    let l2 = lambda0 + 1.0;
    let ds = [0.1, 0.2, 0.4, 0.8];
    let res = (|| -> Result<()> {
        let f2 = bounded_solution_window(r, l2, w, Extremal::Maximal, &o)?;
        let mut gaps = vec![];
        for &d in &ds {
            let f1 = bounded_solution_window(r, l2 - d, w, Extremal::Maximal, &o)?;
            let g = match check_ordering(&f1, &f2) {
                Ordering::Below { min_gap, .. } => min_gap,
                _ => 0.0,
            };
            sep.positive(&format!("min_gap[{d}]"), g);
            gaps.push(g);
        }
        sep.positive("fit_slope", fit_slope(&ds, &gaps));
        Ok(())
    })();
    if let Err(e) = res {
        sep = sep.errored(&e);
    }
    out.push(sep);
    out
}

fn cell_suite(ctx: &Context) -> Vec<CheckReport> {
    let r = match first_seed(ctx) {
        Ok(r) => r,
        Err(e) => return vec![ctx.report("cell.lambda0").errored(&e)],
    };
    let w = ctx.cell_window();
    let o = ctx.cell();
    let mut rep = ctx.report("cell.lambda0");
    let lambda0 = match estimate_lambda0(&r, w, ctx.cfg.cell.lambda0_tol, &o) {
        Ok(e) => {
            rep.measure("lambda0", e.value);
            rep.at_least("above_bracket_floor", e.value - e.bracket.0, 0.0);
            rep.at_least("below_bracket_top", e.bracket.1 - e.value, 0.0);
            if r.is_x_free() {
                rep.at_most("x_free_exact", (e.value - min_h(&r, w)).abs(), 0.0);
            }
            e.value
        }
        Err(e) => return vec![rep.errored(&e)],
    };
    let mut out = vec![rep];
    if hopf_cole_target(&r).is_some() {
        out.push(oracle_hopf_cole(ctx, &r));
    }
    out.extend(bound_suite(ctx, &r, lambda0));
    out
}

/// Descent shoot below λ0 and its mollified gluing.
pub fn bridge_check(ctx: &Context, r: &Realization, lambda0: f64) -> CheckReport {
    let b = &ctx.cfg.bridge;
    let mut rep = ctx.report("bridge.glue");
    let res = (|| -> Result<()> {
        let o = ctx.cell();
        let lambda = lambda0 + b.lambda_offset;
        let mu = lambda - b.mu_shift;
        let (f1, f2) = extremals(r, lambda, RunConfig::window(b.window), &o)?;
        let shot = shoot_descend(r, &f1, &f2, mu, b.n, &o)?;
        rep.measure("lambda", lambda);
        rep.measure("mu", mu);
        if shot.verdict != Verdict::Crossed {
            rep.inconclusive("shoot stayed confined; no bridge to glue");
            return Ok(());
        }
        rep.measure("crossing_x", shot.crossing_x.unwrap_or(f64::NAN));
        let g = mollify_glue(r, &f2, &f1, &shot, mu, b.epsilon, b.r_margin, &b.glue)?;
        rep.measure("mollifier_index", g.mollifier_index as f64);
        rep.at_least("residual_min", g.residual_min, g.bound());
        if let Some(p) = ctx.artifact("bridge_glued.csv") {
            g.write(&p)?;
            rep.artifacts.push(p);
        }
        if let Some(p) = ctx.artifact("bridge_shoot.csv") {
            shot.write(r, &p)?;
            rep.artifacts.push(p);
        }
        Ok(())
    })();
    match res {
        Ok(()) => rep,
        Err(e) => rep.errored(&e),
    }
}

fn bridge_suite(ctx: &Context) -> Vec<CheckReport> {
    let r = match first_seed(ctx) {
        Ok(r) => r,
        Err(e) => return vec![ctx.report("bridge.glue").errored(&e)],
    };
    let o = ctx.cell();
    let lambda0 = match estimate_lambda0(&r, ctx.cell_window(), ctx.cfg.cell.lambda0_tol, &o) {
        Ok(e) => e.value,
        Err(e) => return vec![ctx.report("bridge.glue").errored(&e)],
    };
    let mut out = vec![bridge_check(ctx, &r, lambda0)];

    // Below λ0 nothing bounded exists; between λ0 and λ the maximal solution
    // at μ lies between the pair; above λ, for convex H, everything leaves it.
    let b = &ctx.cfg.bridge;
    let mut rep = ctx.report("bridge.gap_levels");
    let lambda = lambda0 + b.lambda_offset;
    match extremals(&r, lambda, RunConfig::window(b.window), &o) {
        Ok((f1, f2)) => {
            let mus: Vec<f64> = b.mu_offsets.iter().map(|d| lambda + d).collect();
            let convex = r.hamiltonian().is_convex_in_p();
            for lvl in detect_gap_level(&r, &f1, &f2, &mus, &b.n_schedule, &o) {
                let expect = if lvl.mu > lambda0 && lvl.mu < lambda {
                    Evidence::Nonempty
                } else {
                    Evidence::Empty
                };
                let name = format!("mu[{:+.3}]", lvl.mu - lambda);
                if lvl.mu > lambda && !convex {
                    rep.note(format!(
                        "{name}: {:?} (no expectation for non-convex H above λ)",
                        lvl.evidence
                    ));
                    continue;
                }
                if lvl.evidence == Evidence::Inconclusive {
                    rep.inconclusive(format!("{name}: {}", lvl.note));
                    continue;
                }
                rep.require(&name, lvl.evidence == expect);
            }
        }
        Err(e) => rep = rep.errored(&e),
    }
    out.push(rep);
    out
}

fn theta_suite(ctx: &Context) -> Vec<CheckReport> {
    let cfg = ctx.cfg;
    let mut rep = ctx.report("theta.map");
    let res = (|| -> Result<()> {
        let reals = realizations(&cfg.env, &cfg.run.seeds)?;
        let o = cfg.theta.options(&ctx.cell());
        let lambda0 = lambda0_over(&reals, ctx.cell_window(), cfg.cell.lambda0_tol, &o.cell)?;
        let window = RunConfig::window(cfg.theta.window);
        let p = effective_pipeline(
            &reals,
            lambda0,
            &cfg.theta.levels(lambda0),
            window,
            &cfg.theta.theta_grid,
            &o,
        )?;
        rep.measure("lambda0", lambda0);
        rep.measure("levels", p.map.samples.len() as f64);
        rep.at_most("failed_levels", p.map.failed.len() as f64, 0.0);
        rep.require("monotone", p.map.monotone);
        rep.require("disjoint_3_stderr", p.map.disjoint);
        rep.measure("gaps", p.scan.gaps.len() as f64);
        let worst = p
            .scan
            .gaps
            .iter()
            .map(|g| (g.lambda_left - g.lambda_right).abs())
            .fold(0.0, f64::max);
        rep.at_most("gap_label_mismatch", worst, o.lambda_tol);
        if !p.scan.unresolved.is_empty() {
            rep.inconclusive(format!(
                "{} wide pairs left unresolved",
                p.scan.unresolved.len()
            ));
        }
        let floor = p.curve.value.iter().copied().fold(f64::INFINITY, f64::min);
        rep.at_least("effective_above_lambda0", floor - lambda0, -1e-9);
        for f in &p.map.flags {
            rep.note(f.clone());
        }
        if let Some(path) = ctx.artifact("theta_map.csv") {
            p.map.write_csv(&path)?;
            rep.artifacts.push(path);
        }
        if let Some(path) = ctx.artifact("effective.csv") {
            p.curve.write_csv(&path)?;
            rep.artifacts.push(path);
        }
        Ok(())
    })();
    match res {
        Ok(()) => vec![rep],
        Err(e) => vec![rep.errored(&e)],
    }
}

/// An ordered pair `v0 ≤ w0` of Lipschitz data with slope θ at infinity.
pub fn random_ordered_pair(grid: &Grid1D, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let wave = |rng: &mut ChaCha8Rng| {
        let terms: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                let k = rng.gen_range(0.5..4.0);
                (
                    rng.gen_range(-1.0..1.0) / k,
                    k,
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        move |x: f64| {
            terms
                .iter()
                .map(|(a, k, p)| a * (k * x + p).sin())
                .sum::<f64>()
        }
    };
    let w = wave(rng);
    let d = wave(rng);
    let c = rng.gen_range(0.0..0.5);
    let xs = grid.nodes();
    let w0: Vec<f64> = xs.iter().map(|&x| grid.theta * x + w(x)).collect();
    let v0: Vec<f64> = xs
        .iter()
        .zip(&w0)
        .map(|(&x, w)| w - c - (d(x).abs()))
        .collect();
    (v0, w0)
}

/// Ordering of `pairs` random data pairs under the scheme.
pub fn comparison_suite(ctx: &Context, r: &Realization, pairs: usize, stream: u64) -> CheckReport {
    let mut rep = ctx.report("parabolic.comparison");
    let grid = match Grid1D::new(-8.0, 8.0, 1.0 / 32.0, 0.0, 0.9) {
        Ok(g) => g,
        Err(e) => return rep.errored(&e),
    };
    let o = SolverOptions {
        n_samples: 20,
        ..ctx.cfg.parabolic.solver.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed() ^ (stream << 32) ^ 0x5eed);
    let data: Vec<_> = (0..pairs)
        .map(|_| random_ordered_pair(&grid, &mut rng))
        .collect();
    let res = par::map(&data, |(v0, w0)| {
        comparison_check(r, &grid, v0, w0, 0.5, &o)
    });
    let (mut worst, mut violations) = (f64::NEG_INFINITY, 0);
    for v in res {
        match v {
            Ok(v) => {
                worst = worst.max(v.observed_gap - v.initial_gap - v.slack);
                if !v.passed {
                    violations += 1;
                }
            }
            Err(e) => {
                rep.inconclusive(format!("pair failed: {e}"));
            }
        }
    }
    rep.measure("pairs", pairs as f64);
    rep.measure("worst_excess_over_slack", worst);
    rep.at_most("violations", violations as f64, 0.0);
    rep
}

/// Drift of the corrector potential at `λ` under the scheme on the window
/// `[-margin, margin + 2]`, measured on `[0, 2]`.
pub fn duality_on(
    r: &Realization,
    lambda: f64,
    dx: f64,
    t_end: f64,
    margin: f64,
    o: &CellOptions,
) -> Result<DualityReport> {
    let co = CellOptions { dx_out: dx, ..*o };
    let f = bounded_solution_window(r, lambda, (-margin, margin + 2.0), Extremal::Maximal, &co)?;
    duality_drift(r, &f, t_end, margin, 0.9, &SolverOptions::default())
}

fn parabolic_suite(ctx: &Context) -> Vec<CheckReport> {
    let cfg = ctx.cfg;
    let r = match first_seed(ctx) {
        Ok(r) => r,
        Err(e) => return vec![ctx.report("parabolic.comparison").errored(&e)],
    };
    let mut out = vec![comparison_suite(ctx, &r, cfg.validate.comparison_pairs, 0)];

    let mut rep = ctx.report("parabolic.duality");
    let res = (|| -> Result<()> {
        let o = ctx.cell();
        let lambda0 = estimate_lambda0(&r, ctx.cell_window(), cfg.cell.lambda0_tol, &o)?.value;
        let t = cfg.validate.duality_t;
        let d = duality_on(
            &r,
            lambda0 + 1.0,
            cfg.validate.duality_dx,
            t,
            cfg.validate.duality_margin,
            &o,
        )?;
        rep.at_most("sup_drift", d.sup_drift, 5e-3);
        Ok(())
    })();
    out.push(match res {
        Ok(()) => rep,
        Err(e) => rep.errored(&e),
    });

    let mut rep = ctx.report("parabolic.cauchy_width");
    let res = (|| -> Result<()> {
        let p = &cfg.parabolic;
        let run = run_parabolic(&r, p.theta, p)?;
        rep.measure("hl", run.hl_est);
        rep.measure("hu", run.hu_est);
        rep.at_most("width", run.hu_est - run.hl_est, 1e-2);
        if let Some(path) = ctx.artifact("parabolic.csv") {
            run.write(&path)?;
            rep.artifacts.push(path);
        }
        Ok(())
    })();
    out.push(match res {
        Ok(()) => rep,
        Err(e) => rep.errored(&e),
    });
    out
}

/// `solve_ehj` on a centred grid wide enough for the measured region.
pub fn run_parabolic(
    r: &Realization,
    theta: f64,
    p: &crate::config::ParabolicSection,
) -> Result<crate::parabolic::ParabolicRun> {
    let half = p
        .half_width
        .unwrap_or_else(|| front_speed(r, theta, (-64.0, 64.0)) * p.t_end + 8.0);
    let grid = Grid1D::centered(half, p.dx, theta, p.cfl)?;
    solve_ehj(r, &grid, p.t_end, &[], &p.solver, None)
}

fn end2end_suite(ctx: &Context) -> Vec<CheckReport> {
    let cfg = ctx.cfg;
    let r = match first_seed(ctx) {
        Ok(r) => r,
        Err(e) => return vec![ctx.report("end2end").errored(&e)],
    };
    if r.is_x_free() {
        return vec![oracle_constant_coeff(ctx, &r, &cfg.theta.theta_grid)];
    }
    let mut rep = ctx.report("end2end.inverse_vs_parabolic");
    let res = (|| -> Result<()> {
        let reals = realizations(&cfg.env, &cfg.run.seeds)?;
        let o = cfg.theta.options(&ctx.cell());
        let lambda0 = lambda0_over(&reals, ctx.cell_window(), cfg.cell.lambda0_tol, &o.cell)?;
        let window = RunConfig::window(cfg.theta.window);
        let p = effective_pipeline(
            &reals,
            lambda0,
            &cfg.theta.levels(lambda0),
            window,
            &cfg.theta.theta_grid,
            &o,
        )?;
        let runs = par::map(&cfg.theta.theta_grid, |&t| {
            run_parabolic(&r, t, &cfg.parabolic)
        });
        let mut worst = 0.0f64;
        for ((t, v), run) in cfg.theta.theta_grid.iter().zip(&p.curve.value).zip(runs) {
            let run = run?;
            let mid = 0.5 * (run.hl_est + run.hu_est);
            rep.measure(&format!("inverse[{t}]"), *v);
            rep.measure(&format!("parabolic[{t}]"), mid);
            worst = worst.max((mid - v).abs());
        }
        rep.at_most("max_abs_diff", worst, 5e-2);
        if let Some(path) = ctx.artifact("end2end_effective.csv") {
            p.curve.write_csv(&path)?;
            rep.artifacts.push(path);
        }
        Ok(())
    })();
    match res {
        Ok(()) => vec![rep],
        Err(e) => vec![rep.errored(&e)],
    }
}

/// Runs a named suite. Individual failures are reported, not raised; only
/// an unknown suite id is an error.
pub fn run_suite(id: &str, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<Vec<CheckReport>> {
    if !SUITES.contains(&id) {
        return Err(Error::Config(format!(
            "unknown suite `{id}`; expected one of {SUITES:?}"
        )));
    }
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d)?;
    }
    let ctx = Context::new(cfg, out_dir);
    let reports = match id {
        "class" => class_suite(&ctx),
        "cell" => cell_suite(&ctx),
        "bridge" => bridge_suite(&ctx),
        "theta" => theta_suite(&ctx),
        "parabolic" => parabolic_suite(&ctx),
        _ => end2end_suite(&ctx),
    };
    Ok(reports)
}

/// Bitwise comparison of two report lists.
pub fn same_bits(a: &[CheckReport], b: &[CheckReport]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.id == y.id
                && x.status == y.status
                && x.measured.len() == y.measured.len()
                && x.measured
                    .iter()
                    .zip(&y.measured)
                    .all(|((k1, v1), (k2, v2))| k1 == k2 && v1.to_bits() == v2.to_bits())
        })
}

/// Runs the suite and, when configured, a second time with a
/// reproducibility report appended.
pub fn run_suite_checked(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<Vec<CheckReport>> {
    let id = cfg.validate.suite.as_str();
    let mut first = run_suite(id, cfg, out_dir)?;
    if cfg.validate.double_run {
        let second = run_suite(id, cfg, out_dir)?;
        let mut rep = CheckReport::new("reproducibility", &cfg.run.seeds, &cfg.hash());
        rep.require("bitwise_identical", same_bits(&first, &second));
        first.push(rep);
    }
    Ok(first)
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e5) {
        format!("{v:.6}")
    } else {
        format!("{v:.3e}")
    }
}

/// Summary as a markdown table, one row per check.
pub fn markdown_table(reports: &[CheckReport]) -> String {
    let mut s = String::from("| check | status | measured | bound |\n|---|---|---|---|\n");
    for r in reports {
        let status = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Inconclusive => "inconclusive",
        };
        let bounded: Vec<&String> = r.tolerances.keys().collect();
        let measured: Vec<String> = if bounded.is_empty() {
            r.measured
                .iter()
                .map(|(k, v)| format!("{k} = {}", fmt_num(*v)))
                .collect()
        } else {
            bounded
                .iter()
                .map(|k| format!("{k} = {}", fmt_num(r.measured[*k])))
                .collect()
        };
        let bounds: Vec<String> = bounded
            .iter()
            .map(|k| format!("{} {}", r.relations[*k], fmt_num(r.tolerances[*k])))
            .collect();
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            r.id,
            status,
            measured.join("<br>"),
            bounds.join("<br>")
        );
    }
    s
}

/// Writes `summary.md` and `reports.json` into `dir`.
pub fn write_reports(reports: &[CheckReport], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let md = dir.join("summary.md");
    std::fs::write(&md, markdown_table(reports))?;
    let json = dir.join("reports.json");
    write_json(&json, &reports)?;
    Ok((md, json))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_realization, EnvironmentSpec};

    #[test]
    fn report_status_follows_inequalities() {
        let mut r = CheckReport::new("x", &[0], "h");
        r.at_most("a", 1.0, 2.0);
        assert!(r.passed());
        r.inconclusive("maybe");
        assert_eq!(r.status, Status::Inconclusive);
        r.at_least("b", f64::NAN, 0.0);
        assert_eq!(r.status, Status::Fail);
        r.inconclusive("still failed");
        assert_eq!(r.status, Status::Fail);
    }

    #[test]
    fn cyclic_solver_matches_dense_product() {
        let d = [4.0, 5.0, 6.0, 4.5, 5.5];
        let c = -1.0;
        let b = [1.0, -2.0, 0.5, 3.0, 0.0];
        let x = cyclic_solve(&d, c, &b);
        let n = d.len();
        for i in 0..n {
            let ax = d[i] * x[i] + c * (x[(i + n - 1) % n] + x[(i + 1) % n]);
            assert!((ax - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn free_ground_state_and_floquet() {
        let e0 = periodic_ground_state(|_| 0.0, 1.0, 64).unwrap();
        assert!(e0.abs() < 1e-12);
        // V = 0: f = ±√λ.
        let (fmax, fmin, tmax, tmin) = floquet(|_| 0.0, 1.0, 2.0, 16).unwrap();
        assert!(fmax.iter().all(|f| (f - 2f64.sqrt()).abs() < 1e-9));
        assert!(fmin.iter().all(|f| (f + 2f64.sqrt()).abs() < 1e-9));
        assert!((tmax - 2f64.sqrt()).abs() < 1e-9 && (tmin + 2f64.sqrt()).abs() < 1e-9);
        assert!(floquet(|_| 0.0, 1.0, -1.0, 16).is_err());
    }

    #[test]
    fn constant_potential_shifts_ground_state() {
        let e0 = periodic_ground_state(|_| 0.7, 2.0, 128).unwrap();
        assert!((e0 + 0.7).abs() < 1e-12);
    }

    #[test]
    fn unknown_suite_is_config_error() {
        let cfg = RunConfig::default();
        assert!(matches!(
            run_suite("everything", &cfg, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hopf_cole_applies_only_to_quadratic_cosine() {
        let cfg = RunConfig::default();
        let r = sample_realization(&cfg.env, 0).unwrap();
        assert!(hopf_cole_target(&r).is_some());
        let dw =
            sample_realization(&EnvironmentSpec::double_well(FieldModel::cosine(0.5)), 0).unwrap();
        assert!(hopf_cole_target(&dw).is_none());
    }

    #[test]
    fn slope_fit() {
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn table_lists_every_check() {
        let mut a = CheckReport::new("one", &[0], "h");
        a.at_most("err", 1e-5, 1e-4);
        let mut b = CheckReport::new("two", &[0], "h");
        b.at_least("gap", -1.0, 0.0);
        let t = markdown_table(&[a, b]);
        assert!(t.contains("| one | pass | err = 1.000e-5 | <= 1.000e-4 |"));
        assert!(t.contains("| two | FAIL |"));
    }
}
