//! Extremal and interior bounded solutions by pullback, and the critical value.
//!
//! Trajectories of a scalar ODE cannot cross. Started at the top of the
//! safety box far to the left, the forward trajectory stays above every
//! bounded solution and converges to the maximal one; started at the bottom
//! far to the right, the backward trajectory converges to the minimal one.
//! If the forward trajectory from the top leaves the box, no bounded
//! solution exists on that window.

use serde::{Deserialize, Serialize};

use super::band::{max_h_at_zero, min_h, p_bounds_with, sublevel_extent};
use super::ode::{integrate, Exit, IvpOptions, Rhs, Trajectory};
use super::solution::{CorrectorSolution, Role};
use crate::env::Realization;
use crate::error::{Error, Result};
use crate::par;

/// Tuning of the cell solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellOptions {
    /// Relative and absolute tolerance of the integrator.
    pub tol: f64,
    pub dx_out: f64,
    pub h_max: f64,
    pub stiff_threshold: f64,
    /// Initial pullback distance; doubled until converged or `burn_max`.
    pub burn: f64,
    pub burn_max: f64,
    /// Pullback convergence: successive starting distances must agree to this.
    pub converge_tol: f64,
    /// The safety box is `[p⁻_{λ+δ} - 1, p⁺_{λ+δ} + 1]` with this δ.
    pub box_delta: f64,
    /// x-spacing of the band scan used for the box.
    pub band_dx: f64,
    /// Initial values per direction when searching for interior branches.
    pub branch_starts: usize,
    /// Two branch candidates closer than this (sup norm) are merged.
    pub merge_tol: f64,
    /// Candidates whose half-window means differ by more than this are
    /// treated as transients and dropped.
    pub transit_tol: f64,
    /// Declared bound on the node residual of returned solutions.
    pub residual_tol: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            tol: 1e-10,
            dx_out: 1.0 / 64.0,
            h_max: 0.125,
            stiff_threshold: 500.0,
            burn: 16.0,
            burn_max: 1024.0,
            converge_tol: 1e-10,
            box_delta: 1.0,
            band_dx: 1.0 / 32.0,
            branch_starts: 32,
            merge_tol: 1e-5,
            transit_tol: 5e-2,
            residual_tol: 1e-5,
        }
    }
}

impl CellOptions {
    pub fn ivp(&self, bx: (f64, f64)) -> IvpOptions {
        IvpOptions {
            rtol: self.tol,
            atol: self.tol,
            h_init: 1e-2,
            h_max: self.h_max,
            h_min: 1e-12,
            dx_out: self.dx_out,
            stiff_threshold: self.stiff_threshold,
            box_lo: bx.0,
            box_hi: bx.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremal {
    Minimal,
    Maximal,
}

/// `f' = (λ - H(x, f)) / a(x)`.
pub struct CorrectorRhs<'a> {
    pub r: &'a Realization,
    pub lambda: f64,
}

impl Rhs for CorrectorRhs<'_> {
    #[inline]
    fn eval(&self, x: f64, y: f64) -> f64 {
        (self.lambda - self.r.eval_h(x, y)) / self.r.eval_a(x)
    }
    #[inline]
    fn dy(&self, x: f64, y: f64) -> f64 {
        -self.r.eval_h_dp(x, y) / self.r.eval_a(x)
    }
}

/// `[p⁻_{λ+δ} - 1, p⁺_{λ+δ} + 1]` scanned over `window`.
pub fn safety_box(
    r: &Realization,
    lambda: f64,
    window: (f64, f64),
    o: &CellOptions,
) -> Result<(f64, f64)> {
    let b = p_bounds_with(r, lambda + o.box_delta, window, o.band_dx);
    if b.empty {
        return Err(Error::NoBoundedSolution { lambda });
    }
    Ok((b.p_minus - 1.0, b.p_plus + 1.0))
}

/// Snaps the window to a whole number of output steps.
pub fn snap_window(window: (f64, f64), dx: f64) -> (f64, f64, usize) {
    let n = ((window.1 - window.0) / dx).round().max(1.0) as usize;
    (window.0, window.0 + n as f64 * dx, n)
}

fn endpoint(
    r: &Realization,
    lambda: f64,
    x0: f64,
    y0: f64,
    x1: f64,
    bx: (f64, f64),
    o: &CellOptions,
) -> Result<Option<f64>> {
    let mut iv = o.ivp(bx);
    iv.dx_out = (x1 - x0).abs().max(o.dx_out);
    let t = integrate(&CorrectorRhs { r, lambda }, x0, y0, x1, &iv)?;
    Ok(if t.exit.is_completed() {
        Some(t.y_last)
    } else {
        None
    })
}

/// Value at `x_anchor` of the pullback from `start` at distance `burn·2^k`,
/// doubling until two successive distances agree. Returns `(value, gap)`.
fn pullback_value(
    r: &Realization,
    lambda: f64,
    x_anchor: f64,
    start: f64,
    dir: f64,
    bx: (f64, f64),
    o: &CellOptions,
) -> Result<Option<(f64, f64)>> {
    let mut burn = o.burn;
    let Some(mut prev) = endpoint(r, lambda, x_anchor - dir * burn, start, x_anchor, bx, o)? else {
        return Ok(None);
    };
    loop {
        burn *= 2.0;
        if burn > o.burn_max {
            return Ok(Some((prev, f64::NAN)));
        }
        let Some(v) = endpoint(r, lambda, x_anchor - dir * burn, start, x_anchor, bx, o)? else {
            return Ok(None);
        };
        let gap = (v - prev).abs();
        prev = v;
        if gap <= o.converge_tol * (1.0 + v.abs()) {
            return Ok(Some((v, gap)));
        }
    }
}

/// Integrates across the snapped window and returns a solution record.
fn sweep(
    r: &Realization,
    lambda: f64,
    window: (f64, f64, usize),
    start: f64,
    forward: bool,
    bx: (f64, f64),
    role: Role,
    o: &CellOptions,
) -> Result<Option<CorrectorSolution>> {
    let (lo, hi, n) = window;
    let rhs = CorrectorRhs { r, lambda };
    let t: Trajectory = if forward {
        integrate(&rhs, lo, start, hi, &o.ivp(bx))?
    } else {
        integrate(&rhs, hi, start, lo, &o.ivp(bx))?
    };
    if !matches!(t.exit, Exit::Completed) || t.len() != n + 1 {
        return Ok(None);
    }
    let (mut f, mut fp) = (t.y, t.dydx);
    if !forward {
        f.reverse();
        fp.reverse();
    }
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * o.dx_out).collect();
    Ok(Some(CorrectorSolution::from_samples(
        r,
        lambda,
        xs,
        f,
        fp,
        role,
        o.residual_tol,
    )))
}

/// Minimal or maximal bounded solution on `window`.
pub fn bounded_solution_window(
    r: &Realization,
    lambda: f64,
    window: (f64, f64),
    target: Extremal,
    o: &CellOptions,
) -> Result<CorrectorSolution> {
    let w = snap_window(window, o.dx_out);
    if r.hamiltonian().is_x_free() {
        return constant_extremal(r, lambda, w, target, o);
    }
    let bx = safety_box(r, lambda, (w.0 - o.burn_max, w.1 + o.burn_max), o)?;
    let (anchor, start, dir, forward, role) = match target {
        Extremal::Maximal => (w.0, bx.1, 1.0, true, Role::Maximal),
        Extremal::Minimal => (w.1, bx.0, -1.0, false, Role::Minimal),
    };
    let Some((v, gap)) = pullback_value(r, lambda, anchor, start, dir, bx, o)? else {
        return Err(Error::NoBoundedSolution { lambda });
    };
    let mut s =
        sweep(r, lambda, w, v, forward, bx, role, o)?.ok_or(Error::NoBoundedSolution { lambda })?;
    s.convergence = gap;
    Ok(s)
}

/// For x-free H the extremal bounded solutions are the extreme roots of
/// `H(p) = λ`, whatever the diffusion.
fn constant_extremal(
    r: &Realization,
    lambda: f64,
    w: (f64, f64, usize),
    target: Extremal,
    o: &CellOptions,
) -> Result<CorrectorSolution> {
    let (lo, hi) =
        sublevel_extent(&r.freeze(w.0), lambda).ok_or(Error::NoBoundedSolution { lambda })?;
    let (v, role) = match target {
        Extremal::Maximal => (hi, Role::Maximal),
        Extremal::Minimal => (lo, Role::Minimal),
    };
    let xs: Vec<f64> = (0..=w.2).map(|i| w.0 + i as f64 * o.dx_out).collect();
    let n = xs.len();
    Ok(CorrectorSolution::from_samples(
        r,
        lambda,
        xs,
        vec![v; n],
        vec![0.0; n],
        role,
        o.residual_tol,
    ))
}

/// Critical value estimate with its finite-window history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lambda0Estimate {
    /// Extrapolated value (or the exact minimum for x-free H).
    pub value: f64,
    /// `(window length, λ0 on that window)`.
    pub raw: Vec<(f64, f64)>,
    pub bracket: (f64, f64),
    pub tol: f64,
}

/// Forward trajectory from the box top stays in the box across the window.
fn confined(
    r: &Realization,
    lambda: f64,
    window: (f64, f64),
    bx: (f64, f64),
    o: &CellOptions,
) -> Result<bool> {
    Ok(endpoint(r, lambda, window.0, bx.1, window.1, bx, o)?.is_some())
}

fn lambda0_on(
    r: &Realization,
    window: (f64, f64),
    bracket: (f64, f64),
    tol: f64,
    o: &CellOptions,
) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    let mut bx = safety_box(r, hi, window, o)?;
    if !confined(r, hi, window, bx, o)? {
        // One retry with a wider box before giving up.
        let wide = CellOptions {
            box_delta: 2.0 * o.box_delta,
            ..*o
        };
        bx = safety_box(r, hi, window, &wide)?;
        if !confined(r, hi, window, bx, &wide)? {
            return Err(Error::Numerical(format!(
                "λ0 bracket top {hi} not confined on window {window:?}"
            )));
        }
    }
    // Finite windows can confine slightly below min H: push the floor down.
    let mut step = (hi - lo).max(tol);
    let mut guard = 0;
    while confined(r, lo, window, bx, o)? {
        hi = lo;
        lo -= step;
        step *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::Numerical("λ0 lower bracket not found".into()));
        }
    }
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if confined(r, m, window, bx, o)? {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Critical value: bisection in λ on confinement over `window` and over
/// the doubled window, then Richardson extrapolation assuming an `L^-2`
/// finite-window error. For x-free H this is `min_p H` exactly.
pub fn estimate_lambda0(
    r: &Realization,
    window: (f64, f64),
    tol: f64,
    o: &CellOptions,
) -> Result<Lambda0Estimate> {
    let floor = min_h(r, window);
    if r.is_x_free() {
        return Ok(Lambda0Estimate {
            value: floor,
            raw: vec![],
            bracket: (floor, floor),
            tol,
        });
    }
    let bracket = (floor - tol, max_h_at_zero(r, window) + tol);
    let io = CellOptions {
        tol: o.tol.max(1e-9),
        ..*o
    };
    let len = window.1 - window.0;
    let doubled = (window.0 - 0.5 * len, window.1 + 0.5 * len);
    let l1 = lambda0_on(r, window, bracket, tol, &io)?;
    let l2 = lambda0_on(r, doubled, bracket, tol, &io)?;
    let value = (l2 + (l2 - l1) / 3.0).clamp(bracket.0, bracket.1);
    Ok(Lambda0Estimate {
        value,
        raw: vec![(len, l1), (2.0 * len, l2)],
        bracket,
        tol,
    })
}

/// Every stationary solution found on the window at level λ, sorted by
/// mean: `solutions[0]` is minimal and the last one maximal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branches {
    pub lambda: f64,
    pub solutions: Vec<CorrectorSolution>,
}

impl Branches {
    pub fn minimal(&self) -> &CorrectorSolution {
        &self.solutions[0]
    }

    pub fn maximal(&self) -> &CorrectorSolution {
        self.solutions.last().expect("nonempty")
    }

    pub fn interior(&self) -> &[CorrectorSolution] {
        let n = self.solutions.len();
        if n <= 2 {
            &[]
        } else {
            &self.solutions[1..n - 1]
        }
    }
}

fn cluster(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    let mut reps: Vec<f64> = vec![];
    for x in v {
        match reps.last() {
            Some(&last) if (x - last).abs() <= tol * (1.0 + x.abs()) => {}
            _ => reps.push(x),
        }
    }
    reps
}

fn half_means(s: &CorrectorSolution) -> (f64, f64) {
    let n = s.len();
    let m = n / 2;
    (
        super::solution::trapezoid_mean(&s.f[..=m]),
        super::solution::trapezoid_mean(&s.f[m..]),
    )
}

fn sup_diff(a: &CorrectorSolution, b: &CorrectorSolution) -> f64 {
    a.f.iter()
        .zip(&b.f)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Extremal solutions plus forward- and backward-attracting interior ones.
///
/// `branch_starts` initial values across the safety box are pulled back a
/// fixed distance (`burn_max.min(4 burn)`) forward from the left and
/// backward from the right, clustered, then continued across the window.
/// Candidates that merge with another or whose half-window means disagree
/// by more than `transit_tol` are discarded as transients.
pub fn stationary_branches(
    r: &Realization,
    lambda: f64,
    window: (f64, f64),
    o: &CellOptions,
) -> Result<Branches> {
    let w = snap_window(window, o.dx_out);
    let bx = safety_box(r, lambda, (w.0 - o.burn_max, w.1 + o.burn_max), o)?;
    let top = bounded_solution_window(r, lambda, window, Extremal::Maximal, o)?;
    let bottom = bounded_solution_window(r, lambda, window, Extremal::Minimal, o)?;

    let k = o.branch_starts.max(2);
    let starts: Vec<f64> = (1..k)
        .map(|i| bx.0 + (bx.1 - bx.0) * i as f64 / k as f64)
        .collect();
    let burn = o.burn_max.min(4.0 * o.burn);
    let jobs: Vec<(f64, bool)> = starts
        .iter()
        .flat_map(|&s| [(s, true), (s, false)])
        .collect();
    let ends = par::map(&jobs, |&(s, fwd)| {
        let (x0, x1) = if fwd {
            (w.0 - burn, w.0)
        } else {
            (w.1 + burn, w.1)
        };
        endpoint(r, lambda, x0, s, x1, bx, o)
            .ok()
            .flatten()
            .map(|v| (v, fwd))
    });
    let fwd: Vec<f64> = ends.iter().flatten().filter(|e| e.1).map(|e| e.0).collect();
    let bwd: Vec<f64> = ends
        .iter()
        .flatten()
        .filter(|e| !e.1)
        .map(|e| e.0)
        .collect();
    let tol = o.merge_tol;
    let mut cands: Vec<(f64, bool)> = cluster(fwd, tol).into_iter().map(|v| (v, true)).collect();
    cands.extend(cluster(bwd, tol).into_iter().map(|v| (v, false)));

    let swept = par::map(&cands, |&(v, fwd)| {
        sweep(r, lambda, w, v, fwd, bx, Role::Interior, o)
            .ok()
            .flatten()
    });
    let mut all: Vec<CorrectorSolution> = vec![bottom, top];
    for s in swept.into_iter().flatten() {
        let (a, b) = half_means(&s);
        if (a - b).abs() > o.transit_tol {
            continue;
        }
        if all
            .iter()
            .any(|t| sup_diff(t, &s) <= o.merge_tol.max(1e3 * o.tol))
        {
            continue;
        }
        // Strictly inside the extremal pair.
        if s.f.iter().zip(&all[0].f).any(|(x, y)| x <= y)
            || s.f.iter().zip(&all[1].f).any(|(x, y)| x >= y)
        {
            continue;
        }
        all.push(s);
    }
    all.sort_by(|a, b| a.trimmed_mean(1.0).total_cmp(&b.trimmed_mean(1.0)));
    // Interior candidates that cross each other are transients as well.
    let mut keep: Vec<CorrectorSolution> = vec![];
    for s in all {
        if let Some(prev) = keep.last() {
            if s.f.iter().zip(&prev.f).any(|(x, y)| x <= y) {
                if s.role == Role::Maximal {
                    keep.pop();
                } else {
                    continue;
                }
            }
        }
        keep.push(s);
    }
    Ok(Branches {
        lambda,
        solutions: keep,
    })
}
