//! A solution trapped between an ordered pair of fences.

use super::extremal::{snap_window, CellOptions, CorrectorRhs};
use super::ode::integrate;
use super::solution::{CorrectorSolution, Role};
use crate::env::Realization;
use crate::error::{Error, Result};

/// A fence as `x ↦ (g(x), g'(x))`.
pub type Fence<'a> = &'a (dyn Fn(f64) -> (f64, f64) + Sync);

/// Which way the funnel between the fences is invariant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Funnel {
    /// `m` subsolution, `M` supersolution: integrate forward.
    Forward,
    /// `m` supersolution, `M` subsolution: integrate backward.
    Backward,
}

/// `a g' + H(x, g) - λ` at `x`.
pub fn fence_residual(r: &Realization, lambda: f64, g: Fence, x: f64) -> f64 {
    let (v, d) = g(x);
    r.eval_a(x) * d + r.eval_h(x, v) - lambda
}

/// Classifies the pair, or reports the first node that breaks every pattern.
pub fn classify_fences(
    r: &Realization,
    lambda: f64,
    xs: &[f64],
    m: Fence,
    big_m: Fence,
    slack: f64,
) -> Result<Funnel> {
    let mut fwd = true;
    let mut bwd = true;
    for &x in xs {
        let (lo, hi) = (m(x).0, big_m(x).0);
        if lo > hi + slack {
            return Err(Error::Precondition(format!(
                "fences out of order at x = {x}: m = {lo}, M = {hi}"
            )));
        }
        let (rm, rh) = (
            fence_residual(r, lambda, m, x),
            fence_residual(r, lambda, big_m, x),
        );
        fwd &= rm <= slack && rh >= -slack;
        bwd &= rm >= -slack && rh <= slack;
        if !fwd && !bwd {
            return Err(Error::Precondition(format!(
                "fences are not a sub/super pair at x = {x}: residual(m) = {rm:.3e}, residual(M) = {rh:.3e}"
            )));
        }
    }
    Ok(if fwd {
        Funnel::Forward
    } else {
        Funnel::Backward
    })
}

/// Solution `f` with `m ≤ f ≤ M` on the window. The funnel between a sub-
/// and a supersolution is invariant in one direction, so a single trajectory
/// started between them stays trapped.
pub fn insert_between(
    r: &Realization,
    lambda: f64,
    window: (f64, f64),
    m: Fence,
    big_m: Fence,
    o: &CellOptions,
) -> Result<CorrectorSolution> {
    let (lo, hi, n) = snap_window(window, o.dx_out);
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * o.dx_out).collect();
    let slack = 1e-9;
    let dir = classify_fences(r, lambda, &xs, m, big_m, slack)?;
    let bottom = xs.iter().map(|&x| m(x).0).fold(f64::INFINITY, f64::min) - 1.0;
    let top = xs
        .iter()
        .map(|&x| big_m(x).0)
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    let (x0, x1) = match dir {
        Funnel::Forward => (lo, hi),
        Funnel::Backward => (hi, lo),
    };
    let y0 = 0.5 * (m(x0).0 + big_m(x0).0);
    let t = integrate(
        &CorrectorRhs { r, lambda },
        x0,
        y0,
        x1,
        &o.ivp((bottom, top)),
    )?;
    if !t.exit.is_completed() || t.len() != n + 1 {
        return Err(Error::Numerical(format!(
            "trajectory left the fences at x = {}",
            t.x_last
        )));
    }
    let (mut f, mut fp) = (t.y, t.dydx);
    if dir == Funnel::Backward {
        f.reverse();
        fp.reverse();
    }
    let tol = 1e3 * o.tol.max(1e-12);
    for (i, &x) in xs.iter().enumerate() {
        if f[i] < m(x).0 - tol || f[i] > big_m(x).0 + tol {
            return Err(Error::Numerical(format!(
                "trajectory escaped the funnel at x = {x}"
            )));
        }
    }
    Ok(CorrectorSolution::from_samples(
        r,
        lambda,
        xs,
        f,
        fp,
        Role::Inserted,
        o.tol,
    ))
}
