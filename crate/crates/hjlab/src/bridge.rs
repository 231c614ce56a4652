//! Shooting between two ordered stationary solutions and mollified gluing.
//!
//! A descent starts on the upper solution `f2` at a level `μ < λ` and runs
//! forward until it meets the lower solution `f1` (crossed) or reaches the
//! window end strictly between them (confined). An ascent mirrors this from
//! `f1` at `μ > λ`. A crossed shoot joins the two solutions into a
//! Lipschitz function whose mollification is an approximate one-sided
//! solution at level `μ`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{integrate, CellOptions, CorrectorRhs, CorrectorSolution};
use crate::env::Realization;
use crate::error::{Error, Result};
use crate::io::csv::CsvWriter;
use crate::io::write_json;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Descend,
    Ascend,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Crossed,
    Confined,
}

/// One shooting trajectory from `start_x` at level `mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeResult {
    pub direction: Direction,
    pub mu: f64,
    pub lambda: f64,
    pub n: f64,
    pub start_x: f64,
    /// First meeting point with the target solution; `None` when confined.
    pub crossing_x: Option<f64>,
    /// Nodes `start_x + k dx` strictly before the crossing.
    pub grid_x: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub verdict: Verdict,
    /// Smallest distance to the lower and upper solutions after the start.
    pub min_gap_lower: f64,
    pub min_gap_upper: f64,
    pub tol: f64,
}

impl BridgeResult {
    /// CSV `x,value,residual` plus a JSON header.
    pub fn write(&self, r: &Realization, csv_path: &Path) -> Result<()> {
        let mut w = CsvWriter::create(csv_path, &["x", "value", "residual"])?;
        for i in 0..self.grid_x.len() {
            let x = self.grid_x[i];
            let res = r.eval_a(x) * self.derivs[i] + r.eval_h(x, self.values[i]) - self.mu;
            w.row(&[x, self.values[i], res])?;
        }
        w.finish()?;
        write_json(
            &csv_path.with_extension("json"),
            &serde_json::json!({
                "direction": self.direction,
                "mu": self.mu,
                "lambda": self.lambda,
                "n": self.n,
                "start_x": self.start_x,
                "crossing_x": self.crossing_x,
                "verdict": self.verdict,
                "min_gap_lower": self.min_gap_lower,
                "min_gap_upper": self.min_gap_upper,
                "tol": self.tol,
            }),
        )
    }
}

fn check_pair(f1: &CorrectorSolution, f2: &CorrectorSolution, n: f64) -> Result<()> {
    if f1.grid_x.len() != f2.grid_x.len() || (f1.window.0 - f2.window.0).abs() > 1e-9 {
        return Err(Error::Precondition("f1 and f2 must share a grid".into()));
    }
    if (f1.lambda - f2.lambda).abs() > 1e-12 {
        return Err(Error::Precondition("f1 and f2 must have the same λ".into()));
    }
    if let Some(i) = (0..f1.len()).find(|&i| f1.f[i] >= f2.f[i]) {
        return Err(Error::Precondition(format!(
            "f1 < f2 fails at x = {}",
            f1.grid_x[i]
        )));
    }
    if f1.window.0 > -n + 1e-9 || f1.window.1 < n - 1e-9 {
        return Err(Error::Precondition(format!(
            "window {:?} does not contain [-{n}, {n}]",
            f1.window
        )));
    }
    Ok(())
}

fn shoot(
    r: &Realization,
    f1: &CorrectorSolution,
    f2: &CorrectorSolution,
    mu: f64,
    n: f64,
    direction: Direction,
    o: &CellOptions,
) -> Result<BridgeResult> {
    check_pair(f1, f2, n)?;
    let lambda = f1.lambda;
    match direction {
        Direction::Descend if mu >= lambda => {
            return Err(Error::Precondition(format!(
                "descent needs μ < λ ({mu} ≥ {lambda})"
            )))
        }
        Direction::Ascend if mu <= lambda => {
            return Err(Error::Precondition(format!(
                "ascent needs μ > λ ({mu} ≤ {lambda})"
            )))
        }
        _ => {}
    }
    let dx = f1.dx();
    let k0 = ((-n - f1.window.0) / dx).round() as usize;
    let mut tol = o.tol;
    for _attempt in 0..2 {
        match shoot_once(r, f1, f2, mu, n, k0, direction, tol, o)? {
            Some(b) => return Ok(b),
            None => tol *= 1e-2,
        }
    }
    Err(Error::Numerical(format!(
        "shoot at μ = {mu} left the pair on the wrong side even at tol {tol:e}"
    )))
}

#[allow(clippy::too_many_arguments)]
fn shoot_once(
    r: &Realization,
    f1: &CorrectorSolution,
    f2: &CorrectorSolution,
    mu: f64,
    n: f64,
    k0: usize,
    direction: Direction,
    tol: f64,
    o: &CellOptions,
) -> Result<Option<BridgeResult>> {
    let dx = f1.dx();
    let x0 = f1.grid_x[k0];
    let x_end = f1.window.1;
    let (from, target) = match direction {
        Direction::Descend => (f2, f1),
        Direction::Ascend => (f1, f2),
    };
    // Signed distance to the target; positive before the crossing.
    let sign = if direction == Direction::Descend {
        1.0
    } else {
        -1.0
    };
    let bx = (f1.min() - 1.0, f2.max() + 1.0);
    let opts = CellOptions {
        tol,
        dx_out: dx,
        ..*o
    };
    let t = integrate(
        &CorrectorRhs { r, lambda: mu },
        x0,
        from.f[k0],
        x_end,
        &opts.ivp(bx),
    )?;

    let slack = 1e3 * tol.max(1e-14) * (1.0 + bx.0.abs().max(bx.1.abs()));
    let (mut gap_lo, mut gap_hi) = (f64::INFINITY, f64::INFINITY);
    let mut crossing = None;
    let mut kept = 0;
    for (k, &g) in t.y.iter().enumerate() {
        let i = k0 + k;
        let d = sign * (g - target.f[i]);
        if d <= 0.0 {
            let (xp, dp) = (f1.grid_x[i - 1], sign * (t.y[k - 1] - target.f[i - 1]));
            crossing = Some(xp + dx * dp / (dp - d));
            break;
        }
        if k > 0 {
            // Wrong-side exit through the starting solution.
            let back = sign * (from.f[i] - g);
            if back < -slack {
                return Ok(None);
            }
            gap_lo = gap_lo.min(g - f1.f[i]);
            gap_hi = gap_hi.min(f2.f[i] - g);
        }
        kept = k + 1;
    }
    if crossing.is_none() && !t.exit.is_completed() {
        // Left the box between nodes: the target was crossed on the way.
        let i = k0 + kept - 1;
        let (xp, dp) = (f1.grid_x[i], sign * (t.y[kept - 1] - target.f[i]));
        let de = sign * (t.y_last - target.value_at(t.x_last));
        if de >= 0.0 {
            return Ok(None);
        }
        crossing = Some(xp + (t.x_last - xp) * dp / (dp - de));
    }
    let verdict = if crossing.is_some() {
        Verdict::Crossed
    } else {
        Verdict::Confined
    };
    Ok(Some(BridgeResult {
        direction,
        mu,
        lambda: f1.lambda,
        n,
        start_x: x0,
        crossing_x: crossing,
        grid_x: f1.grid_x[k0..k0 + kept].to_vec(),
        values: t.y[..kept].to_vec(),
        derivs: t.dydx[..kept].to_vec(),
        verdict,
        min_gap_lower: gap_lo,
        min_gap_upper: gap_hi,
        tol,
    }))
}

/// Forward from `(-n, f2(-n))` at level `μ < λ` until `f1` is met.
pub fn shoot_descend(
    r: &Realization,
    f1: &CorrectorSolution,
    f2: &CorrectorSolution,
    mu: f64,
    n: f64,
    o: &CellOptions,
) -> Result<BridgeResult> {
    shoot(r, f1, f2, mu, n, Direction::Descend, o)
}

/// Forward from `(-n, f1(-n))` at level `μ > λ` until `f2` is met.
pub fn shoot_ascend(
    r: &Realization,
    f1: &CorrectorSolution,
    f2: &CorrectorSolution,
    mu: f64,
    n: f64,
    o: &CellOptions,
) -> Result<BridgeResult> {
    shoot(r, f1, f2, mu, n, Direction::Ascend, o)
}

/// Quintic smoothstep rising from 0 at `a` to 1 at `b`.
fn smoothstep(a: f64, b: f64, x: f64) -> (f64, f64) {
    if x <= a {
        return (0.0, 0.0);
    }
    if x >= b {
        return (1.0, 0.0);
    }
    let w = b - a;
    let t = (x - a) / w;
    let v = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    let d = 30.0 * t * t * (1.0 - t) * (1.0 - t) / w;
    (v, d)
}

/// Support of the cutoff: 0 outside `(outer_lo, outer_hi)`, 1 on `[inner_lo, inner_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub outer_lo: f64,
    pub inner_lo: f64,
    pub inner_hi: f64,
    pub outer_hi: f64,
    /// `sup |ξ'| = 15 / (8 width)`.
    pub xi_prime_sup: f64,
}

impl Cutoff {
    fn eval(&self, x: f64) -> (f64, f64) {
        if x < self.inner_lo {
            smoothstep(self.outer_lo, self.inner_lo, x)
        } else if x > self.inner_hi {
            let (v, d) = smoothstep(self.inner_hi, self.outer_hi, x);
            (1.0 - v, -d)
        } else {
            (1.0, 0.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlueOptions {
    pub n_start: usize,
    pub n_cap: usize,
    /// Width of each smoothstep ramp.
    pub ramp: f64,
}

impl Default for GlueOptions {
    fn default() -> Self {
        GlueOptions {
            n_start: 4,
            n_cap: 4096,
            ramp: 1.0,
        }
    }
}

/// Mollified and blended bridge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluedFunction {
    pub direction: Direction,
    pub mu: f64,
    pub epsilon: f64,
    pub grid_x: Vec<f64>,
    pub g_eps: Vec<f64>,
    pub g_eps_prime: Vec<f64>,
    /// `a g' + H(x, g) - μ` per node.
    pub residual: Vec<f64>,
    /// `(left solution, bridge, right solution)` labels.
    pub pieces: (String, String, String),
    pub mollifier_index: usize,
    pub cutoff: Cutoff,
    pub residual_min: f64,
    pub residual_max: f64,
}

impl GluedFunction {
    /// The one-sided bound: `> μ - 2ε` for descents, `< μ + 2ε` for ascents.
    pub fn bound(&self) -> f64 {
        match self.direction {
            Direction::Descend => -2.0 * self.epsilon,
            Direction::Ascend => 2.0 * self.epsilon,
        }
    }

    pub fn holds(&self) -> bool {
        match self.direction {
            Direction::Descend => self.residual_min > self.bound(),
            Direction::Ascend => self.residual_max < self.bound(),
        }
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = CsvWriter::create(csv_path, &["x", "value", "residual"])?;
        for i in 0..self.grid_x.len() {
            w.row(&[self.grid_x[i], self.g_eps[i], self.residual[i]])?;
        }
        w.finish()?;
        write_json(
            &csv_path.with_extension("json"),
            &serde_json::json!({
                "direction": self.direction,
                "mu": self.mu,
                "epsilon": self.epsilon,
                "n": self.mollifier_index,
                "pieces": self.pieces,
                "cutoff": self.cutoff,
                "residual_min": self.residual_min,
                "residual_max": self.residual_max,
                "holds": self.holds(),
            }),
        )
    }
}

/// Discrete hat weights of half-width `1/n` on spacing `dx` (normalized).
fn hat_weights(n: usize, dx: f64) -> Vec<f64> {
    let half = 1.0 / n as f64;
    let m = (half / dx).floor() as usize;
    let mut w: Vec<f64> = (0..=m)
        .map(|k| (1.0 - k as f64 * dx / half).max(0.0))
        .collect();
    let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
    for v in &mut w {
        *v /= total;
    }
    w
}

fn convolve(v: &[f64], w: &[f64]) -> Vec<f64> {
    let len = v.len() as isize;
    let m = w.len() as isize - 1;
    let mut out = vec![0.0; v.len()];
    par::fill_indexed(&mut out, |i| {
        let i = i as isize;
        let mut s = 0.0;
        for k in -m..=m {
            let j = (i + k).clamp(0, len - 1) as usize;
            s += w[k.unsigned_abs()] * v[j];
        }
        s
    });
    out
}

/// Glues `f_left` / bridge / `f_right`, convolves with a hat kernel of
/// half-width `1/n` and blends with a smoothstep cutoff around the bridge
/// inflated by `r_margin`. `n` doubles until the one-sided residual bound
/// holds at every node.
#[allow(clippy::too_many_arguments)]
pub fn mollify_glue(
    r: &Realization,
    f_left: &CorrectorSolution,
    f_right: &CorrectorSolution,
    bridge: &BridgeResult,
    mu: f64,
    epsilon: f64,
    r_margin: f64,
    o: &GlueOptions,
) -> Result<GluedFunction> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!(
            "ε must be positive, got {epsilon}"
        )));
    }
    if bridge.verdict != Verdict::Crossed {
        return Err(Error::Precondition("gluing needs a crossed bridge".into()));
    }
    if f_left.grid_x.len() != f_right.grid_x.len()
        || (f_left.window.0 - f_right.window.0).abs() > 1e-9
    {
        return Err(Error::Precondition(
            "f_left and f_right must share a grid".into(),
        ));
    }
    let xs = &f_left.grid_x;
    let dx = f_left.dx();
    let start = bridge.start_x;
    let cross = bridge.crossing_x.expect("crossed");
    let k0 = ((start - xs[0]) / dx).round() as usize;
    let kb = bridge.values.len();

    // Piecewise g and its one-sided-averaged derivative.
    let mut g = Vec::with_capacity(xs.len());
    let mut gp = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        if i < k0 {
            g.push(f_left.f[i]);
            gp.push(f_left.f_prime[i]);
        } else if i < k0 + kb {
            g.push(bridge.values[i - k0]);
            gp.push(if i == k0 {
                0.5 * (f_left.f_prime[i] + bridge.derivs[0])
            } else {
                bridge.derivs[i - k0]
            });
        } else {
            debug_assert!(x > cross - 1e-12);
            g.push(f_right.f[i]);
            gp.push(f_right.f_prime[i]);
        }
    }

    let zero_length = kb <= 1 && f_left.f == f_right.f;
    let cutoff = {
        let (a, b) = (start - r_margin, cross + r_margin);
        Cutoff {
            outer_lo: a - o.ramp,
            inner_lo: a,
            inner_hi: b,
            outer_hi: b + o.ramp,
            xi_prime_sup: 15.0 / (8.0 * o.ramp),
        }
    };
    let xi: Vec<(f64, f64)> = xs.iter().map(|&x| cutoff.eval(x)).collect();
    let pieces = (
        format!("{:?}@{}", f_left.role, f_left.lambda),
        format!("{:?}@{}", bridge.direction, bridge.mu),
        format!("{:?}@{}", f_right.role, f_right.lambda),
    );

    let build = |n: usize| -> GluedFunction {
        let (ge, gep) = if zero_length {
            (g.clone(), gp.clone())
        } else {
            let w = hat_weights(n, dx);
            let (gn, gnp) = (convolve(&g, &w), convolve(&gp, &w));
            let mut ge = g.clone();
            let mut gep = gp.clone();
            for i in 0..xs.len() {
                let (v, d) = xi[i];
                if v > 0.0 || d != 0.0 {
                    ge[i] = v * gn[i] + (1.0 - v) * g[i];
                    gep[i] = d * (gn[i] - g[i]) + v * gnp[i] + (1.0 - v) * gp[i];
                }
            }
            (ge, gep)
        };
        let residual: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| r.eval_a(x) * gep[i] + r.eval_h(x, ge[i]) - mu)
            .collect();
        let residual_min = residual.iter().copied().fold(f64::INFINITY, f64::min);
        let residual_max = residual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        GluedFunction {
            direction: bridge.direction,
            mu,
            epsilon,
            grid_x: xs.clone(),
            g_eps: ge,
            g_eps_prime: gep,
            residual,
            pieces: pieces.clone(),
            mollifier_index: n,
            cutoff,
            residual_min,
            residual_max,
        }
    };

    let mut n = o.n_start.max(1);
    loop {
        let out = build(n);
        if out.holds() {
            return Ok(out);
        }
        if n >= o.n_cap {
            let worst = match out.direction {
                Direction::Descend => out
                    .residual
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1)),
                Direction::Ascend => out
                    .residual
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1)),
            }
            .map(|(i, &v)| (xs[i], v))
            .unwrap_or((f64::NAN, f64::NAN));
            return Err(Error::Numerical(format!(
                "residual bound not reached by n = {n}: worst node x = {}, residual {:.4e}",
                worst.0, worst.1
            )));
        }
        n *= 2;
    }
}

/// What the shoots at one level say about the set of solutions strictly
/// between `f1` and `f2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    /// Crossed at every n: numerical evidence of emptiness.
    Empty,
    /// Confined at every n.
    Nonempty,
    Inconclusive,
    /// μ = λ, excluded.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapLevel {
    pub mu: f64,
    pub verdicts: Vec<(f64, Verdict)>,
    pub evidence: Evidence,
    pub note: String,
}

/// Runs descent (μ < λ) or ascent (μ > λ) shoots across the n schedule
/// for every μ.
pub fn detect_gap_level(
    r: &Realization,
    f1: &CorrectorSolution,
    f2: &CorrectorSolution,
    mu_grid: &[f64],
    n_schedule: &[f64],
    o: &CellOptions,
) -> Vec<GapLevel> {
    let lambda = f1.lambda;
    par::map(mu_grid, |&mu| {
        if (mu - lambda).abs() <= 1e-14 * (1.0 + lambda.abs()) {
            return GapLevel {
                mu,
                verdicts: vec![],
                evidence: Evidence::Skipped,
                note: "μ = λ".into(),
            };
        }
        let mut verdicts = vec![];
        let mut note = String::new();
        for &n in n_schedule {
            let res = if mu < lambda {
                shoot_descend(r, f1, f2, mu, n, o)
            } else {
                shoot_ascend(r, f1, f2, mu, n, o)
            };
            match res {
                Ok(b) => verdicts.push((n, b.verdict)),
                Err(e) => {
                    note = format!("n = {n}: {e}");
                    break;
                }
            }
        }
        let all = |v: Verdict| !verdicts.is_empty() && verdicts.iter().all(|p| p.1 == v);
        let evidence = if !note.is_empty() {
            Evidence::Inconclusive
        } else if all(Verdict::Crossed) {
            Evidence::Empty
        } else if all(Verdict::Confined) {
            Evidence::Nonempty
        } else {
            Evidence::Inconclusive
        };
        GapLevel {
            mu,
            verdicts,
            evidence,
            note,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{bounded_solution_window, Extremal};
    use crate::env::{sample_realization, EnvironmentSpec, FieldModel, Kernel};

    fn quad() -> Realization {
        sample_realization(
            &EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, FieldModel::constant(0.0)),
            0,
        )
        .unwrap()
    }

    fn pair(r: &Realization, lambda: f64, w: (f64, f64)) -> (CorrectorSolution, CorrectorSolution) {
        let o = CellOptions::default();
        (
            bounded_solution_window(r, lambda, w, Extremal::Minimal, &o).unwrap(),
            bounded_solution_window(r, lambda, w, Extremal::Maximal, &o).unwrap(),
        )
    }

    #[test]
    fn riccati_descent_confined_and_crossed() {
        let r = quad();
        let (f1, f2) = pair(&r, 1.0, (-10.0, 10.0));
        let o = CellOptions::default();
        let b = shoot_descend(&r, &f1, &f2, 0.5, 10.0, &o).unwrap();
        assert_eq!(b.verdict, Verdict::Confined);
        assert!((b.values.last().unwrap() - 0.5f64.sqrt()).abs() < 1e-6);
        assert!(b.min_gap_upper > 0.0 && b.min_gap_lower > 0.0);

        // f' = -0.5 - f^2 from f = 1: f = -s tan(s x' - atan(1/s)), s = √0.5.
        let b = shoot_descend(&r, &f1, &f2, -0.5, 10.0, &o).unwrap();
        assert_eq!(b.verdict, Verdict::Crossed);
        let s = 0.5f64.sqrt();
        let xe = ((1.0 / s).atan() + (1.0 / s).atan()) / s - 10.0;
        assert!(
            (b.crossing_x.unwrap() - xe).abs() < 1e-4,
            "{:?} vs {xe}",
            b.crossing_x
        );
    }

    #[test]
    fn riccati_ascent_crosses() {
        let r = quad();
        let (f1, f2) = pair(&r, 1.0, (-10.0, 10.0));
        let b = shoot_ascend(&r, &f1, &f2, 2.0, 10.0, &CellOptions::default()).unwrap();
        assert_eq!(b.verdict, Verdict::Crossed);
        // f' = 2 - f^2 from -1: atanh(f/√2)/√2 runs from atanh(-1/√2) to atanh(1/√2).
        let s = 2f64.sqrt();
        let xe = 2.0 * (1.0 / s).atanh() / s - 10.0;
        assert!((b.crossing_x.unwrap() - xe).abs() < 1e-4);
    }

    #[test]
    fn preconditions() {
        let r = quad();
        let (f1, f2) = pair(&r, 1.0, (-10.0, 10.0));
        let o = CellOptions::default();
        assert!(matches!(
            shoot_descend(&r, &f2, &f2, 0.5, 5.0, &o),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            shoot_ascend(&r, &f1, &f2, 1.0, 5.0, &o),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            shoot_descend(&r, &f1, &f2, 0.5, 20.0, &o),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn glue_descent_meets_bound() {
        let r = quad();
        let (f1, f2) = pair(&r, 1.0, (-10.0, 10.0));
        let b = shoot_descend(&r, &f1, &f2, -0.5, 10.0, &CellOptions::default()).unwrap();
        let g = mollify_glue(&r, &f2, &f1, &b, -0.5, 0.1, 0.5, &GlueOptions::default()).unwrap();
        assert!(g.residual_min > -0.7 + 0.5, "{}", g.residual_min);
        assert!(g.holds());
        // Exact outside the inflated region.
        for (i, &x) in g.grid_x.iter().enumerate() {
            if x < g.cutoff.outer_lo {
                assert_eq!(g.g_eps[i], f2.f[i]);
            }
            if x > g.cutoff.outer_hi {
                assert_eq!(g.g_eps[i], f1.f[i]);
            }
        }
    }

    #[test]
    fn glue_rejects_nonpositive_epsilon() {
        let r = quad();
        let (f1, f2) = pair(&r, 1.0, (-10.0, 10.0));
        let b = shoot_descend(&r, &f1, &f2, -0.5, 10.0, &CellOptions::default()).unwrap();
        let e = mollify_glue(&r, &f2, &f1, &b, -0.5, 0.0, 0.5, &GlueOptions::default());
        assert!(matches!(e, Err(Error::Precondition(_))));
    }

    #[test]
    fn gap_levels() {
        let r = quad();
        let (f1, f2) = pair(&r, 1.0, (-40.0, 40.0));
        let rep = detect_gap_level(
            &r,
            &f1,
            &f2,
            &[-0.5, 0.5, 1.0],
            &[10.0, 20.0],
            &CellOptions::default(),
        );
        assert_eq!(rep[0].evidence, Evidence::Empty);
        assert_eq!(rep[1].evidence, Evidence::Nonempty);
        assert_eq!(rep[2].evidence, Evidence::Skipped);
    }

    #[test]
    fn hat_weights_sum_to_one() {
        for n in [1, 3, 16, 100] {
            let w = hat_weights(n, 1.0 / 64.0);
            let s = w[0] + 2.0 * w[1..].iter().sum::<f64>();
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert_eq!(hat_weights(1000, 1.0 / 64.0), vec![1.0]);
    }
}
