//! Adaptive integrator for scalar ODEs `y' = F(x, y)`.
//!
//! Dormand-Prince 5(4) with the 4th-order continuous extension; steps where
//! `|∂F/∂y|` exceeds a stiffness threshold fall back to implicit Euler with
//! step-doubling error control. The solution is recorded on a uniform output
//! grid, and integration stops when the solution leaves a box `[lo, hi]`.

use crate::error::{Error, Result};

/// Right-hand side with its y-derivative (used only by the implicit fallback).
pub trait Rhs {
    fn eval(&self, x: f64, y: f64) -> f64;
    fn dy(&self, x: f64, y: f64) -> f64;
}

impl<F, G> Rhs for (F, G)
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    fn eval(&self, x: f64, y: f64) -> f64 {
        (self.0)(x, y)
    }
    fn dy(&self, x: f64, y: f64) -> f64 {
        (self.1)(x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IvpOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// Output spacing; nodes are `x0 + k dx_out` in the direction of travel.
    pub dx_out: f64,
    /// Implicit fallback when `|∂F/∂y| > stiff_threshold`.
    pub stiff_threshold: f64,
    pub box_lo: f64,
    pub box_hi: f64,
}

impl Default for IvpOptions {
    fn default() -> Self {
        IvpOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: 1e-2,
            h_max: 0.25,
            h_min: 1e-12,
            dx_out: 1.0 / 64.0,
            stiff_threshold: 500.0,
            box_lo: f64::NEG_INFINITY,
            box_hi: f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exit {
    Completed,
    /// Left the box through the top at `x`.
    Above {
        x: f64,
    },
    /// Left the box through the bottom at `x`.
    Below {
        x: f64,
    },
}

impl Exit {
    pub fn is_completed(&self) -> bool {
        matches!(self, Exit::Completed)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IvpStats {
    pub accepted: usize,
    pub rejected: usize,
    pub implicit: usize,
}

/// Solution sampled at `x0 + k·dir·dx_out`, `k = 0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub x0: f64,
    pub dir: f64,
    pub dx_out: f64,
    pub y: Vec<f64>,
    pub dydx: Vec<f64>,
    pub exit: Exit,
    /// Last point reached (the exit point when the box was left).
    pub x_last: f64,
    pub y_last: f64,
    pub stats: IvpStats,
}

impl Trajectory {
    pub fn x(&self, k: usize) -> f64 {
        self.x0 + self.dir * self.dx_out * k as f64
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension on one step `[x, x + h]`.
#[derive(Clone, Copy, Debug)]
enum Dense {
    /// Dormand-Prince quartic: `r1 + t(r2 + (1-t)(r3 + t(r4 + (1-t) r5)))`.
    Dp { r: [f64; 5] },
    /// Cubic Hermite from endpoint values and slopes.
    Hermite { y0: f64, y1: f64, d0: f64, d1: f64 },
}

impl Dense {
    /// Value and x-derivative at fraction `t` of a step of length `h`.
    #[inline]
    fn eval(&self, t: f64, h: f64) -> (f64, f64) {
        match *self {
            Dense::Dp { r } => {
                let s = 1.0 - t;
                let a = r[3] + s * r[4];
                let b = r[2] + t * a;
                let c = r[1] + s * b;
                let y = r[0] + t * c;
                let da = -r[4];
                let db = a + t * da;
                let dc = -b + s * db;
                (y, (c + t * dc) / h)
            }
            Dense::Hermite { y0, y1, d0, d1 } => {
                let (t2, t3) = (t * t, t * t * t);
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                let y = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
                let dy = (6.0 * t2 - 6.0 * t) * (y0 - y1) / h
                    + (3.0 * t2 - 4.0 * t + 1.0) * d0
                    + (3.0 * t2 - 2.0 * t) * d1;
                (y, dy)
            }
        }
    }
}

struct Step {
    y1: f64,
    k7: f64,
    err: f64,
    dense: Dense,
}

#[inline]
fn dp_step<R: Rhs>(rhs: &R, x: f64, y: f64, k1: f64, h: f64, o: &IvpOptions) -> Option<Step> {
    let k2 = rhs.eval(x + C2 * h, y + h * A21 * k1);
    let k3 = rhs.eval(x + C3 * h, y + h * (A31 * k1 + A32 * k2));
    let k4 = rhs.eval(x + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
    let k5 = rhs.eval(
        x + C5 * h,
        y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4),
    );
    let k6 = rhs.eval(
        x + h,
        y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
    );
    let y1 = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
    let k7 = rhs.eval(x + h, y1);
    if !(y1.is_finite() && k7.is_finite() && k6.is_finite() && k5.is_finite()) {
        return None;
    }
    let e = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
    let sc = o.atol + o.rtol * y.abs().max(y1.abs());
    let r1 = y;
    let r2 = y1 - y;
    let r3 = h * k1 - r2;
    let r4 = r2 - h * k7 - r3;
    let r5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7);
    Some(Step {
        y1,
        k7,
        err: (e / sc).abs(),
        dense: Dense::Dp {
            r: [r1, r2, r3, r4, r5],
        },
    })
}

fn implicit_euler<R: Rhs>(rhs: &R, x: f64, y: f64, h: f64) -> Option<f64> {
    let x1 = x + h;
    let mut z = y + h * rhs.eval(x, y);
    if !z.is_finite() {
        z = y;
    }
    for _ in 0..30 {
        let g = z - y - h * rhs.eval(x1, z);
        let dg = 1.0 - h * rhs.dy(x1, z);
        if !(g.is_finite() && dg.is_finite()) || dg == 0.0 {
            return None;
        }
        let dz = g / dg;
        z -= dz;
        if dz.abs() <= 1e-14 * (1.0 + z.abs()) {
            return Some(z);
        }
    }
    None
}

/// Implicit Euler with one full step against two half steps; the
/// extrapolated value `2 y_half - y_full` is returned.
fn implicit_step<R: Rhs>(rhs: &R, x: f64, y: f64, k1: f64, h: f64, o: &IvpOptions) -> Option<Step> {
    let full = implicit_euler(rhs, x, y, h)?;
    let mid = implicit_euler(rhs, x, y, 0.5 * h)?;
    let half = implicit_euler(rhs, x + 0.5 * h, mid, 0.5 * h)?;
    let y1 = 2.0 * half - full;
    let k7 = rhs.eval(x + h, y1);
    if !(y1.is_finite() && k7.is_finite()) {
        return None;
    }
    let sc = o.atol + o.rtol * y.abs().max(y1.abs());
    Some(Step {
        y1,
        k7,
        err: ((half - full) / sc).abs(),
        dense: Dense::Hermite {
            y0: y,
            y1,
            d0: k1,
            d1: k7,
        },
    })
}

/// Integrates from `(x0, y0)` to `x_stop` (either direction).
pub fn integrate<R: Rhs>(
    rhs: &R,
    x0: f64,
    y0: f64,
    x_stop: f64,
    o: &IvpOptions,
) -> Result<Trajectory> {
    let dir = if x_stop >= x0 { 1.0 } else { -1.0 };
    let span = (x_stop - x0).abs();
    let n_out = (span / o.dx_out * (1.0 + 1e-12)).floor() as usize;
    let k1_0 = rhs.eval(x0, y0);
    if !k1_0.is_finite() {
        return Err(Error::Environment { x: x0 });
    }
    let mut tr = Trajectory {
        x0,
        dir,
        dx_out: o.dx_out,
        y: Vec::with_capacity(n_out + 1),
        dydx: Vec::with_capacity(n_out + 1),
        exit: Exit::Completed,
        x_last: x0,
        y_last: y0,
        stats: IvpStats::default(),
    };
    tr.y.push(y0);
    tr.dydx.push(k1_0);
    if y0 > o.box_hi || y0 < o.box_lo {
        tr.exit = if y0 > o.box_hi {
            Exit::Above { x: x0 }
        } else {
            Exit::Below { x: x0 }
        };
        return Ok(tr);
    }

    let (mut x, mut y, mut k1) = (x0, y0, k1_0);
    let mut h = o.h_init.min(o.h_max).min(span.max(o.h_min));
    let mut next_out = 1usize;
    let mut rejected_last = false;
    while (x_stop - x) * dir > 0.0 {
        let remaining = (x_stop - x).abs();
        let last = h >= remaining * (1.0 - 1e-12);
        let hs = dir * if last { remaining } else { h };
        let stiff = rhs.dy(x, y).abs() > o.stiff_threshold;
        let step = if stiff {
            implicit_step(rhs, x, y, k1, hs, o)
        } else {
            dp_step(rhs, x, y, k1, hs, o)
        };
        let step = match step {
            Some(s) if s.err <= 1.0 => s,
            step => {
                tr.stats.rejected += 1;
                let fac = match &step {
                    Some(s) if s.err.is_finite() && s.err > 0.0 => {
                        let p = if stiff { 0.5 } else { 0.2 };
                        (0.9 * s.err.powf(-p)).clamp(0.1, 0.9)
                    }
                    _ => 0.25,
                };
                h = hs.abs() * fac;
                rejected_last = true;
                if h < o.h_min {
                    return Err(if step.is_none() {
                        Error::Environment { x }
                    } else {
                        Error::Stiff { x, h }
                    });
                }
                continue;
            }
        };
        tr.stats.accepted += 1;
        if stiff {
            tr.stats.implicit += 1;
        }
        let x1 = if last { x_stop } else { x + hs };

        // Sample the dense output at grid nodes inside (x, x1].
        while next_out <= n_out {
            let xo = x0 + dir * o.dx_out * next_out as f64;
            if (xo - x1) * dir > 1e-12 * o.dx_out {
                break;
            }
            let t = ((xo - x) / hs).clamp(0.0, 1.0);
            let (yo, dyo) = step.dense.eval(t, hs);
            if yo > o.box_hi || yo < o.box_lo {
                let (xe, ye) = locate_exit(&step.dense, x, hs, t, o);
                tr.exit = if yo > o.box_hi {
                    Exit::Above { x: xe }
                } else {
                    Exit::Below { x: xe }
                };
                tr.x_last = xe;
                tr.y_last = ye;
                return Ok(tr);
            }
            tr.y.push(yo);
            tr.dydx.push(dyo);
            next_out += 1;
        }
        if step.y1 > o.box_hi || step.y1 < o.box_lo {
            let (xe, ye) = locate_exit(&step.dense, x, hs, 1.0, o);
            tr.exit = if step.y1 > o.box_hi {
                Exit::Above { x: xe }
            } else {
                Exit::Below { x: xe }
            };
            tr.x_last = xe;
            tr.y_last = ye;
            return Ok(tr);
        }

        x = x1;
        y = step.y1;
        k1 = step.k7;
        if !k1.is_finite() {
            return Err(Error::Environment { x });
        }
        let p = if stiff { 0.5 } else { 0.2 };
        let mut fac = if step.err > 0.0 {
            0.9 * step.err.powf(-p)
        } else {
            5.0
        };
        fac = fac.clamp(0.2, 5.0);
        if rejected_last {
            fac = fac.min(1.0);
        }
        rejected_last = false;
        h = (hs.abs() * fac).min(o.h_max);
        if h < o.h_min && (x_stop - x) * dir > o.h_min {
            return Err(Error::Stiff { x, h });
        }
    }
    tr.x_last = x;
    tr.y_last = y;
    Ok(tr)
}

/// Bisects the dense output on `[0, t_out]` for the first box crossing.
fn locate_exit(d: &Dense, x: f64, h: f64, t_out: f64, o: &IvpOptions) -> (f64, f64) {
    let outside = |t: f64| {
        let y = d.eval(t, h).0;
        y > o.box_hi || y < o.box_lo
    };
    let (mut a, mut b) = (0.0, t_out);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if outside(m) {
            b = m;
        } else {
            a = m;
        }
    }
    (x + b * h, d.eval(b, h).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn riccati(lambda: f64) -> impl Rhs {
        (
            move |_x: f64, y: f64| lambda - y * y,
            move |_x: f64, y: f64| -2.0 * y,
        )
    }

    #[test]
    fn fixed_point_stays_put() {
        let tr = integrate(&riccati(1.0), 0.0, 1.0, 5.0, &IvpOptions::default()).unwrap();
        assert!(tr.exit.is_completed());
        assert!(tr.y.iter().all(|&y| (y - 1.0).abs() < 1e-14));
        let tr = integrate(&riccati(1.0), 0.0, 1.0, -5.0, &IvpOptions::default()).unwrap();
        assert!(tr.y.iter().all(|&y| (y - 1.0).abs() < 1e-14));
    }

    #[test]
    fn riccati_closed_form() {
        // f' = λ - f², f(0) = 1 > √λ: f = √λ coth(√λ x + c)
        let l: f64 = 0.5;
        let s = l.sqrt();
        let c = (1.0 / s).atanh_coth();
        let o = IvpOptions {
            dx_out: 0.125,
            ..IvpOptions::default()
        };
        let tr = integrate(&riccati(l), 0.0, 1.0, 10.0, &o).unwrap();
        for k in 0..tr.len() {
            let x = tr.x(k);
            let exact = s / (s * x + c).tanh();
            let dexact = l - exact * exact;
            assert!((tr.y[k] - exact).abs() < 1e-9, "x={x}");
            assert!((tr.dydx[k] - dexact).abs() < 1e-7, "x={x}");
        }
        assert!((tr.y_last - s).abs() < 1e-6);
    }

    trait AtanhCoth {
        fn atanh_coth(self) -> f64;
    }
    impl AtanhCoth for f64 {
        /// `c` with `coth(c) = self`.
        fn atanh_coth(self) -> f64 {
            0.5 * ((self + 1.0) / (self - 1.0)).ln()
        }
    }

    #[test]
    fn blowup_below_repelling_branch() {
        let o = IvpOptions {
            box_lo: -10.0,
            box_hi: 10.0,
            ..IvpOptions::default()
        };
        let tr = integrate(&riccati(1.0), 0.0, -1.001, 50.0, &o).unwrap();
        let Exit::Below { x } = tr.exit else {
            panic!("{:?}", tr.exit)
        };
        // f = -coth(c - x) with coth(c) = 1.001; exits -10 where coth(c - x) = 10
        let c = 0.5 * (2.001f64 / 0.001).ln();
        let xe = c - 0.5 * (11.0f64 / 9.0).ln();
        assert!((x - xe).abs() < 1e-6, "{x} vs {xe}");
        assert!((tr.y_last + 10.0).abs() < 1e-6);
    }

    #[test]
    fn dense_output_is_fourth_order() {
        // Interpolation error at off-step points drops by ~2^5 per halving of h.
        let rhs = (|x: f64, y: f64| -y + x.sin(), |_x: f64, _y: f64| -1.0);
        let exact = |x: f64| 1.5 * (-x).exp() + 0.5 * (x.sin() - x.cos());
        let mut errs = vec![];
        for &h in &[0.4, 0.2, 0.1] {
            let o = IvpOptions {
                rtol: 1.0,
                atol: 1.0,
                h_init: h,
                h_max: h,
                dx_out: 0.05 * 0.999,
                ..IvpOptions::default()
            };
            let tr = integrate(&rhs, 0.0, 1.0, 4.0, &o).unwrap();
            let e = (0..tr.len())
                .map(|k| (tr.y[k] - exact(tr.x(k))).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!(r1 > 3.7 && r2 > 3.7, "orders {r1} {r2}");
    }

    #[test]
    fn stiff_fallback_tracks_slow_manifold() {
        // y' = -k (y - cos x), k large: y ≈ cos x + sin(x)/k.
        let k = 1e4;
        let rhs = (
            move |x: f64, y: f64| -k * (y - x.cos()),
            move |_x: f64, _y: f64| -k,
        );
        let o = IvpOptions {
            rtol: 1e-8,
            atol: 1e-8,
            ..IvpOptions::default()
        };
        let tr = integrate(&rhs, 0.0, 1.0, 3.0, &o).unwrap();
        assert!(tr.stats.implicit > 0);
        let x = tr.x(tr.len() - 1);
        assert!((tr.y_last - (x.cos() + x.sin() / k)).abs() < 1e-5);
    }

    #[test]
    fn nan_coefficients_reported() {
        let rhs = (
            |x: f64, _y: f64| if x > 1.0 { f64::NAN } else { 0.0 },
            |_x: f64, _y: f64| 0.0,
        );
        let r = integrate(&rhs, 0.0, 0.0, 3.0, &IvpOptions::default());
        assert!(matches!(r, Err(Error::Environment { x }) if (x - 1.0).abs() < 1e-6));
    }
}
