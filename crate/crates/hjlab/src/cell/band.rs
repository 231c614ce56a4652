//! Sublevel-set extents of `H(x, ·)` and related window scans.

use serde::{Deserialize, Serialize};

use crate::env::{FrozenH, Realization};
use crate::par;

/// `p_minus = inf_x inf{p : H(x,p) ≤ λ}`, `p_plus = sup_x sup{p : H(x,p) ≤ λ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleBand {
    pub lambda: f64,
    pub p_minus: f64,
    pub p_plus: f64,
    /// No x in the window has a nonempty sublevel set.
    pub empty: bool,
}

impl AdmissibleBand {
    pub fn width(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            self.p_plus - self.p_minus
        }
    }
}

/// Default x-spacing of window scans.
pub const SCAN_DX: f64 = 1.0 / 64.0;

/// Smallest power of two `P ≥ 1` with `H(±P) > level`.
fn outer_scale(h: &FrozenH, level: f64) -> f64 {
    let mut p = 1.0;
    while p < 1e8 && (h.value(p) <= level || h.value(-p) <= level) {
        p *= 2.0;
    }
    p
}

/// Outermost point of `{p : H(p) ≤ level}` scanning from `start` towards
/// zero in direction `-sign`, or `None` when the set is empty.
fn sublevel_edge(h: &FrozenH, level: f64, outer: f64, sign: f64) -> Option<f64> {
    const N: usize = 128;
    let dp = 2.0 * outer / N as f64;
    let mut prev = sign * outer;
    for k in 1..=N {
        let p = sign * (outer - k as f64 * dp);
        if h.value(p) <= level {
            // H(p) ≤ level < H(prev): bisect the crossing.
            let (mut inside, mut outside) = (p, prev);
            for _ in 0..64 {
                let m = 0.5 * (inside + outside);
                if h.value(m) <= level {
                    inside = m;
                } else {
                    outside = m;
                }
                if (outside - inside).abs() <= 4.0 * f64::EPSILON * (1.0 + inside.abs()) {
                    break;
                }
            }
            return Some(inside);
        }
        prev = p;
    }
    None
}

/// Extent `(inf, sup)` of the sublevel set of one frozen Hamiltonian.
pub fn sublevel_extent(h: &FrozenH, level: f64) -> Option<(f64, f64)> {
    let outer = outer_scale(h, level);
    let hi = sublevel_edge(h, level, outer, 1.0)?;
    let lo = sublevel_edge(h, level, outer, -1.0)?;
    Some((lo, hi))
}

/// `min_p H(p)` by scan plus golden-section polish.
pub fn min_over_p(h: &FrozenH) -> f64 {
    let outer = outer_scale(h, h.value(0.0));
    const N: usize = 512;
    let dp = 2.0 * outer / N as f64;
    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for k in 0..=N {
        let p = -outer + k as f64 * dp;
        let v = h.value(p);
        if v < best {
            best = v;
            arg = p;
        }
    }
    let v = golden_min(|p| h.value(p), arg - dp, arg + dp);
    best.min(v)
}

fn golden_min(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..80 {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
    }
    gc.min(gd)
}

/// Scan nodes covering the window; a single node for x-free environments.
pub fn scan_nodes(r: &Realization, window: (f64, f64), dx: f64) -> Vec<f64> {
    if r.is_x_free() || r.hamiltonian().is_x_free() {
        return vec![window.0];
    }
    let n = ((window.1 - window.0) / dx).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| window.0 + (window.1 - window.0) * i as f64 / n as f64)
        .collect()
}

/// Grid estimate of `p_λ^±` over the window, polished around the extremal x.
pub fn p_bounds(r: &Realization, lambda: f64, window: (f64, f64)) -> AdmissibleBand {
    p_bounds_with(r, lambda, window, SCAN_DX)
}

pub fn p_bounds_with(r: &Realization, lambda: f64, window: (f64, f64), dx: f64) -> AdmissibleBand {
    let xs = scan_nodes(r, window, dx);
    let ext = par::map(&xs, |&x| sublevel_extent(&r.freeze(x), lambda));
    let mut lo = (f64::INFINITY, 0.0);
    let mut hi = (f64::NEG_INFINITY, 0.0);
    for (&x, e) in xs.iter().zip(&ext) {
        if let Some((a, b)) = *e {
            if a < lo.0 {
                lo = (a, x);
            }
            if b > hi.0 {
                hi = (b, x);
            }
        }
    }
    if !hi.0.is_finite() {
        return AdmissibleBand {
            lambda,
            p_minus: f64::NAN,
            p_plus: f64::NAN,
            empty: true,
        };
    }
    if xs.len() > 1 {
        let step = (window.1 - window.0) / (xs.len() - 1) as f64;
        let clamp = |x: f64| x.clamp(window.0, window.1);
        let up = |x: f64| {
            sublevel_extent(&r.freeze(clamp(x)), lambda).map_or(f64::NEG_INFINITY, |e| e.1)
        };
        let down =
            |x: f64| sublevel_extent(&r.freeze(clamp(x)), lambda).map_or(f64::INFINITY, |e| e.0);
        hi.0 = hi.0.max(-golden_min(|x| -up(x), hi.1 - step, hi.1 + step));
        lo.0 = lo.0.min(golden_min(down, lo.1 - step, lo.1 + step));
    }
    AdmissibleBand {
        lambda,
        p_minus: lo.0,
        p_plus: hi.0,
        empty: false,
    }
}

/// `inf_x min_p H(x, p)` over the window.
pub fn min_h(r: &Realization, window: (f64, f64)) -> f64 {
    let xs = scan_nodes(r, window, SCAN_DX);
    let v = par::map(&xs, |&x| min_over_p(&r.freeze(x)));
    let (mut best, mut arg) = (f64::INFINITY, window.0);
    for (&x, &m) in xs.iter().zip(&v) {
        if m < best {
            best = m;
            arg = x;
        }
    }
    if xs.len() > 1 {
        let step = (window.1 - window.0) / (xs.len() - 1) as f64;
        let g = |x: f64| min_over_p(&r.freeze(x.clamp(window.0, window.1)));
        best = best.min(golden_min(g, arg - step, arg + step));
    }
    best
}

/// `sup_x H(x, 0)` over the window.
pub fn max_h_at_zero(r: &Realization, window: (f64, f64)) -> f64 {
    let xs = scan_nodes(r, window, SCAN_DX);
    let (mut best, mut arg) = (f64::NEG_INFINITY, window.0);
    for &x in &xs {
        let v = r.eval_h(x, 0.0);
        if v > best {
            best = v;
            arg = x;
        }
    }
    if xs.len() > 1 {
        let step = (window.1 - window.0) / (xs.len() - 1) as f64;
        let g = |x: f64| -r.eval_h(x.clamp(window.0, window.1), 0.0);
        best = best.max(-golden_min(g, arg - step, arg + step));
    }
    best
}
