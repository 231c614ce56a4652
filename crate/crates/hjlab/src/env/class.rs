//! Empirical class membership checks and the quartic truncation.

use serde::{Deserialize, Serialize};

use super::{ClassParams, Hamiltonian, Realization};

/// Grid point at which a bound is worst.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: f64,
    pub y: f64,
    pub p: f64,
    pub q: f64,
}

/// One inequality family. `worst_excess` is `max(lhs - rhs)` over the grid;
/// the check passes when it is at most the slack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCheck {
    pub name: String,
    pub worst_excess: f64,
    pub worst_ratio: f64,
    pub passed: bool,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub params: ClassParams,
    pub kappa_built: f64,
    pub checks: Vec<ClassCheck>,
    pub passed: bool,
}

impl ClassReport {
    pub fn check(&self, name: &str) -> Option<&ClassCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    excess: f64,
    ratio: f64,
    witness: Option<Witness>,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Tracker {
            name,
            excess: f64::NEG_INFINITY,
            ratio: 0.0,
            witness: None,
        }
    }

    fn push(&mut self, lhs: f64, rhs: f64, w: Witness) {
        let e = lhs - rhs;
        if e > self.excess {
            self.excess = e;
            self.witness = Some(w);
        }
        if rhs > 0.0 {
            self.ratio = self.ratio.max(lhs / rhs);
        }
    }

    fn finish(self, slack: f64) -> ClassCheck {
        let passed = self.excess <= slack;
        ClassCheck {
            name: self.name.into(),
            worst_excess: self.excess,
            worst_ratio: self.ratio,
            passed,
            witness: if passed { None } else { self.witness },
        }
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round().max(1.0) as usize;
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

/// Scans `x_window × p_window` with steps `(dx, dp)` and reports the worst case of
/// each class inequality for the declared constants of `r`:
///
/// * `H1`: `α0|p|^γ - 1/α0 ≤ H ≤ α1(|p|^γ + 1)`
/// * `H2`: `|H(x,p) - H(x,q)| ≤ α1(|p|+|q|+1)^(γ-1)|p-q|`
/// * `H3`: `|H(x,p) - H(y,p)| ≤ α1(|p|^γ+1)|x-y|`
/// * `A2`: `|√a(x) - √a(y)| ≤ κ|x-y|` and `a ∈ [a_min, 1]`
pub fn verify_class(
    r: &Realization,
    x_window: (f64, f64),
    p_window: (f64, f64),
    dx: f64,
    dp: f64,
) -> ClassReport {
    let c = *r.class();
    let xs = grid(x_window.0, x_window.1, dx);
    let ps = grid(p_window.0, p_window.1, dp);
    let g = |p: f64| p.abs().powf(c.gamma);
    let slack = 1e-9;

    let mut h1l = Tracker::new("H1_lower");
    let mut h1u = Tracker::new("H1_upper");
    let mut h2 = Tracker::new("H2");
    let mut h3 = Tracker::new("H3");
    let mut a2 = Tracker::new("A2");
    let mut range = Tracker::new("A_range");

    let mut prev: Option<(f64, Vec<f64>, f64)> = None;
    for &x in &xs {
        let hs: Vec<f64> = ps.iter().map(|&p| r.eval_h(x, p)).collect();
        for (i, (&p, &h)) in ps.iter().zip(&hs).enumerate() {
            let w = Witness { x, y: x, p, q: p };
            h1l.push(c.alpha0 * g(p) - 1.0 / c.alpha0, h, w);
            h1u.push(h, c.alpha1 * (g(p) + 1.0), w);
            for (&q, &hq) in ps.iter().zip(&hs).skip(i + 1) {
                let rhs = c.alpha1 * (p.abs() + q.abs() + 1.0).powf(c.gamma - 1.0) * (p - q).abs();
                h2.push((h - hq).abs(), rhs, Witness { x, y: x, p, q });
            }
        }
        let sa = r.eval_sqrt_a(x);
        let a = sa * sa;
        range.push(
            c.a_min - a,
            0.0,
            Witness {
                x,
                y: x,
                p: a,
                q: a,
            },
        );
        range.push(
            a - 1.0,
            0.0,
            Witness {
                x,
                y: x,
                p: a,
                q: a,
            },
        );
        if let Some((y, hy, say)) = &prev {
            let d = (x - y).abs();
            for (&p, (&h, &hyp)) in ps.iter().zip(hs.iter().zip(hy)) {
                h3.push(
                    (h - hyp).abs(),
                    c.alpha1 * (g(p) + 1.0) * d,
                    Witness { x, y: *y, p, q: p },
                );
            }
            a2.push(
                (sa - say).abs(),
                c.kappa * d,
                Witness {
                    x,
                    y: *y,
                    p: 0.0,
                    q: 0.0,
                },
            );
        }
        prev = Some((x, hs, sa));
    }

    let checks: Vec<ClassCheck> = [h1l, h1u, h2, h3, a2, range]
        .into_iter()
        .map(|t| t.finish(slack))
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    ClassReport {
        params: c,
        kappa_built: r.kappa_built(),
        checks,
        passed,
    }
}

/// Lower bound of `inf_x H(x, p)` from the coefficient ranges.
fn h_lower(h: &Hamiltonian, p: f64) -> f64 {
    h.terms
        .iter()
        .map(|t| {
            let (m, d) = (t.coeff.mean(), t.coeff.deviation_bound());
            let v = t.scale * t.kernel.value(p);
            (v * (m - d)).min(v * (m + d))
        })
        .sum()
}

/// Replaces H by `max(H, p⁴ - n)` with the smallest `n` (from coefficient
/// bounds) for which the two agree on `|p| ≤ k`. Class constants are
/// updated so the result stays in the class with exponent `max(γ, 4)`.
pub fn truncate_superquadratic(r: &Realization, k: f64) -> Realization {
    let h = r.hamiltonian();
    let excess = |p: f64| p.powi(4) - h_lower(h, p);
    // Dense scan plus golden-section polish around the best node.
    let n_scan = 4000;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=n_scan {
        let p = -k + 2.0 * k * i as f64 / n_scan as f64;
        let e = excess(p);
        if e > best.0 {
            best = (e, p);
        }
    }
    let step = 2.0 * k / n_scan as f64;
    let (mut a, mut b) = ((best.1 - step).max(-k), (best.1 + step).min(k));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (c, d) = (b - phi * (b - a), a + phi * (b - a));
        if excess(c) > excess(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let n = best.0.max(excess(0.5 * (a + b)));

    let mut t = h.clone();
    t.quartic_floor = Some(match h.quartic_floor {
        Some(old) => old.max(n),
        None => n,
    });
    let c = *r.class();
    let gamma = c.gamma.max(4.0);
    let mut alpha0 = c.alpha0.min(1.0);
    if n > 0.0 {
        alpha0 = alpha0.min(1.0 / n);
    }
    let alpha1 = if c.gamma < 4.0 {
        2.0 * c.alpha1.max(1.0)
    } else {
        c.alpha1.max(1.0)
    };
    r.with_hamiltonian(
        t,
        ClassParams {
            alpha0,
            alpha1,
            gamma,
            ..c
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_realization, EnvironmentSpec, FieldModel, Kernel};

    fn quadratic(v: FieldModel) -> Realization {
        sample_realization(
            &EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, v),
            0,
        )
        .unwrap()
    }

    #[test]
    fn quadratic_passes() {
        let r = quadratic(FieldModel::constant(0.0));
        let rep = verify_class(&r, (-1.0, 1.0), (-3.0, 3.0), 0.25, 0.05);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn cosine_with_small_alpha1_fails_near_zero() {
        let spec =
            EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, FieldModel::cosine(1.0))
                .with_class(ClassParams {
                    alpha1: 0.5,
                    ..ClassParams::default()
                });
        let r = sample_realization(&spec, 0).unwrap();
        let rep = verify_class(&r, (0.0, 1.0), (-3.0, 3.0), 1.0 / 64.0, 0.05);
        assert!(!rep.passed);
        let c = rep.check("H1_upper").unwrap();
        assert!(!c.passed);
        let w = c.witness.unwrap();
        // violated for every p; worst where cos(2πx) = 1
        assert!(((2.0 * std::f64::consts::PI * w.x).cos() - 1.0).abs() < 1e-12);
        assert!(r.eval_h(w.x, 0.0) > 0.5);
    }

    #[test]
    fn sqrt_construction_passes_a2() {
        let spec =
            EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, FieldModel::constant(0.0))
                .with_diffusion(
                    FieldModel::RandomFourier {
                        modes: 8,
                        amplitude: 1.0,
                        decay: 2.0,
                        length: 1.0,
                        jitter: 0.2,
                        mean: 0.0,
                    },
                    0.2,
                );
        let mut spec = spec;
        let r0 = sample_realization(&spec, 3).unwrap();
        spec.class.kappa = r0.kappa_built();
        let r = sample_realization(&spec, 3).unwrap();
        let rep = verify_class(&r, (-20.0, 20.0), (-1.0, 1.0), 0.01, 0.5);
        assert!(rep.check("A2").unwrap().passed);
        assert!(rep.check("A_range").unwrap().passed);
    }

    #[test]
    fn truncation_of_quadratic() {
        let r = quadratic(FieldModel::constant(0.0));
        let t = truncate_superquadratic(&r, 2.0);
        let n = t.hamiltonian().quartic_floor.unwrap();
        assert!((n - 12.0).abs() < 1e-9);
        assert!((t.eval_h(0.0, 3.0) - 69.0).abs() < 1e-9);
        for i in 0..=40 {
            let p = -2.0 + 0.1 * i as f64;
            assert_eq!(t.eval_h(0.3, p), r.eval_h(0.3, p));
        }
        assert_eq!(t.class().gamma, 4.0);
        let rep = verify_class(&t, (-1.0, 1.0), (-4.0, 4.0), 0.5, 0.05);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn truncation_of_quartic_is_identity() {
        let spec =
            EnvironmentSpec::separable(Kernel::AbsPower { gamma: 4.0 }, FieldModel::constant(0.0));
        let r = sample_realization(&spec, 0).unwrap();
        let t = truncate_superquadratic(&r, 10.0);
        for i in 0..=100 {
            let p = -10.0 + 0.2 * i as f64;
            assert_eq!(t.eval_h(0.0, p), r.eval_h(0.0, p));
        }
    }
}
