//! Hamiltonians of the form `H(x, p) = Σ_j c_j(x) φ_j(p)`, optionally with a
//! quartic floor `max(H, p⁴ - n)`.

use serde::{Deserialize, Serialize};

use super::field::Field;

/// Momentum profile φ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    One,
    AbsPower {
        gamma: f64,
    },
    /// `(p² - 1)²`
    DoubleWell,
    Linear,
}

impl Kernel {
    #[inline]
    pub fn value(&self, p: f64) -> f64 {
        match *self {
            Kernel::One => 1.0,
            Kernel::AbsPower { gamma } => abs_pow(p, gamma),
            Kernel::DoubleWell => {
                let q = p * p - 1.0;
                q * q
            }
            Kernel::Linear => p,
        }
    }

    #[inline]
    pub fn derivative(&self, p: f64) -> f64 {
        match *self {
            Kernel::One => 0.0,
            Kernel::AbsPower { gamma } => {
                if p == 0.0 {
                    if gamma > 1.0 {
                        0.0
                    } else {
                        1.0
                    }
                } else {
                    gamma * abs_pow(p, gamma - 1.0) * p.signum()
                }
            }
            Kernel::DoubleWell => 4.0 * p * (p * p - 1.0),
            Kernel::Linear => 1.0,
        }
    }

    /// `max |φ'(p)|` over `[lo, hi]`.
    pub fn max_abs_derivative(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            Kernel::One => 0.0,
            Kernel::Linear => 1.0,
            Kernel::AbsPower { gamma } => {
                if gamma >= 1.0 {
                    let m = lo.abs().max(hi.abs());
                    gamma * abs_pow(m, gamma - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            Kernel::DoubleWell => {
                let c = 1.0 / 3f64.sqrt();
                [lo, hi, c, -c]
                    .iter()
                    .filter(|&&p| p >= lo && p <= hi)
                    .map(|&p| self.derivative(p).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Growth exponent for large |p|.
    pub fn growth(&self) -> f64 {
        match *self {
            Kernel::One => 0.0,
            Kernel::AbsPower { gamma } => gamma,
            Kernel::DoubleWell => 4.0,
            Kernel::Linear => 1.0,
        }
    }
}

#[inline]
fn abs_pow(p: f64, gamma: f64) -> f64 {
    let a = p.abs();
    if gamma == 2.0 {
        a * a
    } else if gamma == 1.0 {
        a
    } else if gamma == 3.0 {
        a * a * a
    } else if gamma == 4.0 {
        let s = a * a;
        s * s
    } else {
        a.powf(gamma)
    }
}

/// One summand `scale * c(x) * φ(p)`.
#[derive(Clone, Debug)]
pub struct Term {
    pub coeff: Field,
    pub kernel: Kernel,
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub terms: Vec<Term>,
    /// `Some(n)` replaces H by `max(H, p⁴ - n)`.
    pub quartic_floor: Option<f64>,
}

/// Coefficients `scale_j c_j(x)` frozen at one point; evaluating H in p
/// afterwards needs no field evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenH<'a> {
    pub kernels: &'a [Kernel],
    pub coeffs: Vec<f64>,
    pub quartic_floor: Option<f64>,
}

impl FrozenH<'_> {
    #[inline]
    pub fn value(&self, p: f64) -> f64 {
        let h = eval_sum(self.kernels, &self.coeffs, p);
        floor(h, p, self.quartic_floor)
    }

    #[inline]
    pub fn derivative(&self, p: f64) -> f64 {
        deriv_sum(self.kernels, &self.coeffs, p, self.quartic_floor)
    }
}

#[inline]
pub(crate) fn eval_sum(kernels: &[Kernel], coeffs: &[f64], p: f64) -> f64 {
    let mut h = 0.0;
    for (k, c) in kernels.iter().zip(coeffs) {
        if *c != 0.0 {
            h += c * k.value(p);
        }
    }
    h
}

#[inline]
pub(crate) fn floor(h: f64, p: f64, n: Option<f64>) -> f64 {
    match n {
        Some(n) => {
            let q = p * p;
            h.max(q * q - n)
        }
        None => h,
    }
}

#[inline]
pub(crate) fn deriv_sum(kernels: &[Kernel], coeffs: &[f64], p: f64, n: Option<f64>) -> f64 {
    if let Some(n) = n {
        let q = p * p;
        if q * q - n > eval_sum(kernels, coeffs, p) {
            return 4.0 * q * p;
        }
    }
    let mut d = 0.0;
    for (k, c) in kernels.iter().zip(coeffs) {
        if *c != 0.0 {
            d += c * k.derivative(p);
        }
    }
    d
}

impl Hamiltonian {
    pub fn kernels(&self) -> Vec<Kernel> {
        self.terms.iter().map(|t| t.kernel).collect()
    }

    #[inline]
    pub fn value(&self, x: f64, p: f64) -> f64 {
        let mut h = 0.0;
        for t in &self.terms {
            h += t.scale * t.coeff.value(x) * t.kernel.value(p);
        }
        floor(h, p, self.quartic_floor)
    }

    #[inline]
    pub fn dp(&self, x: f64, p: f64) -> f64 {
        if let Some(n) = self.quartic_floor {
            let q = p * p;
            let mut h = 0.0;
            for t in &self.terms {
                h += t.scale * t.coeff.value(x) * t.kernel.value(p);
            }
            if q * q - n > h {
                return 4.0 * q * p;
            }
        }
        let mut d = 0.0;
        for t in &self.terms {
            d += t.scale * t.coeff.value(x) * t.kernel.derivative(p);
        }
        d
    }

    /// `scale_j c_j(x)` for every term.
    pub fn coeffs_at(&self, x: f64) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| t.scale * t.coeff.value(x))
            .collect()
    }

    /// Whether every coefficient is constant in x.
    pub fn is_x_free(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.is_constant())
    }

    /// Conservative test for convexity in p at every x: each term is affine
    /// or a convex kernel with a coefficient of fixed nonnegative sign.
    pub fn is_convex_in_p(&self) -> bool {
        self.terms.iter().all(|t| match t.kernel {
            Kernel::One | Kernel::Linear => true,
            Kernel::AbsPower { gamma } if gamma >= 1.0 => {
                let (m, d) = (
                    t.scale * t.coeff.mean(),
                    t.scale.abs() * t.coeff.deviation_bound(),
                );
                m - d >= 0.0
            }
            _ => false,
        })
    }

    /// Upper bound of `sup_x |∂_p H|` for p in `[lo, hi]`.
    pub fn dp_bound(&self, lo: f64, hi: f64) -> f64 {
        let mut s = 0.0;
        for t in &self.terms {
            let c = t.coeff.mean().abs() + t.coeff.deviation_bound();
            s += (t.scale * c).abs() * t.kernel.max_abs_derivative(lo, hi);
        }
        if self.quartic_floor.is_some() {
            let m = lo.abs().max(hi.abs());
            s = s.max(4.0 * m * m * m);
        }
        s
    }

    /// Upper bound of `sup_x |∂_x H(x, p)|`.
    pub fn dx_bound(&self, p: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| (t.scale * t.coeff.lipschitz_bound() * t.kernel.value(p)).abs())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_derivatives_match_differences() {
        let ks = [
            Kernel::One,
            Kernel::AbsPower { gamma: 2.0 },
            Kernel::AbsPower { gamma: 3.0 },
            Kernel::AbsPower { gamma: 2.5 },
            Kernel::DoubleWell,
            Kernel::Linear,
        ];
        let h = 1e-6;
        for k in ks {
            for i in 0..41 {
                let p = -2.0 + 0.1 * i as f64 + 0.013;
                let fd = (k.value(p + h) - k.value(p - h)) / (2.0 * h);
                assert!(
                    (fd - k.derivative(p)).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{k:?} at {p}"
                );
            }
        }
    }

    #[test]
    fn double_well_max_derivative() {
        let k = Kernel::DoubleWell;
        // interior critical point of φ' at 1/√3
        let m = k.max_abs_derivative(-0.9, 0.9);
        let c = 1.0 / 3f64.sqrt();
        assert!((m - 4.0 * c * (1.0 - c * c)).abs() < 1e-14);
        assert_eq!(k.max_abs_derivative(-2.0, 1.0), 24.0);
    }

    #[test]
    fn frozen_matches_full() {
        use crate::env::field::FieldModel;
        let h = Hamiltonian {
            terms: vec![
                Term {
                    coeff: Field::Constant(1.0),
                    kernel: Kernel::AbsPower { gamma: 2.0 },
                    scale: 1.0,
                },
                Term {
                    coeff: FieldModel::cosine(1.0).sample(0, 0).unwrap(),
                    kernel: Kernel::One,
                    scale: 1.0,
                },
            ],
            quartic_floor: Some(12.0),
        };
        let kernels = h.kernels();
        let fr = FrozenH {
            kernels: &kernels,
            coeffs: h.coeffs_at(0.3),
            quartic_floor: h.quartic_floor,
        };
        for p in [-3.0, -1.0, 0.0, 0.5, 2.5] {
            assert_eq!(fr.value(p), h.value(0.3, p));
            assert_eq!(fr.derivative(p), h.dp(0.3, p));
        }
    }
}
