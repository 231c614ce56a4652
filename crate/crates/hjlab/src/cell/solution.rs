use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Realization;
use crate::error::Result;
use crate::io::csv::CsvWriter;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Minimal,
    Maximal,
    /// A stationary solution strictly between the extremal ones.
    Interior,
    Inserted,
    Shot,
}

/// A bounded solution of `a f' + H(x, f) = λ` sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSolution {
    pub lambda: f64,
    pub window: (f64, f64),
    pub grid_x: Vec<f64>,
    pub f: Vec<f64>,
    /// Derivative of the continuous interpolant (not the ODE right-hand side).
    pub f_prime: Vec<f64>,
    /// `a f' + H(x, f) - λ` per node.
    pub residual: Vec<f64>,
    pub residual_sup: f64,
    pub role: Role,
    pub tol: f64,
    /// Pullback gap between the last two starting distances (0 if unused,
    /// NaN if the maximal distance was reached).
    #[serde(default)]
    pub convergence: f64,
}

impl CorrectorSolution {
    /// Builds the record and evaluates residuals from `(x, f, f')` samples.
    pub fn from_samples(
        r: &Realization,
        lambda: f64,
        grid_x: Vec<f64>,
        f: Vec<f64>,
        f_prime: Vec<f64>,
        role: Role,
        tol: f64,
    ) -> Self {
        let residual: Vec<f64> = grid_x
            .iter()
            .zip(f.iter().zip(&f_prime))
            .map(|(&x, (&v, &d))| r.eval_a(x) * d + r.eval_h(x, v) - lambda)
            .collect();
        let residual_sup = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let window = (grid_x[0], *grid_x.last().unwrap_or(&grid_x[0]));
        CorrectorSolution {
            lambda,
            window,
            grid_x,
            f,
            f_prime,
            residual,
            residual_sup,
            role,
            tol,
            convergence: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn dx(&self) -> f64 {
        if self.grid_x.len() > 1 {
            self.grid_x[1] - self.grid_x[0]
        } else {
            0.0
        }
    }

    /// Linear interpolation of f (clamped at the ends).
    pub fn value_at(&self, x: f64) -> f64 {
        interp(&self.grid_x, &self.f, x)
    }

    pub fn min(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Trapezoid mean of f over the central `frac` of the window.
    pub fn trimmed_mean(&self, frac: f64) -> f64 {
        let n = self.f.len();
        let cut = ((1.0 - frac) * 0.5 * (n - 1) as f64).round() as usize;
        let (a, b) = (cut, n - 1 - cut);
        trapezoid_mean(&self.f[a..=b])
    }

    /// Restriction to `[lo, hi]` (nodes inside the interval).
    pub fn restrict(&self, lo: f64, hi: f64) -> CorrectorSolution {
        let eps = 1e-9 * self.dx();
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.grid_x[i] >= lo - eps && self.grid_x[i] <= hi + eps)
            .collect();
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let grid_x = pick(&self.grid_x);
        let residual = pick(&self.residual);
        CorrectorSolution {
            lambda: self.lambda,
            window: (grid_x[0], *grid_x.last().unwrap()),
            f: pick(&self.f),
            f_prime: pick(&self.f_prime),
            residual_sup: residual.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            residual,
            grid_x,
            role: self.role,
            tol: self.tol,
            convergence: self.convergence,
        }
    }

    /// CSV `x,f,f_prime,residual` plus a JSON header next to it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = CsvWriter::create(csv_path, &["x", "f", "f_prime", "residual"])?;
        for i in 0..self.len() {
            w.row(&[self.grid_x[i], self.f[i], self.f_prime[i], self.residual[i]])?;
        }
        w.finish()?;
        let header = serde_json::json!({
            "lambda": self.lambda,
            "window": [self.window.0, self.window.1],
            "role": self.role,
            "tol": self.tol,
            "residual_sup": self.residual_sup,
            "nodes": self.len(),
        });
        let mut f = std::fs::File::create(csv_path.with_extension("json"))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }
}

pub(crate) fn trapezoid_mean(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        1 => v[0],
        n => {
            let s: f64 = v[1..n - 1].iter().sum::<f64>() + 0.5 * (v[0] + v[n - 1]);
            s / (n - 1) as f64
        }
    }
}

pub(crate) fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Ordering {
    Identical {
        max_diff: f64,
    },
    /// `f1 < f2` everywhere.
    Below {
        min_gap: f64,
        max_gap: f64,
    },
    /// `f1 > f2` everywhere.
    Above {
        min_gap: f64,
        max_gap: f64,
    },
    Crossing {
        x: f64,
    },
}

/// Pointwise comparison on the common window; grids are resampled to the
/// finer of the two spacings.
pub fn check_ordering(f1: &CorrectorSolution, f2: &CorrectorSolution) -> Ordering {
    let lo = f1.window.0.max(f2.window.0);
    let hi = f1.window.1.min(f2.window.1);
    let same_grid = f1.grid_x == f2.grid_x;
    let xs: Vec<f64> = if same_grid {
        f1.grid_x.clone()
    } else {
        let dx = f1.dx().min(f2.dx()).max(1e-12);
        let n = ((hi - lo) / dx).round().max(1.0) as usize;
        (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect()
    };
    let scale = 1.0
        + f1.max()
            .abs()
            .max(f1.min().abs())
            .max(f2.max().abs())
            .max(f2.min().abs());
    let same = 1e-12 * scale;
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut pos, mut neg) = (None, None);
    for (i, &x) in xs.iter().enumerate() {
        let d = if same_grid {
            f2.f[i] - f1.f[i]
        } else {
            f2.value_at(x) - f1.value_at(x)
        };
        dmin = dmin.min(d);
        dmax = dmax.max(d);
        if d > same && pos.is_none() {
            pos = Some(x);
        }
        if d < -same && neg.is_none() {
            neg = Some(x);
        }
    }
    match (pos, neg) {
        (None, None) => Ordering::Identical {
            max_diff: dmax.abs().max(dmin.abs()),
        },
        (Some(_), None) => Ordering::Below {
            min_gap: dmin.max(0.0),
            max_gap: dmax,
        },
        (None, Some(_)) => Ordering::Above {
            min_gap: (-dmax).max(0.0),
            max_gap: -dmin,
        },
        (Some(a), Some(b)) => Ordering::Crossing { x: a.max(b) },
    }
}

/// Antiderivative of a corrector with `u(mid) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorPotential {
    pub lambda: f64,
    pub grid_x: Vec<f64>,
    pub u: Vec<f64>,
    /// `a u'' + H(x, u') - λ` at interior nodes, `u'` by central differences
    /// of `u` and `u''` from the ODE.
    pub residual_sup: f64,
}

impl CorrectorPotential {
    pub fn value_at(&self, x: f64) -> f64 {
        interp(&self.grid_x, &self.u, x)
    }
}

/// `u(x) = ∫_mid^x f` by the trapezoid rule.
pub fn corrector_potential(r: &Realization, f: &CorrectorSolution) -> CorrectorPotential {
    let n = f.len();
    let mut u = vec![0.0; n];
    for i in 1..n {
        // Trapezoid with the endpoint-derivative correction (fourth order).
        let h = f.grid_x[i] - f.grid_x[i - 1];
        u[i] = u[i - 1]
            + 0.5 * h * (f.f[i] + f.f[i - 1])
            + h * h / 12.0 * (f.f_prime[i - 1] - f.f_prime[i]);
    }
    let mid = 0.5 * (f.window.0 + f.window.1);
    let shift = interp(&f.grid_x, &u, mid);
    u.iter_mut().for_each(|v| *v -= shift);
    let mut res = 0.0f64;
    for i in 1..n.saturating_sub(1) {
        let x = f.grid_x[i];
        let du = (u[i + 1] - u[i - 1]) / (f.grid_x[i + 1] - f.grid_x[i - 1]);
        let ddu = (f.lambda - r.eval_h(x, f.f[i])) / r.eval_a(x);
        res = res.max((r.eval_a(x) * ddu + r.eval_h(x, du) - f.lambda).abs());
    }
    CorrectorPotential {
        lambda: f.lambda,
        grid_x: f.grid_x.clone(),
        u,
        residual_sup: res,
    }
}

/// Number of strict local extrema: sign changes of f' ignoring values
/// below `1e-8 (1 + max|f'|)`.
pub fn extrema_diagnostic(f: &CorrectorSolution) -> usize {
    let scale = 1.0 + f.f_prime.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-8 * scale;
    let mut last = 0i8;
    let mut count = 0;
    for &d in &f.f_prime {
        let s = if d > eps {
            1
        } else if d < -eps {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                count += 1;
            }
            last = s;
        }
    }
    count
}
