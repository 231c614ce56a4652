//! Scalar coefficient fields on the real line.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cosine term `amp * cos(2π harmonic x / period + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub amp: f64,
    pub harmonic: u32,
    #[serde(default)]
    pub phase: f64,
}

/// Declarative description of a field; sampling turns it into a [`Field`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldModel {
    Constant {
        #[serde(default)]
        value: f64,
    },
    PeriodicCosine {
        #[serde(default = "one")]
        period: f64,
        #[serde(default)]
        mean: f64,
        terms: Vec<CosineTerm>,
    },
    /// Quasi-periodic series with `modes` terms, amplitudes `amplitude * k^-decay * ξ_k`
    /// (ξ_k uniform in [-1, 1]), frequencies `2πk(1 + jitter u_k)/length` and
    /// uniform phases.
    RandomFourier {
        modes: usize,
        amplitude: f64,
        decay: f64,
        #[serde(default = "one")]
        length: f64,
        #[serde(default = "default_jitter")]
        jitter: f64,
        #[serde(default)]
        mean: f64,
    },
    /// Compactly supported bumps `(1 - r²)²` of half-width `width` at Poisson
    /// centers with intensity `density`, amplitudes uniform in `[-amplitude, amplitude]`.
    /// At most `max_per_cell` bumps per cell of length `2 width`.
    PoissonBumps {
        density: f64,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        mean: f64,
        #[serde(default = "default_max_per_cell")]
        max_per_cell: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn default_jitter() -> f64 {
    0.25
}

fn default_max_per_cell() -> usize {
    4
}

impl Default for FieldModel {
    fn default() -> Self {
        FieldModel::Constant { value: 0.0 }
    }
}

impl FieldModel {
    pub fn constant(value: f64) -> Self {
        FieldModel::Constant { value }
    }

    /// `amp cos(2π x)` with unit period.
    pub fn cosine(amp: f64) -> Self {
        FieldModel::PeriodicCosine {
            period: 1.0,
            mean: 0.0,
            terms: vec![CosineTerm {
                amp,
                harmonic: 1,
                phase: 0.0,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match self {
            FieldModel::Constant { value } if !value.is_finite() => {
                bad("constant value must be finite")
            }
            FieldModel::PeriodicCosine { period, terms, .. } => {
                if !(*period > 0.0) {
                    return bad("periodic_cosine: period must be positive");
                }
                if terms.is_empty() {
                    return bad("periodic_cosine: empty term list");
                }
                if terms
                    .iter()
                    .any(|t| !t.amp.is_finite() || !t.phase.is_finite())
                {
                    return bad("periodic_cosine: non-finite term");
                }
                Ok(())
            }
            FieldModel::RandomFourier {
                modes,
                amplitude,
                decay,
                length,
                jitter,
                ..
            } => {
                if *modes == 0 {
                    return bad("random_fourier: modes must be positive");
                }
                if !(*decay > 0.0) {
                    return bad("random_fourier: decay must be positive");
                }
                if !(*length > 0.0) {
                    return bad("random_fourier: length must be positive");
                }
                if !amplitude.is_finite() || !(0.0..1.0).contains(jitter) {
                    return bad("random_fourier: amplitude must be finite and jitter in [0,1)");
                }
                Ok(())
            }
            FieldModel::PoissonBumps {
                density,
                width,
                amplitude,
                max_per_cell,
                ..
            } => {
                if !(*density >= 0.0) || !(*width > 0.0) || !amplitude.is_finite() {
                    return bad("poisson_bumps: need density >= 0, width > 0, finite amplitude");
                }
                if *max_per_cell == 0 {
                    return bad("poisson_bumps: max_per_cell must be positive");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(
            self,
            FieldModel::RandomFourier { .. } | FieldModel::PoissonBumps { .. }
        )
    }

    /// Draws a concrete field. `stream` separates the fields of one realization.
    pub fn sample(&self, seed: u64, stream: u64) -> Result<Field> {
        self.validate()?;
        Ok(match self {
            FieldModel::Constant { value } => Field::Constant(*value),
            FieldModel::PeriodicCosine {
                period,
                mean,
                terms,
            } => Field::Trig(TrigSeries {
                mean: *mean,
                amp: terms.iter().map(|t| t.amp).collect(),
                omega: terms
                    .iter()
                    .map(|t| 2.0 * PI * t.harmonic as f64 / period)
                    .collect(),
                phase: terms.iter().map(|t| t.phase).collect(),
            }),
            FieldModel::RandomFourier {
                modes,
                amplitude,
                decay,
                length,
                jitter,
                mean,
            } => {
                let mut rng = stream_rng(seed, stream);
                let mut s = TrigSeries {
                    mean: *mean,
                    ..Default::default()
                };
                for k in 1..=*modes {
                    let kf = k as f64;
                    let xi: f64 = rng.gen_range(-1.0..=1.0);
                    let u: f64 = rng.gen_range(-1.0..=1.0);
                    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                    s.amp.push(amplitude * kf.powf(-decay) * xi);
                    s.omega.push(2.0 * PI * kf * (1.0 + jitter * u) / length);
                    s.phase.push(phase);
                }
                Field::Trig(s)
            }
            FieldModel::PoissonBumps {
                density,
                width,
                amplitude,
                mean,
                max_per_cell,
            } => Field::Bumps(BumpField {
                key: mix(seed ^ mix(stream.wrapping_add(0x9e37_79b9))),
                density: *density,
                width: *width,
                amplitude: *amplitude,
                mean: *mean,
                max_per_cell: *max_per_cell,
                cache: Arc::new(RwLock::new(HashMap::new())),
            }),
        })
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `mean + Σ amp_k cos(omega_k x + phase_k)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    pub mean: f64,
    pub amp: Vec<f64>,
    pub omega: Vec<f64>,
    pub phase: Vec<f64>,
}

impl TrigSeries {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let mut s = self.mean;
        for k in 0..self.amp.len() {
            s += self.amp[k] * (self.omega[k] * x + self.phase[k]).cos();
        }
        s
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for k in 0..self.amp.len() {
            s -= self.amp[k] * self.omega[k] * (self.omega[k] * x + self.phase[k]).sin();
        }
        s
    }
}

/// One materialized bump: center and signed amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub amp: f64,
}

/// Lazily materialized Poisson bump field. Cells are generated from a hash
/// of (seed, cell index) so values never depend on query order; the cache
/// only saves work.
#[derive(Clone, Debug)]
pub struct BumpField {
    key: u64,
    pub density: f64,
    pub width: f64,
    pub amplitude: f64,
    pub mean: f64,
    pub max_per_cell: usize,
    cache: Arc<RwLock<HashMap<i64, Arc<[Bump]>>>>,
}

const BUMP_SLOPE_MAX: f64 = 1.539_600_717_839_002; // max |d/dr (1-r²)²| = 8/(3√3)

impl BumpField {
    fn cell_len(&self) -> f64 {
        2.0 * self.width
    }

    fn generate(&self, cell: i64) -> Arc<[Bump]> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.key ^ mix(cell as u64)));
        let len = self.cell_len();
        // Knuth's product method; the intensities used here are small.
        let threshold = (-self.density * len).exp();
        let mut count = 0usize;
        let mut prod: f64 = rng.gen();
        while prod > threshold && count < self.max_per_cell {
            count += 1;
            prod *= rng.gen::<f64>();
        }
        (0..count)
            .map(|_| Bump {
                center: (cell as f64 + rng.gen::<f64>()) * len,
                amp: self.amplitude * rng.gen_range(-1.0..=1.0),
            })
            .collect()
    }

    /// Bumps whose centers lie in the given cell; cached after first use.
    pub fn cell(&self, cell: i64) -> Arc<[Bump]> {
        if let Some(b) = self
            .cache
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&cell)
        {
            return b.clone();
        }
        let b = self.generate(cell);
        self.cache
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .entry(cell)
            .or_insert(b)
            .clone()
    }

    /// Materialized bumps with centers in `[lo, hi]`.
    pub fn bumps_in(&self, lo: f64, hi: f64) -> Vec<Bump> {
        let len = self.cell_len();
        let (c0, c1) = ((lo / len).floor() as i64, (hi / len).floor() as i64);
        (c0..=c1)
            .flat_map(|c| self.cell(c).iter().copied().collect::<Vec<_>>())
            .filter(|b| b.center >= lo && b.center <= hi)
            .collect()
    }

    pub fn cached_cells(&self) -> usize {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    fn eval(&self, x: f64, deriv: bool) -> f64 {
        let len = self.cell_len();
        let c = (x / len).floor() as i64;
        let mut s = if deriv { 0.0 } else { self.mean };
        for cell in c - 1..=c + 1 {
            for b in self.cell(cell).iter() {
                let r = (x - b.center) / self.width;
                if r.abs() < 1.0 {
                    let q = 1.0 - r * r;
                    s += if deriv {
                        -4.0 * r * q * b.amp / self.width
                    } else {
                        b.amp * q * q
                    };
                }
            }
        }
        s
    }
}

/// A sampled field, defined for every real x.
#[derive(Clone, Debug)]
pub enum Field {
    Constant(f64),
    Trig(TrigSeries),
    Bumps(BumpField),
}

impl Field {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Field::Constant(c) => *c,
            Field::Trig(s) => s.value(x),
            Field::Bumps(b) => b.eval(x, false),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Field::Constant(_) => 0.0,
            Field::Trig(s) => s.derivative(x),
            Field::Bumps(b) => b.eval(x, true),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Field::Constant(c) => *c,
            Field::Trig(s) => s.mean,
            Field::Bumps(b) => b.mean,
        }
    }

    /// Upper bound on `sup |value - mean|`.
    pub fn deviation_bound(&self) -> f64 {
        match self {
            Field::Constant(_) => 0.0,
            Field::Trig(s) => s.amp.iter().map(|a| a.abs()).sum(),
            // A point is reached by bumps of at most two cells.
            Field::Bumps(b) => 2.0 * b.max_per_cell as f64 * b.amplitude.abs(),
        }
    }

    /// Upper bound on the Lipschitz constant.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            Field::Constant(_) => 0.0,
            Field::Trig(s) => s.amp.iter().zip(&s.omega).map(|(a, w)| (a * w).abs()).sum(),
            Field::Bumps(b) => {
                2.0 * b.max_per_cell as f64 * b.amplitude.abs() * BUMP_SLOPE_MAX / b.width
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Field::Constant(_))
    }

    /// Serializable coefficients; bump fields list the bumps materialized on `[lo, hi]`.
    pub fn coefficients(&self, lo: f64, hi: f64) -> serde_json::Value {
        match self {
            Field::Constant(c) => serde_json::json!({ "constant": c }),
            Field::Trig(s) => serde_json::to_value(s).unwrap_or_default(),
            Field::Bumps(b) => serde_json::json!({
                "mean": b.mean,
                "width": b.width,
                "window": [lo, hi],
                "bumps": b.bumps_in(lo, hi),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_values() {
        let f = FieldModel::cosine(1.0).sample(0, 0).unwrap();
        assert_eq!(f.value(0.0), 1.0);
        assert!((f.value(0.5) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_fourier_is_deterministic() {
        let m = FieldModel::RandomFourier {
            modes: 64,
            amplitude: 1.0,
            decay: 2.0,
            length: 1.0,
            jitter: 0.25,
            mean: 0.0,
        };
        let (a, b) = (m.sample(1, 0).unwrap(), m.sample(1, 0).unwrap());
        match (&a, &b) {
            (Field::Trig(x), Field::Trig(y)) => assert_eq!(x, y),
            _ => panic!("expected trig series"),
        }
        let c = m.sample(2, 0).unwrap();
        assert_ne!(a.value(0.3), c.value(0.3));
    }

    #[test]
    fn random_fourier_respects_bounds() {
        let m = FieldModel::RandomFourier {
            modes: 16,
            amplitude: 0.7,
            decay: 2.0,
            length: 1.0,
            jitter: 0.25,
            mean: 0.2,
        };
        let f = m.sample(11, 3).unwrap();
        let (d, l) = (f.deviation_bound(), f.lipschitz_bound());
        for i in 0..4000 {
            let x = -50.0 + 0.025 * i as f64;
            assert!((f.value(x) - 0.2).abs() <= d + 1e-12);
            assert!(f.derivative(x).abs() <= l + 1e-12);
        }
    }

    #[test]
    fn bumps_independent_of_query_order() {
        let m = FieldModel::PoissonBumps {
            density: 1.5,
            width: 0.4,
            amplitude: 1.0,
            mean: 0.0,
            max_per_cell: 4,
        };
        let f = m.sample(5, 0).unwrap();
        let g = m.sample(5, 0).unwrap();
        let xs: Vec<f64> = (0..500).map(|i| -20.0 + 0.08 * i as f64).collect();
        let forward: Vec<f64> = xs.iter().map(|&x| f.value(x)).collect();
        let backward: Vec<f64> = xs.iter().rev().map(|&x| g.value(x)).collect();
        for (a, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(forward.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn bump_derivative_matches_difference() {
        let m = FieldModel::PoissonBumps {
            density: 2.0,
            width: 0.5,
            amplitude: 1.0,
            mean: 0.0,
            max_per_cell: 4,
        };
        let f = m.sample(9, 1).unwrap();
        let h = 1e-6;
        for i in 0..200 {
            let x = -5.0 + 0.05 * i as f64 + 0.0123;
            let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
            assert!((fd - f.derivative(x)).abs() < 1e-5);
            assert!(f.derivative(x).abs() <= f.lipschitz_bound());
        }
    }

    #[test]
    fn invalid_models_rejected() {
        let bad = FieldModel::RandomFourier {
            modes: 4,
            amplitude: 1.0,
            decay: 0.0,
            length: 1.0,
            jitter: 0.0,
            mean: 0.0,
        };
        assert!(matches!(bad.sample(0, 0), Err(Error::Config(_))));
        let empty = FieldModel::PeriodicCosine {
            period: 1.0,
            mean: 0.0,
            terms: vec![],
        };
        assert!(empty.validate().is_err());
    }
}
