//! Environments: a diffusion coefficient `a(x)` and a Hamiltonian `H(x, p)`
//! sampled from a seeded, stationary model.

mod class;
pub mod field;
pub mod hamiltonian;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use class::{truncate_superquadratic, verify_class, ClassCheck, ClassReport, Witness};
pub use field::{CosineTerm, Field, FieldModel};
pub use hamiltonian::{FrozenH, Hamiltonian, Kernel, Term};

use crate::error::{Error, Result};

/// Constants of the admissible class: growth bounds, exponent and diffusion bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub a_min: f64,
}

impl Default for ClassParams {
    fn default() -> Self {
        ClassParams {
            alpha0: 1.0,
            alpha1: 1.0,
            gamma: 2.0,
            kappa: 1.0,
            a_min: 1.0,
        }
    }
}

impl ClassParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha1 > 0.0) {
            return Err(Error::Config(
                "class: alpha0 and alpha1 must be positive".into(),
            ));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::Config("class: gamma must exceed 1".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config("class: kappa must be positive".into()));
        }
        if !(self.a_min > 0.0 && self.a_min <= 1.0) {
            return Err(Error::Config("class: a_min must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// `G(p) + V(x)`
    Separable,
    /// `|p|^γ - c(x)|p| + V(x)` with `c ≥ 0`
    Pinned,
    /// `(p² - 1)² + V(x)`
    DoubleWell,
    /// `Σ_j c_j(x) φ_j(p)`
    GeneralSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub kernel: Kernel,
    pub coeff: FieldModel,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn unit_diffusion() -> FieldModel {
    FieldModel::Constant { value: 1.0 }
}

/// Full description of an environment model.
///
/// A constant `diffusion` model sets `a` directly. Any other model is turned
/// into a profile `σ(x) ∈ [0, 1]` and `a = (√a_min + (1 - √a_min) σ)²`, so
/// `a ∈ [a_min, 1]` and `√a` is Lipschitz by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub form: Form,
    /// `G` for the separable form; defaults to `|p|^γ`.
    #[serde(default)]
    pub kernel: Option<Kernel>,
    #[serde(default)]
    pub potential: FieldModel,
    /// `c(x)` for the pinned form.
    #[serde(default)]
    pub pin: Option<FieldModel>,
    /// Summands for the general form.
    #[serde(default)]
    pub terms: Vec<TermSpec>,
    #[serde(default = "unit_diffusion")]
    pub diffusion: FieldModel,
    #[serde(default)]
    pub class: ClassParams,
}

impl EnvironmentSpec {
    /// `G(p) + V(x)` with `a ≡ 1`.
    pub fn separable(kernel: Kernel, potential: FieldModel) -> Self {
        let gamma = match kernel {
            Kernel::AbsPower { gamma } => gamma.max(1.0 + 1e-9),
            Kernel::DoubleWell => 4.0,
            _ => 2.0,
        };
        EnvironmentSpec {
            form: Form::Separable,
            kernel: Some(kernel),
            potential,
            pin: None,
            terms: vec![],
            diffusion: unit_diffusion(),
            class: ClassParams {
                gamma,
                ..ClassParams::default()
            },
        }
    }

    /// `(p² - 1)² + V(x)` with `a ≡ 1`.
    pub fn double_well(potential: FieldModel) -> Self {
        EnvironmentSpec {
            form: Form::DoubleWell,
            kernel: None,
            potential,
            pin: None,
            terms: vec![],
            diffusion: unit_diffusion(),
            class: ClassParams {
                gamma: 4.0,
                ..ClassParams::default()
            },
        }
    }

    pub fn with_diffusion(mut self, model: FieldModel, a_min: f64) -> Self {
        self.diffusion = model;
        self.class.a_min = a_min;
        self
    }

    pub fn with_class(mut self, class: ClassParams) -> Self {
        self.class = class;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.class.validate()?;
        self.potential.validate()?;
        self.diffusion.validate()?;
        if let FieldModel::Constant { value } = self.diffusion {
            if !(value >= self.class.a_min && value <= 1.0) {
                return Err(Error::Config(format!(
                    "constant diffusion {value} outside [a_min, 1] = [{}, 1]",
                    self.class.a_min
                )));
            }
        }
        match self.form {
            Form::Pinned => match &self.pin {
                Some(m) => m.validate()?,
                None => return Err(Error::Config("pinned form needs `pin`".into())),
            },
            Form::GeneralSum => {
                if self.terms.is_empty() {
                    return Err(Error::Config(
                        "general_sum form needs at least one term".into(),
                    ));
                }
                for t in &self.terms {
                    t.coeff.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Human-readable list of the random draws made per seed.
    pub fn seed_domain(&self) -> String {
        let mut parts = vec![];
        let mut push = |name: &str, m: &FieldModel| match m {
            FieldModel::RandomFourier { modes, .. } => parts.push(format!(
                "{name}: {modes} x (amplitude, frequency jitter, phase)"
            )),
            FieldModel::PoissonBumps { .. } => parts.push(format!(
                "{name}: Poisson bump centers and amplitudes, per cell"
            )),
            _ => {}
        };
        push("potential", &self.potential);
        push("diffusion", &self.diffusion);
        if let Some(p) = &self.pin {
            push("pin", p);
        }
        for (j, t) in self.terms.iter().enumerate() {
            push(&format!("term[{j}]"), &t.coeff);
        }
        if parts.is_empty() {
            "deterministic (no random draws)".into()
        } else {
            parts.join("; ")
        }
    }
}

const STREAM_POTENTIAL: u64 = 1;
const STREAM_DIFFUSION: u64 = 2;
const STREAM_PIN: u64 = 3;
const STREAM_TERMS: u64 = 16;

#[derive(Clone, Debug)]
pub(crate) enum Squash {
    /// `σ = (1 + (v - mean)/bound)/2`
    Linear { bound: f64 },
    /// `σ = (1 + tanh((v - mean)/scale))/2`
    Tanh { scale: f64 },
}

#[derive(Clone, Debug)]
pub(crate) enum Diffusion {
    Constant(f64),
    Shaped {
        sqrt_min: f64,
        field: Field,
        squash: Squash,
    },
}

impl Diffusion {
    fn build(model: &FieldModel, a_min: f64, seed: u64) -> Result<Self> {
        if let FieldModel::Constant { value } = model {
            return Ok(Diffusion::Constant(*value));
        }
        let field = model.sample(seed, STREAM_DIFFUSION)?;
        let squash = match field {
            Field::Bumps(ref b) => Squash::Tanh {
                scale: if b.amplitude != 0.0 {
                    b.amplitude.abs()
                } else {
                    1.0
                },
            },
            _ => Squash::Linear {
                bound: field.deviation_bound(),
            },
        };
        Ok(Diffusion::Shaped {
            sqrt_min: a_min.sqrt(),
            field,
            squash,
        })
    }

    #[inline]
    fn sqrt_a(&self, x: f64) -> f64 {
        match self {
            Diffusion::Constant(a) => a.sqrt(),
            Diffusion::Shaped {
                sqrt_min,
                field,
                squash,
            } => {
                let d = field.value(x) - field.mean();
                let s = match squash {
                    Squash::Linear { bound } if *bound > 0.0 => {
                        (0.5 * (1.0 + d / bound)).clamp(0.0, 1.0)
                    }
                    Squash::Linear { .. } => 0.5,
                    Squash::Tanh { scale } => 0.5 * (1.0 + (d / scale).tanh()),
                };
                sqrt_min + (1.0 - sqrt_min) * s
            }
        }
    }

    #[inline]
    fn value(&self, x: f64) -> f64 {
        match self {
            Diffusion::Constant(a) => *a,
            _ => {
                let s = self.sqrt_a(x);
                s * s
            }
        }
    }

    fn kappa(&self) -> f64 {
        match self {
            Diffusion::Constant(_) => 0.0,
            Diffusion::Shaped {
                sqrt_min,
                field,
                squash,
            } => {
                let lip = field.lipschitz_bound();
                let k = match squash {
                    Squash::Linear { bound } if *bound > 0.0 => 0.5 * lip / bound,
                    Squash::Linear { .. } => 0.0,
                    Squash::Tanh { scale } => 0.5 * lip / scale,
                };
                (1.0 - sqrt_min) * k
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            Diffusion::Constant(a) => (*a, *a),
            Diffusion::Shaped { sqrt_min, .. } => (sqrt_min * sqrt_min, 1.0),
        }
    }
}

#[derive(Debug)]
struct Sampled {
    h: Hamiltonian,
    kernels: Vec<Kernel>,
    diffusion: Diffusion,
    class: ClassParams,
}

/// One sampled environment. Cheap to clone; immutable apart from the
/// internal bump cache, and safe to share between threads.
#[derive(Clone, Debug)]
pub struct Realization {
    spec: Arc<EnvironmentSpec>,
    seed: u64,
    shift: f64,
    inner: Arc<Sampled>,
}

/// Draws the realization of `spec` for `seed`.
pub fn sample_realization(spec: &EnvironmentSpec, seed: u64) -> Result<Realization> {
    spec.validate()?;
    let potential = spec.potential.sample(seed, STREAM_POTENTIAL)?;
    let mut terms = vec![];
    let v = |coeff| Term {
        coeff,
        kernel: Kernel::One,
        scale: 1.0,
    };
    match spec.form {
        Form::Separable => {
            let g = spec.kernel.unwrap_or(Kernel::AbsPower {
                gamma: spec.class.gamma,
            });
            terms.push(Term {
                coeff: Field::Constant(1.0),
                kernel: g,
                scale: 1.0,
            });
            terms.push(v(potential));
        }
        Form::DoubleWell => {
            terms.push(Term {
                coeff: Field::Constant(1.0),
                kernel: Kernel::DoubleWell,
                scale: 1.0,
            });
            terms.push(v(potential));
        }
        Form::Pinned => {
            let pin = spec
                .pin
                .as_ref()
                .expect("validated")
                .sample(seed, STREAM_PIN)?;
            if pin.mean() - pin.deviation_bound() < 0.0 {
                return Err(Error::Config(
                    "pinned form needs c(x) >= 0 (mean below deviation bound)".into(),
                ));
            }
            terms.push(Term {
                coeff: Field::Constant(1.0),
                kernel: Kernel::AbsPower {
                    gamma: spec.class.gamma,
                },
                scale: 1.0,
            });
            terms.push(Term {
                coeff: pin,
                kernel: Kernel::AbsPower { gamma: 1.0 },
                scale: -1.0,
            });
            terms.push(v(potential));
        }
        Form::GeneralSum => {
            for (j, t) in spec.terms.iter().enumerate() {
                terms.push(Term {
                    coeff: t.coeff.sample(seed, STREAM_TERMS + j as u64)?,
                    kernel: t.kernel,
                    scale: t.scale,
                });
            }
            if !matches!(spec.potential, FieldModel::Constant { value } if value == 0.0) {
                terms.push(v(potential));
            }
        }
    }
    let h = Hamiltonian {
        terms,
        quartic_floor: None,
    };
    let kernels = h.kernels();
    let diffusion = Diffusion::build(&spec.diffusion, spec.class.a_min, seed)?;
    Ok(Realization {
        spec: Arc::new(spec.clone()),
        seed,
        shift: 0.0,
        inner: Arc::new(Sampled {
            h,
            kernels,
            diffusion,
            class: spec.class,
        }),
    })
}

impl Realization {
    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Class constants; updated by [`truncate_superquadratic`].
    pub fn class(&self) -> &ClassParams {
        &self.inner.class
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.inner.h
    }

    /// The translated environment `x ↦ (a, H)(x + s)`.
    pub fn shifted(&self, s: f64) -> Realization {
        Realization {
            shift: self.shift + s,
            ..self.clone()
        }
    }

    #[inline]
    pub fn eval_a(&self, x: f64) -> f64 {
        self.inner.diffusion.value(x + self.shift)
    }

    #[inline]
    pub fn eval_sqrt_a(&self, x: f64) -> f64 {
        self.inner.diffusion.sqrt_a(x + self.shift)
    }

    #[inline]
    pub fn eval_h(&self, x: f64, p: f64) -> f64 {
        self.inner.h.value(x + self.shift, p)
    }

    #[inline]
    pub fn eval_h_dp(&self, x: f64, p: f64) -> f64 {
        self.inner.h.dp(x + self.shift, p)
    }

    /// H with its x-dependence frozen at `x`.
    pub fn freeze(&self, x: f64) -> FrozenH<'_> {
        FrozenH {
            kernels: &self.inner.kernels,
            coeffs: self.inner.h.coeffs_at(x + self.shift),
            quartic_floor: self.inner.h.quartic_floor,
        }
    }

    /// Lower and upper bounds of `a` valid on all of ℝ.
    pub fn a_bounds(&self) -> (f64, f64) {
        self.inner.diffusion.bounds()
    }

    /// Lipschitz constant of `√a` implied by the construction.
    pub fn kappa_built(&self) -> f64 {
        self.inner.diffusion.kappa()
    }

    pub fn is_x_free(&self) -> bool {
        self.inner.h.is_x_free() && matches!(self.inner.diffusion, Diffusion::Constant(_))
    }

    /// `sup |∂_p H|` over `p ∈ [lo, hi]`, bounded from the coefficients.
    pub fn dp_bound(&self, lo: f64, hi: f64) -> f64 {
        self.inner.h.dp_bound(lo, hi)
    }

    /// JSON manifest with the spec, seed and coefficients; bump fields list
    /// the bumps materialized on `[lo, hi]`.
    pub fn manifest(&self, lo: f64, hi: f64) -> serde_json::Value {
        let (lo, hi) = (lo + self.shift, hi + self.shift);
        let terms: Vec<_> = self
            .inner
            .h
            .terms
            .iter()
            .map(|t| {
                serde_json::json!({
                    "kernel": t.kernel,
                    "scale": t.scale,
                    "coeff": t.coeff.coefficients(lo, hi),
                })
            })
            .collect();
        let diffusion = match &self.inner.diffusion {
            Diffusion::Constant(a) => serde_json::json!({ "constant": a }),
            Diffusion::Shaped {
                sqrt_min, field, ..
            } => serde_json::json!({
                "sqrt_a_min": sqrt_min,
                "profile": field.coefficients(lo, hi),
            }),
        };
        serde_json::json!({
            "spec": &*self.spec,
            "seed": self.seed,
            "shift": self.shift,
            "seed_domain": self.spec.seed_domain(),
            "class": self.inner.class,
            "kappa_built": self.kappa_built(),
            "quartic_floor": self.inner.h.quartic_floor,
            "hamiltonian": terms,
            "diffusion": diffusion,
        })
    }

    pub(crate) fn with_hamiltonian(&self, h: Hamiltonian, class: ClassParams) -> Realization {
        let kernels = h.kernels();
        Realization {
            spec: self.spec.clone(),
            seed: self.seed,
            shift: self.shift,
            inner: Arc::new(Sampled {
                h,
                kernels,
                diffusion: self.inner.diffusion.clone(),
                class,
            }),
        }
    }
}
