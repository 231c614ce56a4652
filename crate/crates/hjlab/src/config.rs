//! Run configuration.
//!
//! A config is a TOML document whose keys are written `section.key = value`
//! (or as `[section]` tables). Every section and key is optional; unknown
//! keys are rejected. Nested solver tuning lives in sub-tables such as
//! `cell.solver.tol`.
//!
//! ```toml
//! run.seeds = [0, 1, 2]
//! run.out_dir = "out/cosine"
//! env.form = "separable"
//! env.kernel = { kind = "abs_power", gamma = 2.0 }
//! env.potential = { model = "periodic_cosine", terms = [{ amp = 1.0, harmonic = 1 }] }
//! theta.lambda_offsets = [0.5, 1.0, 2.0, 4.0]
//! parabolic.t_end = 50.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::GlueOptions;
use crate::cell::CellOptions;
use crate::env::{ClassParams, EnvironmentSpec, FieldModel, Kernel};
use crate::error::{Error, Result};
use crate::parabolic::SolverOptions;
use crate::theta::ThetaOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvironmentSpec,
    pub cell: CellSection,
    pub theta: ThetaSection,
    pub bridge: BridgeSection,
    pub parabolic: ParabolicSection,
    pub eps: EpsSection,
    pub validate: ValidateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env =
            EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, FieldModel::cosine(1.0))
                .with_class(ClassParams {
                    alpha1: 7.0,
                    ..ClassParams::default()
                });
        RunConfig {
            run: RunSection::default(),
            env,
            cell: CellSection::default(),
            theta: ThetaSection::default(),
            bridge: BridgeSection::default(),
            parabolic: ParabolicSection::default(),
            eps: EpsSection::default(),
            validate: ValidateSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub plots: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            out_dir: "out".into(),
            seeds: vec![0],
            workers: 0,
            plots: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellSection {
    /// Window of the cell solvers and of the λ0 estimate.
    pub window: [f64; 2],
    pub lambda0_tol: f64,
    /// Offsets above λ0 at which `lambda0` also writes the extremal correctors.
    pub corrector_offsets: Vec<f64>,
    pub solver: CellOptions,
}

impl Default for CellSection {
    fn default() -> Self {
        CellSection {
            window: [-50.0, 50.0],
            lambda0_tol: 1e-7,
            corrector_offsets: vec![1.0],
            solver: CellOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaSection {
    /// Absolute λ levels; when absent the levels are `λ0 + lambda_offsets`.
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda_offsets: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub window: [f64; 2],
    pub trim: f64,
    pub interior: Option<bool>,
    pub gap_tol: f64,
    pub lambda_tol: f64,
    pub max_refine: usize,
}

impl Default for ThetaSection {
    fn default() -> Self {
        let t = ThetaOptions::default();
        ThetaSection {
            lambda_grid: None,
            lambda_offsets: (1..=20).map(|k| 0.5 * k as f64).collect(),
            theta_grid: (0..9).map(|k| -2.0 + 0.5 * k as f64).collect(),
            window: [-50.0, 50.0],
            trim: t.trim,
            interior: t.interior,
            gap_tol: t.gap_tol,
            lambda_tol: t.lambda_tol,
            max_refine: t.max_refine,
        }
    }
}

impl ThetaSection {
    pub fn options(&self, cell: &CellOptions) -> ThetaOptions {
        ThetaOptions {
            cell: *cell,
            trim: self.trim,
            interior: self.interior,
            gap_tol: self.gap_tol,
            lambda_tol: self.lambda_tol,
            max_refine: self.max_refine,
        }
    }

    pub fn levels(&self, lambda0: f64) -> Vec<f64> {
        match &self.lambda_grid {
            Some(g) => g.clone(),
            None => self.lambda_offsets.iter().map(|o| lambda0 + o).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeSection {
    /// Level of the extremal pair, above λ0.
    pub lambda_offset: f64,
    /// Shooting level `μ = λ - mu_shift`.
    pub mu_shift: f64,
    pub epsilon: f64,
    /// Start distance of the shoot.
    pub n: f64,
    pub n_schedule: Vec<f64>,
    /// Offsets `μ - λ` probed by the gap-level scan.
    pub mu_offsets: Vec<f64>,
    pub r_margin: f64,
    pub window: [f64; 2],
    pub glue: GlueOptions,
}

impl Default for BridgeSection {
    fn default() -> Self {
        BridgeSection {
            lambda_offset: 0.1,
            mu_shift: 0.2,
            epsilon: 0.05,
            n: 10.0,
            n_schedule: vec![8.0, 16.0],
            mu_offsets: vec![-0.2, -0.05, 0.05, 0.2],
            r_margin: 0.5,
            window: [-24.0, 24.0],
            glue: GlueOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParabolicSection {
    pub theta: f64,
    pub t_end: f64,
    /// Half-width of the grid; when absent, `front speed · t_end + 8`.
    pub half_width: Option<f64>,
    pub dx: f64,
    pub cfl: f64,
    /// Write the full space-time field as raw f64.
    pub dump: bool,
    pub solver: SolverOptions,
}

impl Default for ParabolicSection {
    fn default() -> Self {
        ParabolicSection {
            theta: 0.0,
            t_end: 50.0,
            half_width: None,
            dx: 1.0 / 32.0,
            cfl: 0.9,
            dump: false,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsSection {
    pub theta: f64,
    pub eps_list: Vec<f64>,
    pub t_obs: f64,
    pub dx: f64,
    pub cfl: f64,
    pub max_nodes: usize,
}

impl Default for EpsSection {
    fn default() -> Self {
        EpsSection {
            theta: 0.0,
            eps_list: vec![0.25, 0.125, 0.0625, 0.03125],
            t_obs: 1.0,
            dx: 1.0 / 32.0,
            cfl: 0.9,
            max_nodes: 4_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub suite: String,
    /// Run the suite twice and compare the reports bit for bit.
    pub double_run: bool,
    /// Ordered initial pairs per environment in the comparison check.
    pub comparison_pairs: usize,
    /// Horizon of the duality check.
    pub duality_t: f64,
    pub duality_dx: f64,
    /// Distance between the corrector window edge and the measured region.
    pub duality_margin: f64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            suite: "end2end".into(),
            double_run: false,
            comparison_pairs: 8,
            duality_t: 1.0,
            duality_dx: 1.0 / 64.0,
            duality_margin: 6.0,
        }
    }
}

pub const SUITES: [&str; 6] = ["class", "cell", "bridge", "theta", "parabolic", "end2end"];

fn window_ok(name: &str, w: [f64; 2]) -> Result<()> {
    if !(w[0].is_finite() && w[1].is_finite() && w[1] > w[0]) {
        return Err(Error::Config(format!(
            "{name}: window must be finite and increasing, got {w:?}"
        )));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn cfl_ok(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every numeric field against the module preconditions.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        let c = &self.cell;
        window_ok("cell.window", c.window)?;
        positive("cell.lambda0_tol", c.lambda0_tol)?;
        let s = &c.solver;
        for (n, v) in [
            ("cell.solver.tol", s.tol),
            ("cell.solver.dx_out", s.dx_out),
            ("cell.solver.h_max", s.h_max),
            ("cell.solver.stiff_threshold", s.stiff_threshold),
            ("cell.solver.burn", s.burn),
            ("cell.solver.converge_tol", s.converge_tol),
            ("cell.solver.box_delta", s.box_delta),
            ("cell.solver.band_dx", s.band_dx),
            ("cell.solver.merge_tol", s.merge_tol),
            ("cell.solver.transit_tol", s.transit_tol),
        ] {
            positive(n, v)?;
        }
        if s.burn_max < s.burn {
            return Err(Error::Config(
                "cell.solver.burn_max must be at least cell.solver.burn".into(),
            ));
        }
        if s.branch_starts < 2 {
            return Err(Error::Config(
                "cell.solver.branch_starts must be at least 2".into(),
            ));
        }

        let t = &self.theta;
        match &t.lambda_grid {
            Some(g) if g.is_empty() => {
                return Err(Error::Config("theta.lambda_grid is empty".into()))
            }
            Some(g) if g.iter().any(|v| !v.is_finite()) => {
                return Err(Error::Config(
                    "theta.lambda_grid has non-finite entries".into(),
                ))
            }
            None if t.lambda_offsets.is_empty() => {
                return Err(Error::Config("theta.lambda_offsets is empty".into()))
            }
            None if t.lambda_offsets.iter().any(|v| !(*v >= 0.0)) => {
                return Err(Error::Config(
                    "theta.lambda_offsets must be non-negative".into(),
                ))
            }
            _ => {}
        }
        if t.theta_grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "theta.theta_grid has non-finite entries".into(),
            ));
        }
        window_ok("theta.window", t.window)?;
        if !(t.trim > 0.0 && t.trim <= 1.0) {
            return Err(Error::Config(format!(
                "theta.trim must lie in (0, 1], got {}",
                t.trim
            )));
        }
        positive("theta.gap_tol", t.gap_tol)?;
        positive("theta.lambda_tol", t.lambda_tol)?;

        let b = &self.bridge;
        positive("bridge.lambda_offset", b.lambda_offset)?;
        positive("bridge.mu_shift", b.mu_shift)?;
        positive("bridge.epsilon", b.epsilon)?;
        positive("bridge.n", b.n)?;
        positive("bridge.r_margin", b.r_margin)?;
        positive("bridge.glue.ramp", b.glue.ramp)?;
        window_ok("bridge.window", b.window)?;
        if b.n_schedule.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(
                "bridge.n_schedule entries must be positive".into(),
            ));
        }
        if b.glue.n_start == 0 || b.glue.n_cap < b.glue.n_start {
            return Err(Error::Config(
                "bridge.glue needs 0 < n_start <= n_cap".into(),
            ));
        }

        let p = &self.parabolic;
        positive("parabolic.t_end", p.t_end)?;
        positive("parabolic.dx", p.dx)?;
        cfl_ok("parabolic.cfl", p.cfl)?;
        if let Some(h) = p.half_width {
            positive("parabolic.half_width", h)?;
        }
        if !(p.solver.tail_fraction > 0.0 && p.solver.tail_fraction < 1.0) {
            return Err(Error::Config(
                "parabolic.solver.tail_fraction must lie in (0, 1)".into(),
            ));
        }
        if p.solver.n_samples < 4 {
            return Err(Error::Config(
                "parabolic.solver.n_samples must be at least 4".into(),
            ));
        }

        let e = &self.eps;
        if e.eps_list.is_empty() || e.eps_list.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(
                "eps.eps_list must be nonempty and positive".into(),
            ));
        }
        if e.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "eps.eps_list must be strictly decreasing".into(),
            ));
        }
        positive("eps.t_obs", e.t_obs)?;
        positive("eps.dx", e.dx)?;
        cfl_ok("eps.cfl", e.cfl)?;

        let v = &self.validate;
        if !SUITES.contains(&v.suite.as_str()) {
            return Err(Error::Config(format!(
                "unknown suite `{}`; expected one of {SUITES:?}",
                v.suite
            )));
        }
        positive("validate.duality_t", v.duality_t)?;
        positive("validate.duality_dx", v.duality_dx)?;
        positive("validate.duality_margin", v.duality_margin)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the parsed config, so layout
    /// and comments do not change it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn window(w: [f64; 2]) -> (f64, f64) {
        (w[0], w[1])
    }
}
