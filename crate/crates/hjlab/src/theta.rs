//! The map λ ↦ Θ(λ) of stationary-solution means, its gaps, and the
//! effective Hamiltonian as its inverse.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{
    bounded_solution_window, estimate_lambda0, stationary_branches, CellOptions, Extremal,
};
use crate::env::{sample_realization, EnvironmentSpec, Realization};
use crate::error::{Error, Result};
use crate::io::csv::CsvWriter;
use crate::io::svg::Plot;
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaOptions {
    pub cell: CellOptions,
    /// Central fraction of the window used for spatial means.
    pub trim: f64,
    /// Also search for interior stationary solutions; `None` decides from
    /// convexity of H in p.
    pub interior: Option<bool>,
    /// Adjacent image points farther apart than this are a candidate gap.
    pub gap_tol: f64,
    /// Labels closer than this count as equal.
    pub lambda_tol: f64,
    pub max_refine: usize,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions {
            cell: CellOptions::default(),
            trim: 0.8,
            interior: None,
            gap_tol: 2e-2,
            lambda_tol: 1e-3,
            max_refine: 12,
        }
    }
}

impl ThetaOptions {
    fn wants_interior(&self, r: &Realization) -> bool {
        self.interior
            .unwrap_or_else(|| !r.hamiltonian().is_convex_in_p())
    }
}

/// Means of the stationary solutions of one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedTheta {
    pub seed: u64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub interior: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSample {
    pub lambda: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Larger of the two across-seed standard errors.
    pub stderr: f64,
    pub stderr_min: f64,
    pub stderr_max: f64,
    pub seeds: Vec<u64>,
    /// Means of interior branches, ascending.
    pub interior: Vec<f64>,
    /// Seeds dropped with the reason.
    pub dropped: Vec<(u64, String)>,
    pub per_seed: Vec<SeedTheta>,
}

impl ThetaSample {
    /// All image points of this sample, ascending.
    pub fn points(&self) -> Vec<f64> {
        let mut v = vec![self.theta_min];
        v.extend(&self.interior);
        v.push(self.theta_max);
        v
    }
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Stationary-solution means for one realization.
pub fn theta_of_realization(
    r: &Realization,
    lambda: f64,
    window: (f64, f64),
    o: &ThetaOptions,
) -> Result<SeedTheta> {
    if o.wants_interior(r) {
        let b = stationary_branches(r, lambda, window, &o.cell)?;
        let means: Vec<f64> = b.solutions.iter().map(|s| s.trimmed_mean(o.trim)).collect();
        let k = means.len();
        return Ok(SeedTheta {
            seed: r.seed(),
            theta_min: means[0],
            theta_max: means[k - 1],
            interior: means[1..k - 1].to_vec(),
        });
    }
    let lo = bounded_solution_window(r, lambda, window, Extremal::Minimal, &o.cell)?;
    let hi = bounded_solution_window(r, lambda, window, Extremal::Maximal, &o.cell)?;
    Ok(SeedTheta {
        seed: r.seed(),
        theta_min: lo.trimmed_mean(o.trim),
        theta_max: hi.trimmed_mean(o.trim),
        interior: vec![],
    })
}

/// Aggregates per-seed means. Interior branches are averaged by index over
/// the seeds that share the most common branch count.
pub fn aggregate(
    lambda: f64,
    per_seed: Vec<SeedTheta>,
    dropped: Vec<(u64, String)>,
) -> Result<ThetaSample> {
    if per_seed.is_empty() {
        return Err(Error::NoBoundedSolution { lambda });
    }
    let mins: Vec<f64> = per_seed.iter().map(|s| s.theta_min).collect();
    let maxs: Vec<f64> = per_seed.iter().map(|s| s.theta_max).collect();
    let (theta_min, stderr_min) = mean_stderr(&mins);
    let (theta_max, stderr_max) = mean_stderr(&maxs);
    let mut counts = std::collections::BTreeMap::new();
    for s in &per_seed {
        *counts.entry(s.interior.len()).or_insert(0usize) += 1;
    }
    let modal = counts
        .iter()
        .max_by_key(|(k, c)| (**c, usize::MAX - **k))
        .map(|(k, _)| *k)
        .unwrap_or(0);
    let members: Vec<&SeedTheta> = per_seed
        .iter()
        .filter(|s| s.interior.len() == modal)
        .collect();
    let interior: Vec<f64> = (0..modal)
        .map(|j| members.iter().map(|s| s.interior[j]).sum::<f64>() / members.len() as f64)
        .collect();
    Ok(ThetaSample {
        lambda,
        theta_min,
        theta_max,
        stderr: stderr_min.max(stderr_max),
        stderr_min,
        stderr_max,
        seeds: per_seed.iter().map(|s| s.seed).collect(),
        interior,
        dropped,
        per_seed,
    })
}

fn sample_on(
    reals: &[Realization],
    lambda: f64,
    window: (f64, f64),
    o: &ThetaOptions,
) -> Result<ThetaSample> {
    let results = par::map(reals, |r| {
        (r.seed(), theta_of_realization(r, lambda, window, o))
    });
    let mut ok = vec![];
    let mut dropped = vec![];
    for (seed, res) in results {
        match res {
            Ok(s) => ok.push(s),
            Err(e) => dropped.push((seed, e.to_string())),
        }
    }
    aggregate(lambda, ok, dropped)
}

pub fn realizations(spec: &EnvironmentSpec, seeds: &[u64]) -> Result<Vec<Realization>> {
    seeds.iter().map(|&s| sample_realization(spec, s)).collect()
}

/// Means over seeds at one level.
pub fn theta_of_lambda(
    spec: &EnvironmentSpec,
    lambda: f64,
    seeds: &[u64],
    window: (f64, f64),
    o: &ThetaOptions,
) -> Result<ThetaSample> {
    sample_on(&realizations(spec, seeds)?, lambda, window, o)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaMap {
    pub samples: Vec<ThetaSample>,
    /// Levels at which every seed failed.
    pub failed: Vec<(f64, String)>,
    pub lambda0: Option<f64>,
    /// `theta_max` strictly increasing and `theta_min` strictly decreasing.
    pub monotone: bool,
    /// Image pairs at distinct λ separated by more than 3 stderr.
    pub disjoint: bool,
    pub flags: Vec<String>,
}

impl ThetaMap {
    fn from_parts(
        mut samples: Vec<ThetaSample>,
        mut failed: Vec<(f64, String)>,
        lambda0: Option<f64>,
    ) -> Self {
        samples.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        failed.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut m = ThetaMap {
            samples,
            failed,
            lambda0,
            monotone: true,
            disjoint: true,
            flags: vec![],
        };
        m.validate();
        m
    }

    fn validate(&mut self) {
        self.flags.clear();
        self.monotone = true;
        self.disjoint = true;
        for w in self.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.theta_max <= a.theta_max || b.theta_min >= a.theta_min {
                self.monotone = false;
                let excess = (a.theta_max - b.theta_max).max(b.theta_min - a.theta_min);
                if excess > 3.0 * a.stderr.max(b.stderr) {
                    self.flags.push(format!(
                        "monotonicity violated between λ = {} and λ = {}",
                        a.lambda, b.lambda
                    ));
                }
            }
        }
        for i in 0..self.samples.len() {
            for j in i + 1..self.samples.len() {
                let (a, b) = (&self.samples[i], &self.samples[j]);
                let res = 3.0 * a.stderr.max(b.stderr);
                let close = [a.theta_min, a.theta_max].iter().any(|x| {
                    [b.theta_min, b.theta_max]
                        .iter()
                        .any(|y| (x - y).abs() <= res)
                });
                if close {
                    self.disjoint = false;
                    self.flags.push(format!(
                        "Θ({}) and Θ({}) overlap at 3 stderr",
                        a.lambda, b.lambda
                    ));
                }
            }
        }
    }

    /// `(θ, λ)` image points sorted by θ.
    pub fn cloud(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .samples
            .iter()
            .flat_map(|s| s.points().into_iter().map(move |t| (t, s.lambda)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = CsvWriter::create(
            path,
            &["lambda", "theta_min", "theta_max", "stderr", "n_seeds"],
        )?;
        for s in &self.samples {
            w.row(&[
                s.lambda,
                s.theta_min,
                s.theta_max,
                s.stderr,
                s.seeds.len() as f64,
            ])?;
        }
        w.finish()
    }
}

/// Samples every level of the grid.
pub fn build_theta_map(
    spec: &EnvironmentSpec,
    lambda_grid: &[f64],
    seeds: &[u64],
    window: (f64, f64),
    o: &ThetaOptions,
) -> Result<ThetaMap> {
    let reals = realizations(spec, seeds)?;
    build_theta_map_on(&reals, lambda_grid, window, None, o)
}

pub fn build_theta_map_on(
    reals: &[Realization],
    lambda_grid: &[f64],
    window: (f64, f64),
    lambda0: Option<f64>,
    o: &ThetaOptions,
) -> Result<ThetaMap> {
    if lambda_grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    let (samples, failed) = sample_levels(reals, lambda_grid, window, o);
    Ok(ThetaMap::from_parts(samples, failed, lambda0))
}

fn sample_levels(
    reals: &[Realization],
    levels: &[f64],
    window: (f64, f64),
    o: &ThetaOptions,
) -> (Vec<ThetaSample>, Vec<(f64, String)>) {
    let res = par::map(levels, |&l| (l, sample_on(reals, l, window, o)));
    let mut samples = vec![];
    let mut failed = vec![];
    for (l, r) in res {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => failed.push((l, e.to_string())),
        }
    }
    (samples, failed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub theta1: f64,
    pub theta2: f64,
    pub lambda_left: f64,
    pub lambda_right: f64,
}

impl Gap {
    pub fn lambda(&self) -> f64 {
        0.5 * (self.lambda_left + self.lambda_right)
    }

    pub fn labels_agree(&self, tol: f64) -> bool {
        (self.lambda_left - self.lambda_right).abs() <= tol
    }
}

/// Gaps of the sampled image and the levels whose sampling would resolve
/// the remaining wide pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapScan {
    /// Wide pairs with agreeing labels.
    pub gaps: Vec<Gap>,
    /// Wide pairs with disagreeing labels: a resolution shortfall, not a result.
    pub unresolved: Vec<Gap>,
    pub demands: Vec<f64>,
}

/// Scans adjacent image points. A wide pair from two different levels asks
/// for the midpoint level. A wide pair at one level λ* asks for the
/// midpoints towards the nearest sampled labels (or the floor: λ0 or a
/// failed level) on either side, and becomes a gap once labels within
/// `lambda_tol` exist on both sides.
pub fn detect_gaps(map: &ThetaMap, gap_tol: f64, lambda_tol: f64) -> GapScan {
    let cloud = map.cloud();
    let mut scan = GapScan::default();
    let labels: Vec<f64> = map.samples.iter().map(|s| s.lambda).collect();
    let floor = map
        .failed
        .iter()
        .map(|f| f.0)
        .chain(map.lambda0)
        .fold(f64::NEG_INFINITY, f64::max);
    for w in cloud.windows(2) {
        let ((ta, la), (tb, lb)) = (w[0], w[1]);
        if tb - ta <= gap_tol {
            continue;
        }
        let g = Gap {
            theta1: ta,
            theta2: tb,
            lambda_left: la,
            lambda_right: lb,
        };
        if la != lb {
            if (la - lb).abs() > 1e-12 * (1.0 + la.abs()) {
                scan.demands.push(0.5 * (la + lb));
            }
            scan.unresolved.push(g);
            continue;
        }
        let below = labels
            .iter()
            .copied()
            .filter(|&x| x < la)
            .fold(floor, f64::max);
        let above = labels
            .iter()
            .copied()
            .filter(|&x| x > la)
            .fold(f64::INFINITY, f64::min);
        let mut resolved = below.is_finite() && above.is_finite();
        if below.is_finite() && la - below > lambda_tol {
            scan.demands.push(0.5 * (below + la));
            resolved = false;
        }
        if above.is_finite() && above - la > lambda_tol {
            scan.demands.push(0.5 * (above + la));
            resolved = false;
        }
        if resolved {
            scan.gaps.push(g);
        } else {
            scan.unresolved.push(g);
        }
    }
    scan.demands.sort_by(|a, b| a.total_cmp(b));
    scan.demands.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
    scan
}

/// Adds the demanded levels until no demand is left or `max_refine`
/// rounds are spent.
pub fn refine_gaps(
    reals: &[Realization],
    map: &mut ThetaMap,
    window: (f64, f64),
    o: &ThetaOptions,
) -> GapScan {
    for _ in 0..o.max_refine {
        let scan = detect_gaps(map, o.gap_tol, o.lambda_tol);
        let known: Vec<f64> = map
            .samples
            .iter()
            .map(|s| s.lambda)
            .chain(map.failed.iter().map(|f| f.0))
            .collect();
        let fresh: Vec<f64> = scan
            .demands
            .iter()
            .copied()
            .filter(|d| known.iter().all(|k| (k - d).abs() > 1e-14))
            .collect();
        if fresh.is_empty() {
            return scan;
        }
        let (samples, failed) = sample_levels(reals, &fresh, window, o);
        let mut all = std::mem::take(&mut map.samples);
        all.extend(samples);
        let mut bad = std::mem::take(&mut map.failed);
        bad.extend(failed);
        *map = ThetaMap::from_parts(all, bad, map.lambda0);
    }
    detect_gaps(map, o.gap_tol, o.lambda_tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCurve {
    pub theta_grid: Vec<f64>,
    pub value: Vec<f64>,
    pub flat_flag: Vec<bool>,
    pub flat_segments: Vec<(f64, f64, f64)>,
    pub lambda0: f64,
}

impl EffectiveCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = CsvWriter::create(path, &["theta", "value", "flat_flag"])?;
        for i in 0..self.theta_grid.len() {
            w.row(&[
                self.theta_grid[i],
                self.value[i],
                if self.flat_flag[i] { 1.0 } else { 0.0 },
            ])?;
        }
        w.finish()
    }

    pub fn plot(&self, title: &str) -> Plot {
        let mut p = Plot::new(title, "θ", "effective H(θ)").series(
            "effective",
            "#1f77b4",
            self.theta_grid
                .iter()
                .copied()
                .zip(self.value.iter().copied())
                .collect(),
        );
        p.highlights = self.flat_segments.iter().map(|s| (s.0, s.1)).collect();
        p
    }
}

/// Piecewise-linear inverse of the sampled image, constant on gaps.
/// Points outside the sampled θ range are refused.
pub fn invert_to_effective(
    map: &ThetaMap,
    gaps: &[Gap],
    theta_grid: &[f64],
) -> Result<EffectiveCurve> {
    let cloud = map.cloud();
    if cloud.is_empty() {
        return Err(Error::Precondition("empty Θ map".into()));
    }
    let (lo, hi) = (cloud[0].0, cloud[cloud.len() - 1].0);
    let xs: Vec<f64> = cloud.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = cloud.iter().map(|p| p.1).collect();
    let mut value = Vec::with_capacity(theta_grid.len());
    let mut flat_flag = Vec::with_capacity(theta_grid.len());
    let span = (hi - lo).abs().max(1.0);
    for &t in theta_grid {
        if t < lo - 1e-12 * span || t > hi + 1e-12 * span {
            return Err(Error::Precondition(format!(
                "θ = {t} outside the sampled range [{lo}, {hi}]; extend the λ grid"
            )));
        }
        match gaps.iter().find(|g| t >= g.theta1 && t <= g.theta2) {
            Some(g) => {
                value.push(g.lambda());
                flat_flag.push(true);
            }
            None => {
                value.push(crate::cell::solution::interp(&xs, &ys, t));
                flat_flag.push(false);
            }
        }
    }
    let lambda0 = map
        .lambda0
        .unwrap_or_else(|| ys.iter().copied().fold(f64::INFINITY, f64::min));
    Ok(EffectiveCurve {
        theta_grid: theta_grid.to_vec(),
        value,
        flat_flag,
        flat_segments: gaps
            .iter()
            .map(|g| (g.theta1, g.theta2, g.lambda()))
            .collect(),
        lambda0,
    })
}

/// Mean of the per-seed critical-value estimates.
pub fn lambda0_over(
    reals: &[Realization],
    window: (f64, f64),
    tol: f64,
    o: &CellOptions,
) -> Result<f64> {
    if reals.is_empty() {
        return Err(Error::Precondition("no realizations".into()));
    }
    let est = par::map(reals, |r| estimate_lambda0(r, window, tol, o));
    let mut sum = 0.0;
    for e in est {
        sum += e?.value;
    }
    Ok(sum / reals.len() as f64)
}

/// Every stage of the route λ0 → Θ map → gaps → effective curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub lambda0: f64,
    pub map: ThetaMap,
    pub scan: GapScan,
    pub curve: EffectiveCurve,
}

pub fn effective_pipeline(
    reals: &[Realization],
    lambda0: f64,
    levels: &[f64],
    window: (f64, f64),
    theta_grid: &[f64],
    o: &ThetaOptions,
) -> Result<Pipeline> {
    let mut map = build_theta_map_on(reals, levels, window, Some(lambda0), o)?;
    let scan = refine_gaps(reals, &mut map, window, o);
    let curve = invert_to_effective(&map, &scan.gaps, theta_grid)?;
    Ok(Pipeline {
        lambda0,
        map,
        scan,
        curve,
    })
}
