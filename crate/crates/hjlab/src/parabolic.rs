//! Explicit monotone scheme for `u_t = a(x) u_xx + H(x, u_x)`.
//!
//! Per node, with one-sided slopes `p⁻`, `p⁺`:
//!
//! ```text
//! u_i += dt [ a_i (u_{i+1} - 2u_i + u_{i-1}) / dx² + H(x_i, (p⁻ + p⁺)/2) + σ/2 (p⁺ - p⁻) ]
//! ```
//!
//! The update is nondecreasing in every neighbour when
//! `σ ≥ |H_p| - 2a/dx` and `dt ≤ dx² / (2a + σ dx)`, which gives a discrete
//! comparison principle. Outside the grid, `u` is extended linearly.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{corrector_potential, max_h_at_zero, p_bounds, CorrectorSolution};
use crate::env::hamiltonian::{eval_sum, floor};
use crate::env::{Kernel, Realization};
use crate::error::{Error, Result};
use crate::io::csv::CsvWriter;
use crate::io::write_json;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPolicy {
    /// `σ = max(0, 1.1 max|H_p| - 2 a_min / dx)`: only what diffusion does not supply.
    Minimal,
    /// `σ = 1.1 max|H_p|`.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub dx: f64,
    /// Boundary slope of the linear extension.
    pub theta: f64,
    /// Last time step used (0 before a run).
    pub dt: f64,
    pub cfl_safety: f64,
}

impl Grid1D {
    pub fn new(x_lo: f64, x_hi: f64, dx: f64, theta: f64, cfl_safety: f64) -> Result<Self> {
        if !(dx > 0.0) || !(x_hi > x_lo) {
            return Err(Error::Precondition(format!(
                "bad grid [{x_lo}, {x_hi}] with dx = {dx}"
            )));
        }
        if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
            return Err(Error::Precondition(format!(
                "cfl_safety must lie in (0, 1], got {cfl_safety}"
            )));
        }
        let n = ((x_hi - x_lo) / dx).round() as usize;
        Ok(Grid1D {
            x_lo,
            x_hi: x_lo + n as f64 * dx,
            nx: n + 1,
            dx,
            theta,
            dt: 0.0,
            cfl_safety,
        })
    }

    /// Symmetric grid with a node at 0.
    pub fn centered(half: f64, dx: f64, theta: f64, cfl_safety: f64) -> Result<Self> {
        let n = (half / dx).ceil().max(1.0);
        Grid1D::new(-n * dx, n * dx, dx, theta, cfl_safety)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn linear(&self, theta: f64) -> Vec<f64> {
        (0..self.nx).map(|i| theta * self.x(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub sigma_policy: SigmaPolicy,
    /// Samples per run when no sample times are given.
    pub n_samples: usize,
    pub tail_fraction: f64,
    /// Cap on time steps per run.
    pub max_steps: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            sigma_policy: SigmaPolicy::Minimal,
            n_samples: 200,
            tail_fraction: 0.25,
            max_steps: 50_000_000,
        }
    }
}

/// Frozen per-node coefficients and the discrete operator.
pub struct Operator {
    kernels: Vec<Kernel>,
    nt: usize,
    coeffs: Vec<f64>,
    /// Per-term `max_i |c_ij|`.
    cmax: Vec<f64>,
    quartic_floor: Option<f64>,
    a: Vec<f64>,
    a_min: f64,
    a_max: f64,
    dx: f64,
    slopes: (f64, f64),
    policy: SigmaPolicy,
    cfl: f64,
    konst: Vec<f64>,
    cols: Vec<(Kernel, Vec<f64>)>,
    /// `a_i / dx²`.
    a_dx2: Vec<f64>,
}

impl Operator {
    pub fn new(r: &Realization, grid: &Grid1D, slopes: (f64, f64), policy: SigmaPolicy) -> Self {
        let kernels = r.hamiltonian().kernels();
        let nt = kernels.len();
        let xs = grid.nodes();
        let rows = par::map(&xs, |&x| r.freeze(x).coeffs);
        let coeffs: Vec<f64> = rows.into_iter().flatten().collect();
        let mut cmax = vec![0.0f64; nt];
        for row in coeffs.chunks(nt.max(1)) {
            for (m, c) in cmax.iter_mut().zip(row) {
                *m = m.max(c.abs());
            }
        }
        let a = par::map(&xs, |&x| r.eval_a(x));
        let a_dx2 = a.iter().map(|a| a / (grid.dx * grid.dx)).collect();
        let a_min = a.iter().copied().fold(f64::INFINITY, f64::min);
        let a_max = a.iter().copied().fold(0.0, f64::max);
        let mut op = Operator {
            kernels,
            nt,
            coeffs,
            cmax,
            quartic_floor: r.hamiltonian().quartic_floor,
            a,
            a_min,
            a_max,
            dx: grid.dx,
            slopes,
            policy,
            cfl: grid.cfl_safety,
            konst: vec![],
            cols: vec![],
            a_dx2,
        };
        (op.konst, op.cols) = op.columns();
        op
    }

    #[inline]
    fn h(&self, i: usize, p: f64) -> f64 {
        let c = &self.coeffs[i * self.nt..(i + 1) * self.nt];
        floor(eval_sum(&self.kernels, c, p), p, self.quartic_floor)
    }

    /// `One` kernels folded into a per-node constant, remaining terms as
    /// per-kernel coefficient columns.
    fn columns(&self) -> (Vec<f64>, Vec<(Kernel, Vec<f64>)>) {
        let n = self.a.len();
        let mut konst = vec![0.0; n];
        let mut cols = vec![];
        for (j, k) in self.kernels.iter().enumerate() {
            let col: Vec<f64> = (0..n).map(|i| self.coeffs[i * self.nt + j]).collect();
            if *k == Kernel::One {
                for (s, c) in konst.iter_mut().zip(&col) {
                    *s += c;
                }
            } else if col.iter().any(|c| *c != 0.0) {
                cols.push((*k, col));
            }
        }
        (konst, cols)
    }

    /// Range of one-sided slopes including the boundary extension.
    fn slope_range(&self, u: &[f64], acc: (f64, f64)) -> (f64, f64) {
        let (mut lo, mut hi) = acc;
        lo = lo.min(self.slopes.0).min(self.slopes.1);
        hi = hi.max(self.slopes.0).max(self.slopes.1);
        let inv_dx = 1.0 / self.dx;
        let (mut dlo, mut dhi) = (lo * self.dx, hi * self.dx);
        let mut sum = 0.0;
        for w in u.windows(2) {
            let q = w[1] - w[0];
            dlo = if q < dlo { q } else { dlo };
            dhi = if q > dhi { q } else { dhi };
            sum += q;
        }
        if !sum.is_finite() {
            return (f64::NAN, f64::NAN);
        }
        (lo.min(dlo * inv_dx), hi.max(dhi * inv_dx))
    }

    /// Bound of `sup_x |H_p|` over slopes in `[lo, hi]` from frozen coefficients.
    pub fn hp_bound(&self, lo: f64, hi: f64) -> f64 {
        let mut s: f64 = self
            .kernels
            .iter()
            .zip(&self.cmax)
            .map(|(k, c)| c * k.max_abs_derivative(lo, hi))
            .sum();
        if self.quartic_floor.is_some() {
            let m = lo.abs().max(hi.abs());
            s = s.max(4.0 * m * m * m);
        }
        s
    }

    pub fn sigma(&self, lo: f64, hi: f64) -> f64 {
        let full = 1.1 * self.hp_bound(lo, hi);
        match self.policy {
            SigmaPolicy::Full => full,
            SigmaPolicy::Minimal => (full - 2.0 * self.a_min / self.dx).max(0.0),
        }
    }

    pub fn dt(&self, sigma: f64) -> f64 {
        self.cfl * self.dx * self.dx / (2.0 * self.a_max + sigma * self.dx)
    }

    /// `out = u + dt L(u)`.
    fn step_into(&self, u: &[f64], sigma: f64, dt: f64, out: &mut [f64]) {
        let n = u.len();
        let zero = vec![];
        let (col, kernel) = match (self.quartic_floor, self.cols.as_slice()) {
            (None, []) => (&zero, None),
            (None, [(k, c)]) => (c, Some(*k)),
            _ => return self.stencil_general(u, sigma, dt, out),
        };
        let coef = |i: usize| col.get(i).copied().unwrap_or(0.0);
        let h = |i: usize, p: f64| self.konst[i] + kernel.map_or(0.0, |k| coef(i) * k.value(p));
        let lf = 0.5 * sigma / self.dx;
        let d = &self.a_dx2;
        let mut boundary = |i: usize, ul: f64, ur: f64| {
            out[i] = u[i]
                + dt * ((d[i] + lf) * (ur - 2.0 * u[i] + ul) + h(i, (ur - ul) * (0.5 / self.dx)));
        };
        if n < 3 {
            for i in 0..n {
                let ul = if i == 0 {
                    u[i] - self.slopes.0 * self.dx
                } else {
                    u[i - 1]
                };
                let ur = if i + 1 == n {
                    u[i] + self.slopes.1 * self.dx
                } else {
                    u[i + 1]
                };
                boundary(i, ul, ur);
            }
            return;
        }
        boundary(0, u[0] - self.slopes.0 * self.dx, u[1]);
        boundary(n - 1, u[n - 2], u[n - 1] + self.slopes.1 * self.dx);
        let half_inv_dx = 0.5 / self.dx;
        let konst = &self.konst[1..n - 1];
        let d = &d[1..n - 1];
        match kernel {
            None => interior(u, out, dt, half_inv_dx, lf, d, konst, konst, |_, k, _| k),
            Some(Kernel::AbsPower { gamma }) if gamma == 2.0 => interior(
                u,
                out,
                dt,
                half_inv_dx,
                lf,
                d,
                konst,
                &col[1..n - 1],
                |p, k, c| k + c * p * p,
            ),
            Some(k) => interior(
                u,
                out,
                dt,
                half_inv_dx,
                lf,
                d,
                konst,
                &col[1..n - 1],
                move |p, kc, c| kc + c * k.value(p),
            ),
        }
    }

    fn stencil_general(&self, u: &[f64], sigma: f64, dt: f64, out: &mut [f64]) {
        let n = u.len();
        let dx = self.dx;
        let half_inv_dx = 0.5 / dx;
        let lf = 0.5 * sigma / dx;
        let d = &self.a_dx2;
        par::fill_indexed(out, |i| {
            let ui = u[i];
            let ul = if i == 0 {
                ui - self.slopes.0 * dx
            } else {
                u[i - 1]
            };
            let ur = if i + 1 == n {
                ui + self.slopes.1 * dx
            } else {
                u[i + 1]
            };
            ui + dt * ((d[i] + lf) * (ur - 2.0 * ui + ul) + self.h(i, (ur - ul) * half_inv_dx))
        });
    }
}

/// Interior update `out[1..n-1]` with `H_i(p) = h(p, konst_i, coef_i)`
/// and diffusion `d_i + lf`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn interior<F: Fn(f64, f64, f64) -> f64 + Sync + Send>(
    u: &[f64],
    out: &mut [f64],
    dt: f64,
    half_inv_dx: f64,
    lf: f64,
    d: &[f64],
    konst: &[f64],
    coef: &[f64],
    h: F,
) {
    let m = u.len() - 2;
    par::for_chunks(&mut out[1..m + 1], 4096, |off, part| {
        let len = part.len();
        let (u, d, konst, coef) = (
            &u[off..off + len + 2],
            &d[off..off + len],
            &konst[off..off + len],
            &coef[off..off + len],
        );
        for ((((o, w), di), ki), ci) in part
            .iter_mut()
            .zip(u.windows(3))
            .zip(d)
            .zip(konst)
            .zip(coef)
        {
            let lap = w[2] - 2.0 * w[1] + w[0];
            let p = (w[2] - w[0]) * half_inv_dx;
            *o = w[1] + dt * ((di + lf) * lap + h(p, *ki, *ci));
        }
    });
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolveStats {
    pub steps: u64,
    pub retries: u64,
    pub sigma_max: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

/// Advances every field together with a common σ and time step, calling
/// `on_sample` at each sample time (sorted, within `(0, t_end]`).
pub fn evolve(
    op: &Operator,
    fields: &mut [Vec<f64>],
    t_end: f64,
    sample_times: &[f64],
    max_steps: u64,
    mut on_sample: impl FnMut(f64, &[Vec<f64>]),
) -> Result<EvolveStats> {
    let mut stats = EvolveStats {
        dt_min: f64::INFINITY,
        ..Default::default()
    };
    let mut scratch: Vec<Vec<f64>> = fields.iter().map(|f| vec![0.0; f.len()]).collect();
    let mut t = 0.0;
    let mut next = 0;
    let range_of = |fs: &[Vec<f64>]| {
        fs.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, u| {
                op.slope_range(u, acc)
            })
    };
    let mut range = range_of(fields);
    while t < t_end * (1.0 - 1e-14) {
        if stats.steps >= max_steps {
            return Err(Error::Numerical(format!(
                "step cap {max_steps} reached at t = {t}"
            )));
        }
        let target = sample_times.get(next).copied().unwrap_or(t_end).min(t_end);
        let mut sigma = op.sigma(range.0, range.1);
        let mut dt = op.dt(sigma).min(target - t);
        let mut tries = 0;
        loop {
            for (u, out) in fields.iter().zip(scratch.iter_mut()) {
                op.step_into(u, sigma, dt, out);
            }
            let new_range = range_of(&scratch);
            if new_range.0.is_nan() {
                return Err(Error::Numerical(format!(
                    "non-finite value at step {}",
                    stats.steps
                )));
            }
            let (lo, hi) = (range.0.min(new_range.0), range.1.max(new_range.1));
            let sigma_new = op.sigma(lo, hi);
            if sigma_new > sigma * (1.0 + 1e-12) && op.dt(sigma_new) < dt && tries < 40 {
                // σ grew during the step: redo it with the enlarged range.
                sigma = sigma_new;
                dt = (0.5 * dt).min(op.dt(sigma));
                tries += 1;
                stats.retries += 1;
                continue;
            }
            range = new_range;
            break;
        }
        for (u, s) in fields.iter_mut().zip(scratch.iter_mut()) {
            std::mem::swap(u, s);
        }
        t += dt;
        stats.steps += 1;
        stats.sigma_max = stats.sigma_max.max(sigma);
        stats.dt_min = stats.dt_min.min(dt);
        stats.dt_max = stats.dt_max.max(dt);
        if next < sample_times.len() && t >= sample_times[next] * (1.0 - 1e-14) {
            on_sample(sample_times[next], fields);
            next += 1;
        }
    }
    while next < sample_times.len() && sample_times[next] <= t_end {
        on_sample(sample_times[next], fields);
        next += 1;
    }
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicRun {
    pub grid: Grid1D,
    pub seed: u64,
    pub theta: f64,
    pub sigma_policy: SigmaPolicy,
    pub times: Vec<f64>,
    pub u_center: Vec<f64>,
    pub slope_series: Vec<f64>,
    /// Largest slope magnitude on the measured region per sample.
    pub lipschitz: Vec<f64>,
    pub lipschitz_initial: f64,
    /// Half-width of the measured region per sample.
    pub measured_half: Vec<f64>,
    /// Speed `c` of the measured region `|x| ≤ x_hi - c t`.
    pub speed: f64,
    pub hl_est: f64,
    pub hu_est: f64,
    pub stats: EvolveStats,
}

impl ParabolicRun {
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = CsvWriter::create(csv_path, &["t", "u_center", "slope"])?;
        for i in 0..self.times.len() {
            w.row(&[self.times[i], self.u_center[i], self.slope_series[i]])?;
        }
        w.finish()?;
        write_json(
            &csv_path.with_extension("json"),
            &serde_json::json!({
                "grid": self.grid,
                "seed": self.seed,
                "theta": self.theta,
                "sigma_policy": self.sigma_policy,
                "cfl": self.grid.cfl_safety,
                "speed": self.speed,
                "hl_est": self.hl_est,
                "hu_est": self.hu_est,
                "lipschitz_initial": self.lipschitz_initial,
                "lipschitz_max": self.lipschitz.iter().copied().fold(0.0, f64::max),
                "stats": self.stats,
            }),
        )
    }
}

fn default_times(t_end: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (1..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

/// Transport speed bounding the measured region: `1.1 sup |H_p|` over
/// the slope band of the level `sup_x H(x, θ) + 1` (and `θ` itself).
pub fn front_speed(r: &Realization, theta: f64, window: (f64, f64)) -> f64 {
    let top = max_h_at_theta(r, theta, window) + 1.0;
    let band = p_bounds(r, top, window);
    let (lo, hi) = if band.empty {
        (theta, theta)
    } else {
        (band.p_minus.min(theta), band.p_plus.max(theta))
    };
    1.1 * r.dp_bound(lo, hi)
}

fn max_h_at_theta(r: &Realization, theta: f64, window: (f64, f64)) -> f64 {
    if theta == 0.0 {
        return max_h_at_zero(r, window);
    }
    let n = ((window.1 - window.0) * 64.0).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            r.eval_h(
                window.0 + (window.1 - window.0) * i as f64 / n as f64,
                theta,
            )
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Optional full space-time dump: little-endian f64, row-major `[time][space]`,
/// with a JSON sidecar next to it.
pub struct Dump {
    file: std::io::BufWriter<std::fs::File>,
    path: std::path::PathBuf,
    times: Vec<f64>,
}

impl Dump {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Dump {
            file: std::io::BufWriter::new(std::fs::File::create(path)?),
            path: path.to_path_buf(),
            times: vec![],
        })
    }

    fn push(&mut self, t: f64, u: &[f64]) -> Result<()> {
        for v in u {
            self.file.write_all(&v.to_le_bytes())?;
        }
        self.times.push(t);
        Ok(())
    }

    fn finish(mut self, grid: &Grid1D) -> Result<()> {
        self.file.flush()?;
        write_json(
            &self.path.with_extension("json"),
            &serde_json::json!({
                "file": self.path.file_name().map(|s| s.to_string_lossy().into_owned()),
                "dtype": "f64",
                "endianness": "little",
                "layout": "row-major [time][space]",
                "nt": self.times.len(),
                "nx": grid.nx,
                "x_lo": grid.x_lo,
                "dx": grid.dx,
                "times": self.times,
            }),
        )
    }
}

/// Solves from the linear datum `θx` on the grid (θ from the grid).
pub fn solve_ehj(
    r: &Realization,
    grid: &Grid1D,
    t_end: f64,
    sample_times: &[f64],
    o: &SolverOptions,
    dump: Option<&Path>,
) -> Result<ParabolicRun> {
    if !(t_end > 0.0) {
        return Err(Error::Precondition(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let theta = grid.theta;
    let times = if sample_times.is_empty() {
        default_times(t_end, o.n_samples)
    } else {
        sample_times.to_vec()
    };
    let op = Operator::new(r, grid, (theta, theta), o.sigma_policy);
    let speed = front_speed(r, theta, (grid.x_lo.max(-64.0), grid.x_hi.min(64.0)));
    let half = grid.x_hi.min(-grid.x_lo);
    let center = ((0.0 - grid.x_lo) / grid.dx).round() as usize;
    let mut fields = vec![grid.linear(theta)];
    let mut dump = dump.map(Dump::create).transpose()?;
    let mut dump_err = None;
    let (mut u_center, mut slope_series, mut lipschitz, mut measured) =
        (vec![], vec![], vec![], vec![]);
    let stats = evolve(&op, &mut fields, t_end, &times, o.max_steps, |t, fs| {
        let u = &fs[0];
        let h = half - speed * t;
        measured.push(h);
        let k = ((h.max(0.0)) / grid.dx).floor() as usize;
        let (a, b) = (center.saturating_sub(k), (center + k).min(grid.nx - 1));
        let lip = u[a..=b]
            .windows(2)
            .map(|w| ((w[1] - w[0]) / grid.dx).abs())
            .fold(0.0, f64::max);
        lipschitz.push(lip);
        u_center.push(u[center]);
        slope_series.push(u[center] / t);
        if let Some(d) = dump.as_mut() {
            if let Err(e) = d.push(t, u) {
                dump_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = dump_err {
        return Err(e);
    }
    if let Some(d) = dump {
        d.finish(grid)?;
    }
    if measured.last().is_some_and(|&h| h < 0.0) {
        return Err(Error::Precondition(format!(
            "grid half-width {half} too small for speed {speed} at t = {t_end}"
        )));
    }
    let mut g = *grid;
    g.dt = stats.dt_min;
    let mut run = ParabolicRun {
        grid: g,
        seed: r.seed(),
        theta,
        sigma_policy: o.sigma_policy,
        times,
        u_center,
        slope_series,
        lipschitz,
        lipschitz_initial: theta.abs(),
        measured_half: measured,
        speed,
        hl_est: f64::NAN,
        hu_est: f64::NAN,
        stats,
    };
    if let Ok(e) = estimate_hl_hu(&run, o.tail_fraction) {
        run.hl_est = e.hl;
        run.hu_est = e.hu;
    }
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HlHu {
    pub hl: f64,
    pub hu: f64,
    /// `hu - hl`.
    pub width: f64,
    pub n_tail: usize,
}

/// Tail min and max of `u(t, 0) / t`.
pub fn estimate_hl_hu(run: &ParabolicRun, tail_fraction: f64) -> Result<HlHu> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "tail fraction must lie in (0, 1), got {tail_fraction}"
        )));
    }
    let t_end = run.times.last().copied().unwrap_or(0.0);
    let cut = t_end * (1.0 - tail_fraction);
    let tail: Vec<f64> = run
        .times
        .iter()
        .zip(&run.slope_series)
        .filter(|(t, _)| **t >= cut)
        .map(|(_, s)| *s)
        .collect();
    if tail.len() < 4 {
        return Err(Error::Numerical(format!(
            "only {} tail samples (need 4)",
            tail.len()
        )));
    }
    let hl = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hu = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(HlHu {
        hl,
        hu,
        width: hu - hl,
        n_tail: tail.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRow {
    pub eps: f64,
    pub horizon: f64,
    pub half_width: f64,
    pub nx: usize,
    pub u_eps: f64,
    /// `|u^ε - u^{ε_prev}|` against the previous row.
    pub diff_prev: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsStudy {
    pub theta: f64,
    pub t_obs: f64,
    pub rows: Vec<EpsRow>,
    pub diffs_decreasing: bool,
    /// Richardson limit of the last two rows assuming O(ε) error.
    pub extrapolated: Option<f64>,
    pub note: String,
}

impl EpsStudy {
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = CsvWriter::create(csv_path, &["eps", "u_eps", "diff_prev", "nx"])?;
        for r in &self.rows {
            w.row(&[r.eps, r.u_eps, r.diff_prev.unwrap_or(f64::NAN), r.nx as f64])?;
        }
        w.finish()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsOptions {
    pub dx: f64,
    pub cfl: f64,
    pub solver: SolverOptions,
    /// Runs needing more nodes than this are skipped with a note.
    pub max_nodes: usize,
}

impl Default for EpsOptions {
    fn default() -> Self {
        EpsOptions {
            dx: 1.0 / 32.0,
            cfl: 0.9,
            solver: SolverOptions::default(),
            max_nodes: 4_000_000,
        }
    }
}

/// `u^ε(t_obs, 0) = ε u(t_obs/ε, 0)` for each ε, with datum `θx`.
pub fn epsilon_study(
    r: &Realization,
    theta: f64,
    eps_list: &[f64],
    t_obs: f64,
    o: &EpsOptions,
) -> Result<EpsStudy> {
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Precondition(
            "ε list must be nonempty and positive".into(),
        ));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition(
            "ε list must be strictly decreasing".into(),
        ));
    }
    let speed = front_speed(r, theta, (-64.0, 64.0));
    let a_max = r.a_bounds().1;
    let mut rows: Vec<EpsRow> = vec![];
    let mut note = String::new();
    for &eps in eps_list {
        let horizon = t_obs / eps;
        let half = speed * horizon + 6.0 * (2.0 * a_max * horizon).sqrt() + 4.0;
        let grid = Grid1D::centered(half, o.dx, theta, o.cfl)?;
        if grid.nx > o.max_nodes {
            note = format!(
                "stopped at ε = {eps}: {} nodes exceed the budget of {}",
                grid.nx, o.max_nodes
            );
            break;
        }
        let run = solve_ehj(r, &grid, horizon, &[horizon], &o.solver, None)?;
        let u_eps = eps * run.u_center[0];
        let diff_prev = rows.last().map(|p| (u_eps - p.u_eps).abs());
        rows.push(EpsRow {
            eps,
            horizon,
            half_width: grid.x_hi,
            nx: grid.nx,
            u_eps,
            diff_prev,
        });
    }
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.diff_prev).collect();
    let diffs_decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    let extrapolated = match rows.as_slice() {
        [.., a, b] => {
            let ratio = a.eps / b.eps;
            Some(b.u_eps + (b.u_eps - a.u_eps) / (ratio - 1.0))
        }
        _ => None,
    };
    Ok(EpsStudy {
        theta,
        t_obs,
        rows,
        diffs_decreasing,
        extrapolated,
        note,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    /// `max (v0 - w0)`.
    pub initial_gap: f64,
    /// `max (v - w)` over nodes and sample times.
    pub observed_gap: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Evolves `v0` and `w0` with the same discrete operator and checks that
/// `v - w` never exceeds its initial supremum beyond rounding.
pub fn comparison_check(
    r: &Realization,
    grid: &Grid1D,
    v0: &[f64],
    w0: &[f64],
    t_end: f64,
    o: &SolverOptions,
) -> Result<ComparisonVerdict> {
    if v0.len() != grid.nx || w0.len() != grid.nx {
        return Err(Error::Precondition("data must live on the grid".into()));
    }
    let initial_gap = v0
        .iter()
        .zip(w0)
        .map(|(v, w)| v - w)
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = v0.iter().chain(w0).fold(0.0f64, |m, v| m.max(v.abs()));
    let op = Operator::new(r, grid, (grid.theta, grid.theta), o.sigma_policy);
    let mut fields = vec![v0.to_vec(), w0.to_vec()];
    let mut observed = initial_gap;
    let mut mag = scale;
    let times = default_times(t_end, o.n_samples);
    let stats = evolve(&op, &mut fields, t_end, &times, o.max_steps, |_, fs| {
        let g = fs[0]
            .iter()
            .zip(&fs[1])
            .map(|(v, w)| v - w)
            .fold(f64::NEG_INFINITY, f64::max);
        observed = observed.max(g);
        mag = mag.max(
            fs[0]
                .iter()
                .chain(&fs[1])
                .fold(0.0f64, |m, v| m.max(v.abs())),
        );
    })?;
    let slack = 8.0 * f64::EPSILON * (1.0 + mag) * (stats.steps as f64).sqrt().max(1.0) * 4.0;
    Ok(ComparisonVerdict {
        initial_gap,
        observed_gap: observed,
        slack,
        passed: observed <= initial_gap + slack,
    })
}

/// Drift of `u_c(x) + λ t` under the scheme, `u_c` the antiderivative of
/// a corrector sampled on the scheme's grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub lambda: f64,
    pub dx: f64,
    pub t_end: f64,
    pub region: (f64, f64),
    pub times: Vec<f64>,
    /// `sup_region |u(t) - u_c - λ t|` per sample.
    pub drift: Vec<f64>,
    pub sup_drift: f64,
}

pub fn duality_drift(
    r: &Realization,
    f: &CorrectorSolution,
    t_end: f64,
    margin: f64,
    cfl: f64,
    o: &SolverOptions,
) -> Result<DualityReport> {
    let uc = corrector_potential(r, f);
    let dx = f.dx();
    let grid = Grid1D::new(f.window.0, f.window.1, dx, 0.0, cfl)?;
    if grid.nx != uc.u.len() {
        return Err(Error::Precondition("corrector grid mismatch".into()));
    }
    let region = (f.window.0 + margin, f.window.1 - margin);
    if region.0 >= region.1 {
        return Err(Error::Precondition(format!(
            "margin {margin} leaves no region on {:?}",
            f.window
        )));
    }
    let n = uc.u.len();
    let op = Operator::new(r, &grid, (f.f[0], f.f[n - 1]), o.sigma_policy);
    let (i0, i1) = (
        ((region.0 - grid.x_lo) / dx).ceil() as usize,
        ((region.1 - grid.x_lo) / dx).floor() as usize,
    );
    let times = default_times(t_end, o.n_samples.min(100));
    let mut fields = vec![uc.u.clone()];
    let mut drift = vec![];
    evolve(&op, &mut fields, t_end, &times, o.max_steps, |t, fs| {
        let d = (i0..=i1)
            .map(|i| (fs[0][i] - uc.u[i] - f.lambda * t).abs())
            .fold(0.0, f64::max);
        drift.push(d);
    })?;
    let sup_drift = drift.iter().copied().fold(0.0, f64::max);
    Ok(DualityReport {
        lambda: f.lambda,
        dx,
        t_end,
        region,
        times,
        drift,
        sup_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_realization, EnvironmentSpec, FieldModel, Form, TermSpec};

    fn quad() -> Realization {
        sample_realization(
            &EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, FieldModel::constant(0.0)),
            0,
        )
        .unwrap()
    }

    fn zero_h() -> Realization {
        let mut spec =
            EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, FieldModel::constant(0.0));
        spec.form = Form::GeneralSum;
        spec.terms = vec![TermSpec {
            kernel: Kernel::One,
            coeff: FieldModel::constant(0.0),
            scale: 1.0,
        }];
        sample_realization(&spec, 0).unwrap()
    }

    #[test]
    fn heat_decay_of_sine() {
        let r = zero_h();
        let grid = Grid1D::centered(8.0 * std::f64::consts::PI, 1.0 / 32.0, 0.0, 0.9).unwrap();
        let op = Operator::new(&r, &grid, (1.0, 1.0), SigmaPolicy::Minimal);
        let mut f = vec![grid.nodes().iter().map(|x| x.sin()).collect::<Vec<_>>()];
        evolve(&op, &mut f, 1.0, &[], 10_000_000, |_, _| {}).unwrap();
        let c = ((0.0 - grid.x_lo) / grid.dx).round() as usize;
        let q = ((std::f64::consts::FRAC_PI_2 - grid.x_lo) / grid.dx).round() as usize;
        let xq = grid.x(q);
        assert!(f[0][c].abs() < 1e-3);
        assert!((f[0][q] - (-1.0f64).exp() * xq.sin()).abs() < 1e-3);
    }

    #[test]
    fn linear_data_is_exact_for_x_free() {
        let r = quad();
        let grid = Grid1D::centered(10.0, 1.0 / 16.0, 1.0, 0.9).unwrap();
        let run = solve_ehj(&r, &grid, 1.0, &[], &SolverOptions::default(), None).unwrap();
        assert!((run.slope_series.last().unwrap() - 1.0).abs() < 2e-3);
        let grid = Grid1D::centered(20.0, 1.0 / 16.0, 2.0, 0.9).unwrap();
        let run = solve_ehj(&r, &grid, 2.0, &[], &SolverOptions::default(), None).unwrap();
        let e = estimate_hl_hu(&run, 0.25).unwrap();
        assert!((e.hl - 4.0).abs() < 2e-3 && (e.hu - 4.0).abs() < 2e-3);
        assert!(estimate_hl_hu(&run, 0.0).is_err());
    }

    #[test]
    fn comparison_of_shifted_data() {
        let r = sample_realization(
            &EnvironmentSpec::separable(Kernel::AbsPower { gamma: 2.0 }, FieldModel::cosine(1.0)),
            0,
        )
        .unwrap();
        let grid = Grid1D::centered(4.0, 1.0 / 32.0, 0.0, 0.9).unwrap();
        let w0: Vec<f64> = grid.nodes().iter().map(|x| 0.3 * (3.0 * x).sin()).collect();
        let same = comparison_check(&r, &grid, &w0, &w0, 0.5, &SolverOptions::default()).unwrap();
        assert!(same.passed && same.observed_gap == 0.0);
        let v0: Vec<f64> = w0.iter().map(|w| w - 1.0).collect();
        let lower = comparison_check(&r, &grid, &v0, &w0, 0.5, &SolverOptions::default()).unwrap();
        assert!(lower.passed && lower.observed_gap <= -1.0 + 1e-9);
    }

    #[test]
    fn eps_study_rejects_increasing_list() {
        assert!(epsilon_study(&quad(), 0.0, &[0.1, 0.2], 1.0, &EpsOptions::default()).is_err());
        let s = epsilon_study(&quad(), 1.5, &[0.5, 0.25], 1.0, &EpsOptions::default()).unwrap();
        for row in &s.rows {
            assert!((row.u_eps - 2.25).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_policies() {
        let r = quad();
        let grid = Grid1D::centered(1.0, 0.1, 0.0, 0.9).unwrap();
        let full = Operator::new(&r, &grid, (0.0, 0.0), SigmaPolicy::Full);
        let min = Operator::new(&r, &grid, (0.0, 0.0), SigmaPolicy::Minimal);
        assert!((full.sigma(-20.0, 20.0) - 1.1 * 40.0).abs() < 1e-12);
        assert!((min.sigma(-20.0, 20.0) - (44.0 - 20.0)).abs() < 1e-12);
        assert_eq!(min.sigma(-1.0, 1.0), 0.0);
    }
}
