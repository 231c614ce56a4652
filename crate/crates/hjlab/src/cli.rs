//! Command-line front end. Every command takes one TOML config path and
//! writes its artifacts plus a `manifest.json` under `run.out_dir/<command>/`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::bridge::{detect_gap_level, mollify_glue, shoot_descend, Verdict};
use crate::cell::{bounded_solution_window, estimate_lambda0, Extremal};
use crate::config::RunConfig;
use crate::env::sample_realization;
use crate::error::{stage, Result};
use crate::io::csv::CsvWriter;
use crate::io::svg::Plot;
use crate::io::write_json;
use crate::par;
use crate::parabolic::{epsilon_study, estimate_hl_hu, front_speed, solve_ehj, EpsOptions, Grid1D};
use crate::theta::{
    build_theta_map_on, invert_to_effective, lambda0_over, realizations, refine_gaps, GapScan,
    ThetaMap,
};
use crate::validate::{markdown_table, run_suite_checked, write_reports};

#[derive(Debug, Parser)]
#[command(
    name = "hjlab",
    version,
    about = "Effective Hamiltonians of 1-d viscous Hamilton-Jacobi equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample every seed and write replayable realization manifests.
    SampleEnv { config: PathBuf },
    /// Critical value per seed and the extremal correctors above it.
    Lambda0 { config: PathBuf },
    /// Means of the extremal correctors over the λ levels, with gaps.
    ThetaMap { config: PathBuf },
    /// Effective Hamiltonian on the θ grid by inverting the map.
    Effective { config: PathBuf },
    /// Cauchy problem from the linear datum θx.
    Parabolic { config: PathBuf },
    /// Homogenization study over the ε list.
    EpsStudy { config: PathBuf },
    /// Descent shoot, mollified gluing and gap-level detection.
    Bridge { config: PathBuf },
    /// Runs the configured check suite.
    Validate { config: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SampleEnv { .. } => "sample-env",
            Command::Lambda0 { .. } => "lambda0",
            Command::ThetaMap { .. } => "theta-map",
            Command::Effective { .. } => "effective",
            Command::Parabolic { .. } => "parabolic",
            Command::EpsStudy { .. } => "eps-study",
            Command::Bridge { .. } => "bridge",
            Command::Validate { .. } => "validate",
        }
    }

    pub fn config(&self) -> &Path {
        match self {
            Command::SampleEnv { config }
            | Command::Lambda0 { config }
            | Command::ThetaMap { config }
            | Command::Effective { config }
            | Command::Parabolic { config }
            | Command::EpsStudy { config }
            | Command::Bridge { config }
            | Command::Validate { config } => config,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    CheckFailed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::CheckFailed => 1,
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_path: String,
    config_hash: String,
    seeds: &'a [u64],
    version: &'a str,
    parallel: bool,
    workers: usize,
    wall_time_s: f64,
    finished_unix: u64,
    outcome: &'a str,
    /// Paths relative to the command directory.
    artifacts: Vec<String>,
}

/// Output directory of one command and the artifacts written into it.
struct Out {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
    plots: bool,
}

impl Out {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.artifacts.push(p.clone());
        p
    }

    fn plot(&mut self, name: &str, plot: Plot) -> Result<()> {
        if self.plots {
            let p = self.path(name);
            plot.write(&p)?;
        }
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> Result<()> {
        let mut w = CsvWriter::create(&self.path(name), header)?;
        for r in rows {
            w.row(&r)?;
        }
        w.finish()
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(o) => o.exit_code(),
        Err(e) => {
            eprintln!("hjlab {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

/// Loads the config and runs the command inside the configured worker pool.
pub fn execute(cmd: &Command) -> Result<Outcome> {
    let cfg = RunConfig::load(cmd.config())?;
    par::with_workers(cfg.run.workers, || run(cmd, &cfg))
}

/// Runs `cmd` with an already validated config.
pub fn run(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let dir = Path::new(&cfg.run.out_dir).join(cmd.name());
    std::fs::create_dir_all(&dir)?;
    let mut out = Out {
        dir,
        artifacts: vec![],
        plots: cfg.run.plots,
    };
    let outcome = match cmd {
        Command::SampleEnv { .. } => sample_env(cfg, &mut out),
        Command::Lambda0 { .. } => lambda0(cfg, &mut out),
        Command::ThetaMap { .. } => theta_map(cfg, &mut out).map(|_| Outcome::Pass),
        Command::Effective { .. } => effective(cfg, &mut out),
        Command::Parabolic { .. } => parabolic(cfg, &mut out),
        Command::EpsStudy { .. } => eps_study(cfg, &mut out),
        Command::Bridge { .. } => bridge(cfg, &mut out),
        Command::Validate { .. } => validate(cfg, &mut out),
    }?;
    let rel = |p: &PathBuf| {
        p.strip_prefix(&out.dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    let manifest = Manifest {
        command: cmd.name(),
        config_path: cmd.config().to_string_lossy().into_owned(),
        config_hash: cfg.hash(),
        seeds: &cfg.run.seeds,
        version: env!("CARGO_PKG_VERSION"),
        parallel: par::is_parallel(),
        workers: cfg.run.workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        finished_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        outcome: match outcome {
            Outcome::Pass => "pass",
            Outcome::CheckFailed => "check_failed",
        },
        artifacts: out.artifacts.iter().map(rel).collect(),
    };
    write_json(&out.dir.join("manifest.json"), &manifest)?;
    Ok(outcome)
}

fn sample_env(cfg: &RunConfig, out: &mut Out) -> Result<Outcome> {
    let (lo, hi) = RunConfig::window(cfg.cell.window);
    for &seed in &cfg.run.seeds {
        let r = sample_realization(&cfg.env, seed)?;
        let p = out.path(&format!("realization_seed{seed}.json"));
        write_json(&p, &r.manifest(lo, hi))?;
    }
    Ok(Outcome::Pass)
}

fn lambda0(cfg: &RunConfig, out: &mut Out) -> Result<Outcome> {
    let w = RunConfig::window(cfg.cell.window);
    let o = cfg.cell.solver;
    let reals = realizations(&cfg.env, &cfg.run.seeds)?;
    let est = par::map(&reals, |r| estimate_lambda0(r, w, cfg.cell.lambda0_tol, &o));
    let mut rows = vec![];
    for (r, e) in reals.iter().zip(est) {
        let e = stage("lambda0", e)?;
        rows.push(vec![r.seed() as f64, e.value, e.bracket.0, e.bracket.1]);
        for &off in &cfg.cell.corrector_offsets {
            for (ext, name) in [(Extremal::Minimal, "min"), (Extremal::Maximal, "max")] {
                let f = stage(
                    "corrector",
                    bounded_solution_window(r, e.value + off, w, ext, &o),
                )?;
                f.write(&out.path(&format!(
                    "corrector_{name}_seed{}_offset{off}.csv",
                    r.seed()
                )))?;
            }
        }
    }
    out.csv(
        "lambda0.csv",
        &["seed", "lambda0", "bracket_lo", "bracket_hi"],
        rows,
    )?;
    Ok(Outcome::Pass)
}

fn theta_map(cfg: &RunConfig, out: &mut Out) -> Result<(f64, ThetaMap, GapScan)> {
    let reals = realizations(&cfg.env, &cfg.run.seeds)?;
    let o = cfg.theta.options(&cfg.cell.solver);
    let lambda0 = stage(
        "lambda0",
        lambda0_over(
            &reals,
            RunConfig::window(cfg.cell.window),
            cfg.cell.lambda0_tol,
            &o.cell,
        ),
    )?;
    let window = RunConfig::window(cfg.theta.window);
    let mut map = stage(
        "theta-map",
        build_theta_map_on(
            &reals,
            &cfg.theta.levels(lambda0),
            window,
            Some(lambda0),
            &o,
        ),
    )?;
    let scan = refine_gaps(&reals, &mut map, window, &o);
    map.write_csv(&out.path("theta_map.csv"))?;
    write_json(
        &out.path("gaps.json"),
        &serde_json::json!({ "lambda0": lambda0, "scan": scan, "flags": map.flags }),
    )?;
    let mut plot = Plot::new("Θ(λ)", "θ", "λ")
        .series(
            "theta_max",
            "#1f77b4",
            map.samples
                .iter()
                .map(|s| (s.theta_max, s.lambda))
                .collect(),
        )
        .series(
            "theta_min",
            "#d62728",
            map.samples
                .iter()
                .map(|s| (s.theta_min, s.lambda))
                .collect(),
        );
    plot.highlights = scan.gaps.iter().map(|g| (g.theta1, g.theta2)).collect();
    out.plot("theta_map.svg", plot)?;
    Ok((lambda0, map, scan))
}

fn effective(cfg: &RunConfig, out: &mut Out) -> Result<Outcome> {
    let (lambda0, map, scan) = theta_map(cfg, out)?;
    let curve = stage(
        "effective",
        invert_to_effective(&map, &scan.gaps, &cfg.theta.theta_grid),
    )?;
    debug_assert_eq!(curve.lambda0, lambda0);
    curve.write_csv(&out.path("effective.csv"))?;
    out.plot("effective.svg", curve.plot("effective Hamiltonian"))?;
    Ok(Outcome::Pass)
}

fn parabolic(cfg: &RunConfig, out: &mut Out) -> Result<Outcome> {
    let p = &cfg.parabolic;
    let reals = realizations(&cfg.env, &cfg.run.seeds)?;
    let mut rows = vec![];
    let mut plot = Plot::new("u(t, 0) / t", "t", "slope");
    for r in &reals {
        let half = p
            .half_width
            .unwrap_or_else(|| front_speed(r, p.theta, (-64.0, 64.0)) * p.t_end + 8.0);
        let grid = Grid1D::centered(half, p.dx, p.theta, p.cfl)?;
        let dump = p
            .dump
            .then(|| out.path(&format!("dump_seed{}.bin", r.seed())));
        let run = stage(
            "parabolic",
            solve_ehj(r, &grid, p.t_end, &[], &p.solver, dump.as_deref()),
        )?;
        if dump.is_some() {
            out.artifacts
                .push(out.dir.join(format!("dump_seed{}.json", r.seed())));
        }
        let path = out.path(&format!("parabolic_seed{}.csv", r.seed()));
        run.write(&path)?;
        out.artifacts.push(path.with_extension("json"));
        let hl = estimate_hl_hu(&run, 0.5)?;
        rows.push(vec![r.seed() as f64, p.theta, hl.hl, hl.hu, hl.width]);
        plot = plot.series(
            &format!("seed {}", r.seed()),
            ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"][rows.len() % 4],
            run.times
                .iter()
                .copied()
                .zip(run.slope_series.iter().copied())
                .collect(),
        );
    }
    out.csv("hl_hu.csv", &["seed", "theta", "hl", "hu", "width"], rows)?;
    out.plot("parabolic.svg", plot)?;
    Ok(Outcome::Pass)
}

fn eps_study(cfg: &RunConfig, out: &mut Out) -> Result<Outcome> {
    let e = &cfg.eps;
    let o = EpsOptions {
        dx: e.dx,
        cfl: e.cfl,
        solver: cfg.parabolic.solver.clone(),
        max_nodes: e.max_nodes,
    };
    for r in &realizations(&cfg.env, &cfg.run.seeds)? {
        let study = stage(
            "eps-study",
            epsilon_study(r, e.theta, &e.eps_list, e.t_obs, &o),
        )?;
        let path = out.path(&format!("eps_seed{}.csv", r.seed()));
        study.write(&path)?;
        write_json(&out.path(&format!("eps_seed{}.json", r.seed())), &study)?;
    }
    Ok(Outcome::Pass)
}

fn bridge(cfg: &RunConfig, out: &mut Out) -> Result<Outcome> {
    let b = &cfg.bridge;
    let o = cfg.cell.solver;
    let mut outcome = Outcome::Pass;
    let mut levels = vec![];
    for r in &realizations(&cfg.env, &cfg.run.seeds)? {
        let seed = r.seed();
        let l0 = stage(
            "lambda0",
            estimate_lambda0(
                r,
                RunConfig::window(cfg.cell.window),
                cfg.cell.lambda0_tol,
                &o,
            ),
        )?
        .value;
        let lambda = l0 + b.lambda_offset;
        let w = RunConfig::window(b.window);
        let f1 = stage(
            "corrector",
            bounded_solution_window(r, lambda, w, Extremal::Minimal, &o),
        )?;
        let f2 = stage(
            "corrector",
            bounded_solution_window(r, lambda, w, Extremal::Maximal, &o),
        )?;
        let mu = lambda - b.mu_shift;
        let shot = stage("shoot", shoot_descend(r, &f1, &f2, mu, b.n, &o))?;
        shot.write(r, &out.path(&format!("bridge_seed{seed}.csv")))?;
        let glued = if shot.verdict == Verdict::Crossed {
            let g = stage(
                "glue",
                mollify_glue(r, &f2, &f1, &shot, mu, b.epsilon, b.r_margin, &b.glue),
            )?;
            g.write(&out.path(&format!("glued_seed{seed}.csv")))?;
            if !g.holds() {
                outcome = Outcome::CheckFailed;
            }
            Some((g.residual_min, g.bound(), g.holds()))
        } else {
            None
        };
        let mus: Vec<f64> = b.mu_offsets.iter().map(|d| lambda + d).collect();
        let gl = detect_gap_level(r, &f1, &f2, &mus, &b.n_schedule, &o);
        levels.push(serde_json::json!({
            "seed": seed,
            "lambda0": l0,
            "lambda": lambda,
            "mu": mu,
            "shoot": shot.verdict,
            "crossing_x": shot.crossing_x,
            "glue": glued.map(|(m, bound, ok)| serde_json::json!({ "residual_min": m, "bound": bound, "holds": ok })),
            "gap_levels": gl,
        }));
    }
    write_json(&out.path("gap_levels.json"), &levels)?;
    Ok(outcome)
}

fn validate(cfg: &RunConfig, out: &mut Out) -> Result<Outcome> {
    let reports = run_suite_checked(cfg, Some(&out.dir))?;
    for r in &reports {
        out.artifacts.extend(r.artifacts.iter().cloned());
    }
    let (md, json) = write_reports(&reports, &out.dir)?;
    out.artifacts.push(md);
    out.artifacts.push(json);
    print!("{}", markdown_table(&reports));
    Ok(if reports.iter().all(|r| r.passed()) {
        Outcome::Pass
    } else {
        Outcome::CheckFailed
    })
}
