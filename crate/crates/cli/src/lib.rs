//! Command-line driver for the `chns` binary.
//!
//! Commands: `simulate`, `verify`, `experiment`, `plot`. Every command writes
//! only below its output directory (`--out`, else `output.dir`).

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use chns_core::diagnostics::hminus1_distance;
use chns_core::experiments::{run_experiment, ExperimentKind, ExperimentPlan, ExperimentReport};
use chns_core::grid::{divergence_fc, gradient_cc, Grid, ScalarField, VectorField};
use chns_core::init::{seeded_noise, unit_solenoidal, VelocityInit};
use chns_core::materials::{EntropyFunction, MobilitySpec};
use chns_core::operators::{trilinear_b, PoissonSolver};
use chns_core::output::{parse_diagnostics_csv, plot_columns, write_dump, CsvSink};
use chns_core::solver::damping_pairing;
use chns_core::{Error, Simulation};

pub use config::{parse_config, parse_entries, ConfigError, RunConfig};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const DUMP_FILE: &str = "dump.bin";
pub const THREADS_ENV: &str = "CHNS_THREADS";

/// Exit status for a failed check.
pub const EXIT_CHECK_FAILED: u8 = 1;
/// Exit status for an error (bad input, solver failure, I/O).
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "chns", version, about = "Damped Cahn-Hilliard-Navier-Stokes simulator and verification harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trajectory; writes diagnostics.csv and dump.bin.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suite and print a pass/fail table.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a scripted study described by a plan file.
    Experiment {
        #[arg(long)]
        plan: PathBuf,
        /// Base run configuration; keys in the plan file override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot diagnostics columns against t as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        columns: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => parse_config(&read_text(p)?).with_context(|| format!("invalid config {}", p.display())),
    }
}

/// Worker count: `CHNS_THREADS` if set, else the machine's parallelism.
pub fn worker_count() -> anyhow::Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("{THREADS_ENV} must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

// ------------------------------------------------------------------- plans

fn parse_list<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<Vec<T>, ConfigError> {
    let inner = v.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(v).trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse().map_err(|_| ConfigError {
                line: Some(line),
                key: Some(key.to_string()),
                message: format!("malformed list entry {tok:?}"),
            })
        })
        .collect()
}

/// Parses a plan file: `plan.*` keys describe the study, any other key
/// overrides `base`.
pub fn parse_plan(text: &str, base: RunConfig) -> Result<ExperimentPlan, ConfigError> {
    let entries = parse_entries(text)?;
    let (plan_entries, rest): (Vec<_>, Vec<_>) = entries.into_iter().partition(|e| e.key.starts_with("plan."));
    let cfg = base.apply(&rest)?;
    let setup = cfg.setup().map_err(|e| ConfigError { line: None, key: None, message: e.to_string() })?;
    let kind_entry = plan_entries.iter().find(|e| e.key == "plan.kind").ok_or(ConfigError {
        line: None,
        key: Some("plan.kind".into()),
        message: "missing; expected one of refinement | r_sweep | beta_nu_probe | continuous_dependence | epsilon_sweep"
            .into(),
    })?;
    let kind = ExperimentKind::parse(&kind_entry.value).map_err(|e| ConfigError {
        line: Some(kind_entry.line),
        key: Some("plan.kind".into()),
        message: e.to_string(),
    })?;
    let mut plan = ExperimentPlan::new(kind, setup);
    for e in &plan_entries {
        let (k, l, v) = (e.key.as_str(), e.line, e.value.as_str());
        match k {
            "plan.kind" => {}
            "plan.grids" => plan.grids = parse_list(k, l, v)?,
            "plan.dts" => plan.dts = parse_list(k, l, v)?,
            "plan.r" => plan.r_values = parse_list(k, l, v)?,
            "plan.deltas" => plan.deltas = parse_list(k, l, v)?,
            "plan.beta" => plan.betas = parse_list(k, l, v)?,
            "plan.nu" => plan.nus = parse_list(k, l, v)?,
            "plan.epsilons" => plan.epsilons = parse_list(k, l, v)?,
            _ => {
                return Err(ConfigError { line: Some(l), key: Some(k.into()), message: "unknown key".into() });
            }
        }
    }
    Ok(plan)
}

// ---------------------------------------------------------------- commands

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub steps: usize,
    pub csv: PathBuf,
    pub dump: PathBuf,
}

/// Runs to `time.t_final`, appending a CSV row every `output.every_k_steps`
/// steps (and at the last step). Rows already written stay on disk if a step
/// fails.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<SimulateOutcome> {
    let setup = cfg.setup()?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let csv = out.join(DIAGNOSTICS_FILE);
    let dump = out.join(DUMP_FILE);
    let mut sink = CsvSink::create(&csv)?;
    let mut sim = Simulation::new(&setup)?;
    sink.write(sim.initial_record())?;
    while !sim.is_finished() {
        let step = sim.steps_taken() + 1;
        let rec = *sim
            .advance()
            .with_context(|| format!("step {step} failed; {} holds the rows so far", csv.display()))?;
        if sim.steps_taken() % cfg.every_k_steps == 0 || sim.is_finished() {
            sink.write(&rec)?;
        }
    }
    write_dump(&dump, sim.state())?;
    Ok(SimulateOutcome { steps: sim.steps_taken(), csv, dump })
}

pub fn cmd_experiment(plan: &ExperimentPlan, out: &Path) -> anyhow::Result<ExperimentReport> {
    plan.validate()?;
    let report = run_experiment(plan)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    report.write(out)?;
    Ok(report)
}

/// Renders the requested columns of a diagnostics CSV to `<out>/<stem>.svg`.
/// Nothing is written if the input cannot be plotted.
pub fn cmd_plot(csv: &Path, columns: &[String], out: &Path) -> anyhow::Result<PathBuf> {
    let records = parse_diagnostics_csv(&read_text(csv)?).with_context(|| format!("cannot plot {}", csv.display()))?;
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let svg = plot_columns(&records, &cols)?;
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join(format!("{stem}.svg"));
    std::fs::write(&path, svg)?;
    Ok(path)
}

// ------------------------------------------------------------------ verify

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    fn add(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.rows.push(CheckRow { name, passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<28} {:<6} {}\n", "check", "status", "detail");
        for r in &self.rows {
            writeln!(s, "{:<28} {:<6} {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail).unwrap();
        }
        let failed = self.rows.iter().filter(|r| !r.passed).count();
        writeln!(s, "{} checks, {} failed", self.rows.len(), failed).unwrap();
        s
    }
}

/// Gradient of seeded noise plus a seeded solenoidal field.
fn random_velocity(grid: Grid, seed: u64) -> chns_core::Result<VectorField> {
    let mut v = gradient_cc(&seeded_noise(grid, seed));
    v.axpy(1.0, &unit_solenoidal(grid, seed.wrapping_add(1), 1e-12)?);
    Ok(v)
}

fn mean_zero_noise(grid: Grid, seed: u64) -> ScalarField {
    let mut f = seeded_noise(grid, seed);
    f.remove_mean();
    f
}

const VERIFY_SAMPLES: usize = 10;
const VERIFY_STEPS: usize = 10;

fn verify_operators(cfg: &RunConfig, rep: &mut VerifyReport) -> chns_core::Result<()> {
    let g = cfg.grid();
    let seed = cfg.init.seed;

    let phi = seeded_noise(g, seed);
    let v = random_velocity(g, seed + 1)?;
    let lhs = gradient_cc(&phi).dot(&v);
    let rhs = -phi.dot(&divergence_fc(&v));
    let scale = gradient_cc(&phi).norm() * v.norm();
    let res = (lhs - rhs).abs() / scale;
    rep.add("grad_div_adjoint", res <= 1e-12, format!("relative residual {res:.3e}"));

    let mut worst: f64 = 0.0;
    for k in 0..VERIFY_SAMPLES as u64 {
        let u = random_velocity(g, seed + 10 + 3 * k)?;
        let a = random_velocity(g, seed + 11 + 3 * k)?;
        let b = random_velocity(g, seed + 12 + 3 * k)?;
        let scale = u.norm() * a.norm() * b.norm() / g.h();
        worst = worst.max(trilinear_b(&u, &a, &a).abs() / scale);
        worst = worst.max((trilinear_b(&u, &a, &b) + trilinear_b(&u, &b, &a)).abs() / scale);
    }
    rep.add("trilinear_antisymmetry", worst <= 1e-12, format!("max scaled residual {worst:.3e}"));

    let ps = PoissonSolver::new(g);
    let proj = ps.project(&v, cfg.poisson_tol)?;
    let orth = v.sub(&proj.field).dot(&proj.field).abs() / v.dot(&v);
    let div = divergence_fc(&proj.field).max_abs();
    rep.add(
        "projection",
        orth <= 1e-10 && div <= cfg.poisson_tol,
        format!("orthogonality {orth:.3e}, max divergence {div:.3e}"),
    );

    let mut worst: f64 = 0.0;
    for k in 0..VERIFY_SAMPLES as u64 {
        let f = mean_zero_noise(g, seed + 100 + 2 * k);
        let h = mean_zero_noise(g, seed + 101 + 2 * k);
        let bf = ps.neumann_inverse(&f, 1e-13)?.u;
        let bh = ps.neumann_inverse(&h, 1e-13)?.u;
        let scale = bf.norm() * h.norm() + f.norm() * bh.norm();
        worst = worst.max((bf.dot(&h) - f.dot(&bh)).abs() / scale);
    }
    rep.add("neumann_inverse_symmetry", worst <= 1e-10, format!("max relative residual {worst:.3e}"));

    let a = mean_zero_noise(g, seed + 200);
    let d = hminus1_distance(&a, &a, 1e-12)?;
    rep.add("hminus1_zero_distance", d.star == 0.0 && d.l2 == 0.0, format!("star {:.3e}", d.star));
    Ok(())
}

fn verify_materials(cfg: &RunConfig, rep: &mut VerifyReport) -> chns_core::Result<()> {
    let pot = cfg.potential_spec()?;
    let h = 1e-6;
    let samples: Vec<f64> = (0..=190).map(|i| -0.95 + 0.01 * i as f64).collect();
    let mut worst: f64 = 0.0;
    let mut split: f64 = f64::INFINITY;
    for &s in &samples {
        let d1 = (pot.value(s + h)? - pot.value(s - h)?) / (2.0 * h);
        let e1 = pot.deriv(s, 1)?;
        let d2 = (pot.deriv(s + h, 1)? - pot.deriv(s - h, 1)?) / (2.0 * h);
        let e2 = pot.deriv(s, 2)?;
        worst = worst.max((d1 - e1).abs() / (1.0 + e1.abs())).max((d2 - e2).abs() / (1.0 + e2.abs()));
        split = split.min(e2 + pot.c0());
    }
    rep.add("potential_derivatives", worst <= 1e-5, format!("{}: max relative difference {worst:.3e}", pot.label()));
    rep.add("convex_split", split >= -1e-10, format!("min F'' + C0 = {split:.3e}"));

    let mob = cfg.mobility_spec()?;
    let (m1, m2) = mob.bounds().unwrap_or((0.0, 0.0));
    rep.add("mobility_bounds", m1 > 0.0 && m1 <= m2, format!("{}: [{m1:.4}, {m2:.4}]", mob.label()));

    let unit = EntropyFunction::new(&MobilitySpec::constant(1.0)?, 256)?;
    let err = samples.iter().map(|&s| (unit.value(s) - 0.5 * s * s).abs()).fold(0.0, f64::max);
    rep.add("entropy_quadrature", err <= 1e-8, format!("max |G(s) - s^2/2| = {err:.3e} for m = 1"));

    let g = cfg.grid();
    let mut min_pair = f64::INFINITY;
    for k in 0..VERIFY_SAMPLES as u64 {
        let a = random_velocity(g, cfg.init.seed + 300 + 2 * k)?;
        let b = random_velocity(g, cfg.init.seed + 301 + 2 * k)?;
        min_pair = min_pair.min(damping_pairing(&a, &b, cfg.r));
    }
    rep.add("damping_pairing", min_pair >= -1e-12, format!("min pairing {min_pair:.3e} at r = {}", cfg.r));
    Ok(())
}

fn short_setup(cfg: &RunConfig, steps: usize) -> chns_core::Result<chns_core::SimulationSetup> {
    let mut setup = cfg.setup()?;
    let n = steps.min(setup.params.steps()).max(1);
    setup.params.t_final = n as f64 * setup.params.dt;
    Ok(setup)
}

fn verify_short_run(cfg: &RunConfig, rep: &mut VerifyReport) {
    let run = || -> chns_core::Result<Simulation> {
        let mut sim = Simulation::new(&short_setup(cfg, VERIFY_STEPS)?)?;
        sim.run()?;
        Ok(sim)
    };
    match run() {
        Err(e) => {
            for name in ["short_run_mass", "short_run_energy", "short_run_divergence"] {
                rep.add(name, false, format!("run failed: {e}"));
            }
        }
        Ok(sim) => {
            let l = sim.ledger();
            let drift = l.mass_drift();
            rep.add("short_run_mass", drift <= 1e-12, format!("mass drift {drift:.3e} over {} steps", sim.steps_taken()));
            if cfg.forcing_spec().is_zero() {
                let e0 = l.records()[0].energy();
                let inc = l.max_energy_increase();
                rep.add("short_run_energy", inc <= 1e-12 * e0.abs(), format!("max increase {inc:.3e}, E0 {e0:.6e}"));
            } else {
                rep.add("short_run_energy", true, "forced run; monotonicity not expected");
            }
            let div = l.records().iter().map(|r| r.div_max).fold(0.0, f64::max);
            rep.add("short_run_divergence", div <= cfg.poisson_tol, format!("max divergence {div:.3e}"));
        }
    }
}

fn verify_cfl(cfg: &RunConfig, rep: &mut VerifyReport) {
    let mut probe = cfg.clone();
    probe.init.velocity = VelocityInit::Vortex;
    if probe.init.velocity_amp == 0.0 {
        probe.init.velocity_amp = 1.0;
    }
    let run = || -> chns_core::Result<usize> {
        let mut sim = Simulation::new(&short_setup(&probe, 3)?)?;
        sim.run()?;
        Ok(sim.steps_taken())
    };
    match run() {
        Ok(n) => rep.add("cfl_guard", true, format!("{n} vortex steps within the stability limit")),
        Err(Error::Stability { dt, limit }) => {
            rep.add("cfl_guard", false, format!("dt = {dt:e} exceeds the stability limit {limit:.3e}"))
        }
        Err(e) => rep.add("cfl_guard", false, format!("vortex run failed: {e}")),
    }
}

pub fn cmd_verify(cfg: &RunConfig) -> VerifyReport {
    let mut rep = VerifyReport::default();
    if let Err(e) = verify_operators(cfg, &mut rep) {
        rep.add("operators", false, e.to_string());
    }
    if let Err(e) = verify_materials(cfg, &mut rep) {
        rep.add("materials", false, e.to_string());
    }
    verify_short_run(cfg, &mut rep);
    verify_cfl(cfg, &mut rep);
    rep
}

// -------------------------------------------------------------------- main

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output_dir.clone())
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let o = cmd_simulate(&cfg, &output_dir(&cfg, out))?;
            println!("{} steps; wrote {} and {}", o.steps, o.csv.display(), o.dump.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config } => {
            let cfg = load_config(config.as_deref())?;
            let rep = cmd_verify(&cfg);
            print!("{}", rep.table());
            Ok(if rep.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK_FAILED) })
        }
        Command::Experiment { plan, config, out } => {
            let base = load_config(config.as_deref())?;
            let mut p = parse_plan(&read_text(&plan)?, base.clone())
                .with_context(|| format!("invalid plan {}", plan.display()))?;
            p.workers = worker_count()?;
            let dir = match out {
                Some(o) => o,
                None => {
                    // The plan file may set output.dir itself.
                    let entries = parse_entries(&read_text(&plan)?)?;
                    let rest: Vec<_> = entries.into_iter().filter(|e| !e.key.starts_with("plan.")).collect();
                    base.apply(&rest)?.output_dir
                }
            };
            let rep = cmd_experiment(&p, &dir)?;
            for c in &rep.checks {
                println!("{:<36} {:<6} {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
            }
            println!("{} runs written to {}", rep.runs.len(), dir.display());
            Ok(if rep.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK_FAILED) })
        }
        Command::Plot { csv, columns, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let path = cmd_plot(&csv, &columns, &output_dir(&cfg, out))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code:
/// 0 on success, 1 if a check failed, 2 on any error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_lists_parse() {
        let p = parse_plan("plan.kind = r_sweep\nplan.r = [1, 2, 3, 4]\ngrid.n = 16\n", RunConfig::default()).unwrap();
        assert_eq!(p.kind, ExperimentKind::RSweep);
        assert_eq!(p.r_values, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.base.grid.n(), 16);
        let p = parse_plan("plan.kind = refinement\nplan.grids = 16, 32, 64", RunConfig::default()).unwrap();
        assert_eq!(p.grids, vec![16, 32, 64]);
    }

    #[test]
    fn plan_errors() {
        assert!(parse_plan("plan.r = [1]", RunConfig::default()).unwrap_err().message.contains("missing"));
        assert!(parse_plan("plan.kind = sideways", RunConfig::default()).is_err());
        let e = parse_plan("plan.kind = r_sweep\nplan.r = [1, x]", RunConfig::default()).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("plan.r"));
        let e = parse_plan("plan.kind = r_sweep\nplan.colour = 3", RunConfig::default()).unwrap_err();
        assert_eq!(e.message, "unknown key");
        let p = parse_plan("plan.kind = r_sweep\nplan.r = []", RunConfig::default()).unwrap();
        assert!(matches!(p.validate(), Err(Error::Precondition(_))));
    }

    #[test]
    fn verify_is_deterministic_and_passes_on_small_grid() {
        let cfg = parse_config("grid.n = 16").unwrap();
        let a = cmd_verify(&cfg);
        assert!(a.passed(), "{}", a.table());
        assert_eq!(a, cmd_verify(&cfg));
    }

    #[test]
    fn verify_reports_cfl_violation() {
        let cfg = parse_config("grid.n = 16\ntime.dt = 0.5\ntime.t_final = 1").unwrap();
        let rep = cmd_verify(&cfg);
        let row = rep.rows.iter().find(|r| r.name == "cfl_guard").unwrap();
        assert!(!row.passed && row.detail.contains("stability limit"), "{}", rep.table());
        assert!(!rep.passed());
    }
}
