//! Scripted studies built from many trajectories.
//!
//! - `refinement`: spatial order from a single-mode manufactured solution,
//!   and energy-balance residuals over a list of time steps.
//! - `r_sweep`: the damping exponent across the critical value `r = 3`.
//! - `continuous_dependence`: paired runs from perturbed data, measured in
//!   `D = ||z||^2 + ||rho||_*^2 + ||rho||^2`.
//! - `beta_nu_probe`: the same pairing over a `(beta, nu)` grid.
//! - `epsilon_sweep`: the regularized problems as `eps -> 0`.
//!
//! Independent runs execute on a rayon pool of `workers` threads; results are
//! collected in plan order so reports do not depend on scheduling.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::diagnostics::{entropy_functional, hminus1_distance_with, positive_part_excess, TrajectoryLedger};
use crate::error::{Error, Result};
use crate::grid::{restrict, Grid, ScalarField};
use crate::init::{unit_mean_zero, unit_solenoidal};
use crate::materials::{EntropyFunction, MobilitySpec, PotentialKind, PotentialSpec, DEFAULT_EPSILON_0, DEFAULT_THETA, DEFAULT_THETA_C};
use crate::operators::PoissonSolver;
use crate::output::{render_svg, write_ledger_csv, Panel, Series};
use crate::simulation::{Simulation, SimulationSetup};
use crate::solver::{damping_pairing, DampingModel, ForcingSpec, CRITICAL_EXPONENT};

/// Amplitude of the manufactured single-mode solution; small enough that the
/// cubic part of `F'` is invisible next to the discretization error.
pub const MANUFACTURED_AMPLITUDE: f64 = 1e-4;
/// `beta` used for the vanishing-damping control of the r-sweep.
pub const BETA_ZERO_CONTROL: f64 = 1e-10;
const PAIRING_FLOOR: f64 = -1e-12;
const ENTROPY_PANELS: usize = 256;
const D_ZERO_BOUND: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Refinement,
    RSweep,
    BetaNuProbe,
    ContinuousDependence,
    EpsilonSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Refinement,
        ExperimentKind::RSweep,
        ExperimentKind::BetaNuProbe,
        ExperimentKind::ContinuousDependence,
        ExperimentKind::EpsilonSweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Refinement => "refinement",
            ExperimentKind::RSweep => "r_sweep",
            ExperimentKind::BetaNuProbe => "beta_nu_probe",
            ExperimentKind::ContinuousDependence => "continuous_dependence",
            ExperimentKind::EpsilonSweep => "epsilon_sweep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    /// Physical setup shared by every run; lists below override parts of it.
    pub base: SimulationSetup,
    pub grids: Vec<usize>,
    pub dts: Vec<f64>,
    pub r_values: Vec<f64>,
    pub deltas: Vec<f64>,
    pub betas: Vec<f64>,
    pub nus: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub workers: usize,
}

impl ExperimentPlan {
    pub fn new(kind: ExperimentKind, base: SimulationSetup) -> Self {
        Self {
            kind,
            base,
            grids: Vec::new(),
            dts: Vec::new(),
            r_values: Vec::new(),
            deltas: Vec::new(),
            betas: Vec::new(),
            nus: Vec::new(),
            epsilons: Vec::new(),
            workers: 1,
        }
    }

    /// Checks the lists this kind needs; runs nothing.
    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::Precondition(format!("plan.{name} must not be empty for {}", self.kind.name())))
            } else {
                Ok(())
            }
        };
        let positive = |name: &str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite() && *x > 0.0) {
                Ok(())
            } else {
                Err(Error::Precondition(format!("plan.{name} entries must be positive")))
            }
        };
        match self.kind {
            ExperimentKind::Refinement => {
                if self.grids.is_empty() && self.dts.is_empty() {
                    return Err(Error::Precondition("refinement needs plan.grids or plan.dts".into()));
                }
                if self.grids.len() < 3 && self.dts.len() < 3 {
                    return Err(Error::Precondition(
                        "refinement needs at least 3 grid sizes or at least 3 time steps".into(),
                    ));
                }
                for &n in &self.grids {
                    Grid::new(self.base.grid.dim(), n)?;
                }
                positive("dts", &self.dts)?;
            }
            ExperimentKind::RSweep => {
                nonempty("r", self.r_values.len())?;
                if self.r_values.iter().any(|r| !(1.0..=5.0).contains(r)) {
                    return Err(Error::Precondition("plan.r entries must lie in [1, 5]".into()));
                }
            }
            ExperimentKind::ContinuousDependence => {
                nonempty("deltas", self.deltas.len())?;
                if self.deltas.len() < 3 {
                    return Err(Error::Precondition("continuous dependence needs at least 3 perturbation sizes".into()));
                }
                positive("deltas", &self.deltas)?;
            }
            ExperimentKind::BetaNuProbe => {
                nonempty("beta", self.betas.len())?;
                nonempty("nu", self.nus.len())?;
                positive("beta", &self.betas)?;
                positive("nu", &self.nus)?;
                positive("deltas", &self.deltas)?;
            }
            ExperimentKind::EpsilonSweep => {
                nonempty("epsilons", self.epsilons.len())?;
                if self.epsilons.len() < 3 {
                    return Err(Error::Precondition("epsilon sweep needs at least 3 values".into()));
                }
                if self.epsilons.iter().any(|e| !(*e > 0.0 && *e <= DEFAULT_EPSILON_0)) {
                    return Err(Error::Precondition(format!("plan.epsilons must lie in (0, {DEFAULT_EPSILON_0}]")));
                }
                if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::Precondition("plan.epsilons must be strictly decreasing".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub ledger: TrajectoryLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SummaryTable {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Clone)]
pub struct Curve {
    /// File stem of the SVG.
    pub name: String,
    pub panel: Panel,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub runs: Vec<RunResult>,
    pub summary: SummaryTable,
    pub curves: Vec<Curve>,
    pub checks: Vec<Check>,
    pub metrics: Vec<(String, f64)>,
}

impl ExperimentReport {
    fn new(kind: ExperimentKind, summary: SummaryTable) -> Self {
        Self { kind, runs: Vec::new(), summary, curves: Vec::new(), checks: Vec::new(), metrics: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    pub fn get_metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn run(&self, name: &str) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.name == name)
    }

    /// Writes `runs/<name>.csv`, `summary.csv`, `checks.csv` and one SVG per
    /// curve under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let runs = dir.join("runs");
        std::fs::create_dir_all(&runs)?;
        for r in &self.runs {
            write_ledger_csv(&runs.join(format!("{}.csv", r.name)), &r.ledger)?;
        }
        std::fs::write(dir.join("summary.csv"), self.summary.to_csv())?;
        let mut checks = String::from("check,passed,detail\n");
        for c in &self.checks {
            writeln!(checks, "{},{},{}", c.name, c.passed, c.detail.replace(',', ";")).unwrap();
        }
        std::fs::write(dir.join("checks.csv"), checks)?;
        for c in &self.curves {
            std::fs::write(dir.join(format!("{}.svg", c.name)), render_svg(std::slice::from_ref(&c.panel)))?;
        }
        Ok(())
    }
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    match plan.kind {
        ExperimentKind::Refinement => run_refinement(plan),
        ExperimentKind::RSweep => run_r_sweep(plan),
        ExperimentKind::BetaNuProbe => run_beta_nu_probe(plan),
        ExperimentKind::ContinuousDependence => run_continuous_dependence(plan),
        ExperimentKind::EpsilonSweep => run_epsilon_sweep(plan),
    }
}

fn parallel_map<I: Sync, T: Send>(workers: usize, items: &[I], f: impl Fn(&I) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

fn label(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------- refinement

/// Exact per-step factor of the convex-splitting scheme for one Fourier mode
/// of the linearized, mobility-one problem without flow, with `k2` the
/// eigenvalue of `-Lap`.
pub fn linear_mode_factor(dt: f64, k2: f64, f2_at_mean: f64, c0: f64) -> f64 {
    (1.0 + dt * k2 * c0) / (1.0 + dt * k2 * (k2 + f2_at_mean + c0))
}

struct ModeRun {
    run: RunResult,
    error: f64,
    phi: ScalarField,
}

fn manufactured_mode(base: &SimulationSetup, n: usize) -> Result<ModeRun> {
    let grid = Grid::new(base.grid.dim(), n)?;
    let params = crate::solver::SolverParams { forcing: ForcingSpec::Zero, ..base.params.clone() };
    let pot = PotentialSpec::regular();
    let setup = SimulationSetup::new(grid, params.clone(), pot, MobilitySpec::constant(1.0)?);
    let pi = std::f64::consts::PI;
    let shape = move |x: [f64; 3]| (0..grid.dim()).map(|a| (pi * x[a]).cos()).product::<f64>();
    let phi0 = ScalarField::from_fn(grid, |x| MANUFACTURED_AMPLITUDE * shape(x));
    let mut sim = Simulation::from_fields(&setup, crate::grid::VectorField::zeros(grid), phi0)?;
    sim.run()?;
    let steps = sim.steps_taken() as i32;
    let k2 = grid.dim() as f64 * pi * pi;
    let g = linear_mode_factor(params.dt, k2, pot.deriv(0.0, 2)?, pot.c0());
    let exact = ScalarField::from_fn(grid, |x| MANUFACTURED_AMPLITUDE * g.powi(steps) * shape(x));
    let phi = sim.state().phi.clone();
    let error = phi.sub(&exact).max_abs();
    Ok(ModeRun { run: RunResult { name: format!("mode_n{n}"), ledger: sim.into_ledger() }, error, phi })
}

pub fn run_refinement(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let mut report = ExperimentReport::new(
        ExperimentKind::Refinement,
        SummaryTable::new(&["study", "resolution", "error_or_residual", "observed_order", "cauchy_difference"]),
    );
    if plan.grids.len() >= 3 {
        let modes = parallel_map(plan.workers, &plan.grids, |&n| manufactured_mode(&plan.base, n))?;
        let mut orders = Vec::new();
        let mut err_pts = Vec::new();
        for (i, m) in modes.iter().enumerate() {
            let n = plan.grids[i] as f64;
            let order = if i > 0 {
                let o = (modes[i - 1].error / m.error).ln() / (n / plan.grids[i - 1] as f64).ln();
                orders.push(o);
                o
            } else {
                f64::NAN
            };
            let cauchy = if i > 0 && plan.grids[i] == 2 * plan.grids[i - 1] {
                restrict(&m.phi)?.sub(&modes[i - 1].phi).max_abs()
            } else {
                f64::NAN
            };
            report.summary.push(vec!["spatial".into(), label(n), num(m.error), num(order), num(cauchy)]);
            err_pts.push((n.log2(), m.error.log10()));
        }
        let ok = orders.iter().all(|o| (1.6..=2.4).contains(o));
        report.check(
            "spatial_order",
            ok,
            format!("observed orders {:?}", orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()),
        );
        if let Some(last) = orders.last() {
            report.metric("spatial_order_last", *last);
        }
        if let Some(min) = orders.iter().copied().reduce(f64::min) {
            report.metric("spatial_order_min", min);
        }
        if let Some(max) = orders.iter().copied().reduce(f64::max) {
            report.metric("spatial_order_max", max);
        }
        report.curves.push(Curve {
            name: "spatial_error".into(),
            panel: Panel {
                title: "manufactured mode: log10 max error vs log2 n".into(),
                x_label: "log2 n".into(),
                series: vec![Series { label: "error".into(), points: err_pts }],
            },
        });
        report.runs.extend(modes.into_iter().map(|m| m.run));
    }
    if plan.dts.len() >= 3 {
        let runs = parallel_map(plan.workers, &plan.dts, |&dt| {
            let setup = SimulationSetup {
                params: crate::solver::SolverParams { dt, ..plan.base.params.clone() },
                ..plan.base.clone()
            };
            let mut sim = Simulation::new(&setup)?;
            sim.run()?;
            let residual = crate::diagnostics::energy_balance_residual(sim.ledger())?;
            let phi = sim.state().phi.clone();
            Ok((RunResult { name: format!("dt_{dt:e}"), ledger: sim.into_ledger() }, residual, phi))
        })?;
        let mut pts = Vec::new();
        let mut decreasing = true;
        for (i, (_, res, phi)) in runs.iter().enumerate() {
            let dt = plan.dts[i];
            let (order, cauchy) = if i > 0 {
                let prev = &runs[i - 1];
                decreasing &= *res < prev.1;
                ((prev.1 / res).ln() / (plan.dts[i - 1] / dt).ln(), phi.sub(&prev.2).max_abs())
            } else {
                (f64::NAN, f64::NAN)
            };
            if i > 0 {
                report.metric(format!("residual_ratio_{i}"), runs[i - 1].1 / res);
            }
            report.summary.push(vec!["temporal".into(), num(dt), num(*res), num(order), num(cauchy)]);
            report.metric(format!("residual_dt_{dt:e}"), *res);
            pts.push((dt, *res));
        }
        report.check("energy_residual_decreasing", decreasing, "normalized energy-balance residual along the dt list");
        report.curves.push(Curve {
            name: "energy_residual".into(),
            panel: Panel {
                title: "normalized energy-balance residual vs dt".into(),
                x_label: "dt".into(),
                series: vec![Series { label: "residual".into(), points: pts }],
            },
        });
        report.runs.extend(runs.into_iter().map(|r| r.0));
    }
    Ok(report)
}

// ------------------------------------------------------------------- r sweep

#[derive(Clone, Copy)]
enum SweepJob {
    Exponent(f64),
    BetaZero,
}

struct SweepOutcome {
    run: RunResult,
    min_pairing: f64,
    drag_gap: Option<f64>,
    terminal: crate::solver::State,
}

pub fn run_r_sweep(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let base = &plan.base;
    let mut jobs: Vec<SweepJob> = plan.r_values.iter().map(|&r| SweepJob::Exponent(r)).collect();
    jobs.push(SweepJob::BetaZero);
    let outcomes = parallel_map(plan.workers, &jobs, |job| match *job {
        SweepJob::Exponent(r) => {
            let setup = SimulationSetup {
                params: crate::solver::SolverParams { r, damping: DampingModel::Forchheimer, ..base.params.clone() },
                ..base.clone()
            };
            let mut sim = Simulation::new(&setup)?;
            // r = 1 runs alongside an independent linear-drag reference.
            let mut reference = if r == 1.0 {
                let s = SimulationSetup {
                    params: crate::solver::SolverParams { damping: DampingModel::LinearDrag, ..setup.params.clone() },
                    ..setup.clone()
                };
                Some(Simulation::new(&s)?)
            } else {
                None
            };
            let mut min_pairing = f64::INFINITY;
            let mut gap: f64 = 0.0;
            while !sim.is_finished() {
                let prev = sim.state().u.clone();
                sim.advance()?;
                let u = &sim.state().u;
                min_pairing = min_pairing.min(damping_pairing(u, &prev, r));
                if let Some(reference) = reference.as_mut() {
                    reference.advance()?;
                    gap = gap.max(reference.state().u.sub(u).max_abs());
                    gap = gap.max(reference.state().phi.sub(&sim.state().phi).max_abs());
                }
            }
            let terminal = sim.state().clone();
            Ok(SweepOutcome {
                run: RunResult { name: format!("r_{r}"), ledger: sim.into_ledger() },
                min_pairing,
                drag_gap: reference.map(|_| gap),
                terminal,
            })
        }
        SweepJob::BetaZero => {
            let r = plan.r_values[0];
            let small = SimulationSetup {
                params: crate::solver::SolverParams { r, beta: BETA_ZERO_CONTROL, ..base.params.clone() },
                ..base.clone()
            };
            let off = SimulationSetup {
                params: crate::solver::SolverParams { damping: DampingModel::Off, ..small.params.clone() },
                ..base.clone()
            };
            let mut a = Simulation::new(&small)?;
            let mut b = Simulation::new(&off)?;
            a.run()?;
            b.run()?;
            let gap = a.state().u.sub(&b.state().u).max_abs().max(a.state().phi.sub(&b.state().phi).max_abs());
            Ok(SweepOutcome {
                run: RunResult { name: "beta_zero_control".into(), ledger: a.into_ledger() },
                min_pairing: f64::NAN,
                drag_gap: Some(gap),
                terminal: b.state().clone(),
            })
        }
    })?;

    let mut report = ExperimentReport::new(
        ExperimentKind::RSweep,
        SummaryTable::new(&[
            "r",
            "critical",
            "terminal_kinetic",
            "integrated_damp_diss",
            "min_pairing",
            "max_energy_increase",
            "mass_drift",
        ]),
    );
    let mut damp_series = Vec::new();
    let mut kin_series = Vec::new();
    let mut min_pair = f64::INFINITY;
    let mut kinetic = Vec::new();
    let dt = base.params.dt;
    for (job, out) in jobs.iter().zip(&outcomes) {
        match *job {
            SweepJob::Exponent(r) => {
                let l = &out.run.ledger;
                let integrated: f64 = l.records()[1..].iter().map(|x| dt * x.damp_diss).sum();
                let kin = l.last().map_or(0.0, |x| x.kinetic);
                kinetic.push(kin);
                min_pair = min_pair.min(out.min_pairing);
                report.summary.push(vec![
                    label(r),
                    ((r == CRITICAL_EXPONENT) as u8).to_string(),
                    num(kin),
                    num(integrated),
                    num(out.min_pairing),
                    num(l.max_energy_increase()),
                    num(l.mass_drift()),
                ]);
                damp_series.push(Series {
                    label: format!("r = {r}"),
                    points: l.records().iter().map(|x| (x.t, x.damp_diss)).collect(),
                });
                kin_series.push(Series {
                    label: format!("r = {r}"),
                    points: l.records().iter().map(|x| (x.t, x.kinetic)).collect(),
                });
                if let Some(gap) = out.drag_gap {
                    report.metric("linear_drag_gap", gap);
                    report.check("r1_matches_linear_drag", gap <= 1e-12, format!("max per-step difference {gap:e}"));
                }
                let _ = &out.terminal;
            }
            SweepJob::BetaZero => {
                let gap = out.drag_gap.unwrap_or(f64::NAN);
                report.metric("beta_zero_gap", gap);
                report.check(
                    "beta_zero_matches_undamped",
                    gap <= 1e-8,
                    format!("terminal difference {gap:e} at beta = {BETA_ZERO_CONTROL:e}"),
                );
            }
        }
    }
    report.metric("min_pairing", min_pair);
    report.check("damping_pairing_nonnegative", min_pair >= PAIRING_FLOOR, format!("minimum pairing {min_pair:e}"));
    let monotone = kinetic.windows(2).all(|w| w[1] <= w[0]);
    report.metric("terminal_kinetic_monotone", monotone as u8 as f64);
    report.curves.push(Curve {
        name: "damp_diss".into(),
        panel: Panel { title: "damping dissipation by exponent".into(), x_label: "t".into(), series: damp_series },
    });
    report.curves.push(Curve {
        name: "kinetic".into(),
        panel: Panel { title: "kinetic energy by exponent".into(), x_label: "t".into(), series: kin_series },
    });
    for (job, out) in jobs.iter().zip(outcomes) {
        if let SweepJob::Exponent(_) = job {
            report.runs.push(out.run);
        }
    }
    Ok(report)
}

// ---------------------------------------------------- continuous dependence

/// Trajectory distance of one perturbed pair.
#[derive(Debug, Clone)]
pub struct PairTrace {
    pub delta: f64,
    /// `(t, D(t))` for every step including `t = 0`.
    pub distance: Vec<(f64, f64)>,
    pub perturbed: TrajectoryLedger,
    pub reference: TrajectoryLedger,
}

impl PairTrace {
    pub fn initial(&self) -> f64 {
        self.distance[0].1
    }

    pub fn terminal(&self) -> f64 {
        self.distance.last().map_or(0.0, |p| p.1)
    }
}

/// Runs `(u0, phi0)` and `(u0 + delta z, phi0 + delta rho)` in lockstep with
/// seeded unit directions `z` (divergence-free) and `rho` (mean-zero).
pub fn paired_run(setup: &SimulationSetup, delta: f64) -> Result<PairTrace> {
    let grid = setup.grid;
    let tol = 1e-12;
    let z = unit_solenoidal(grid, setup.init.seed.wrapping_add(0x5eed_0001), tol)?;
    let rho = unit_mean_zero(grid, setup.init.seed.wrapping_add(0x5eed_0002));
    let (u0, phi0) = setup.initial_fields();
    let mut up = u0.clone();
    up.axpy(delta, &z);
    let mut php = phi0.clone();
    php.axpy(delta, &rho);
    let mut a = Simulation::from_fields(setup, u0, phi0)?;
    let mut b = Simulation::from_fields(setup, up, php)?;
    let ps = PoissonSolver::new(grid);
    let measure = |a: &Simulation, b: &Simulation| -> Result<(f64, f64)> {
        let zz = b.state().u.sub(&a.state().u);
        let h = hminus1_distance_with(&ps, &b.state().phi, &a.state().phi, tol)?;
        Ok((a.state().t, zz.dot(&zz) + h.star * h.star + h.l2 * h.l2))
    };
    let mut distance = vec![measure(&a, &b)?];
    while !a.is_finished() {
        a.advance()?;
        b.advance()?;
        distance.push(measure(&a, &b)?);
    }
    Ok(PairTrace { delta, distance, perturbed: b.into_ledger(), reference: a.into_ledger() })
}

pub fn run_continuous_dependence(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let mut deltas = plan.deltas.clone();
    deltas.push(0.0);
    let traces = parallel_map(plan.workers, &deltas, |&d| paired_run(&plan.base, d))?;
    let t_final = traces[0].distance.last().map_or(0.0, |p| p.0);
    let mut report = ExperimentReport::new(
        ExperimentKind::ContinuousDependence,
        SummaryTable::new(&["delta", "d_initial", "d_terminal", "amplification", "growth_rate", "halving_ratio"]),
    );
    let k = plan.deltas.len();
    let mut ratios_ok = true;
    let mut rates_ok = true;
    let mut series = Vec::new();
    for (i, tr) in traces.iter().enumerate() {
        let d0 = tr.initial();
        let dt_ = tr.terminal();
        let amp = if d0 > 0.0 { dt_ / d0 } else { f64::NAN };
        let rate = if t_final > 0.0 { amp.ln() / t_final } else { f64::NAN };
        let ratio = if i + 1 < k { dt_ / traces[i + 1].terminal() } else { f64::NAN };
        if i + 1 < k {
            ratios_ok &= (3.0..=5.0).contains(&ratio);
            report.metric(format!("halving_ratio_{i}"), ratio);
        }
        if i < k {
            rates_ok &= rate.is_finite();
            report.metric(format!("amplification_{}", tr.delta), amp);
            let scale = tr.delta * tr.delta;
            series.push(Series {
                label: format!("delta = {}", tr.delta),
                points: tr.distance.iter().map(|&(t, d)| (t, d / scale)).collect(),
            });
        }
        report.summary.push(vec![label(tr.delta), num(d0), num(dt_), num(amp), num(rate), num(ratio)]);
    }
    let control = traces.last().expect("control run");
    let control_max = control.distance.iter().fold(0.0_f64, |m, p| m.max(p.1));
    report.metric("control_max_distance", control_max);
    report.check("halving_ratios", ratios_ok, "terminal D ratio across consecutive deltas in [3, 5]");
    report.check("finite_growth_rate", rates_ok, "ln(D(T)/D(0)) / T finite for every delta");
    report.check("zero_perturbation", control_max <= D_ZERO_BOUND, format!("max D of the delta = 0 pair {control_max:e}"));
    report.curves.push(Curve {
        name: "distance".into(),
        panel: Panel { title: "D(t) / delta^2".into(), x_label: "t".into(), series },
    });
    let mut traces = traces;
    let control = traces.pop().expect("control run");
    report.runs.push(RunResult { name: "reference".into(), ledger: control.reference });
    for tr in traces {
        report.runs.push(RunResult { name: format!("delta_{}", tr.delta), ledger: tr.perturbed });
    }
    Ok(report)
}

pub fn run_beta_nu_probe(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let delta = plan.deltas.first().copied().unwrap_or(1e-2);
    let mut pairs: Vec<(f64, f64)> = plan.betas.iter().flat_map(|&b| plan.nus.iter().map(move |&n| (b, n))).collect();
    pairs.sort_by(|x, y| (x.0 * x.1).total_cmp(&(y.0 * y.1)).then(x.0.total_cmp(&y.0)));
    let traces = parallel_map(plan.workers, &pairs, |&(beta, nu)| {
        let setup = SimulationSetup {
            params: crate::solver::SolverParams { beta, nu, r: CRITICAL_EXPONENT, ..plan.base.params.clone() },
            ..plan.base.clone()
        };
        paired_run(&setup, delta)
    })?;
    let mut report = ExperimentReport::new(
        ExperimentKind::BetaNuProbe,
        SummaryTable::new(&["beta", "nu", "beta_nu", "d_initial", "d_terminal", "amplification"]),
    );
    let mut pts = Vec::new();
    let mut finite = true;
    let amp_at = |target: f64, pairs: &[(f64, f64)], amps: &[f64]| {
        pairs.iter().zip(amps).find(|((b, n), _)| (b * n - target).abs() < 1e-12).map(|(_, a)| *a)
    };
    let mut amps = Vec::new();
    for (&(beta, nu), tr) in pairs.iter().zip(&traces) {
        let amp = tr.terminal() / tr.initial();
        finite &= amp.is_finite();
        amps.push(amp);
        report.summary.push(vec![label(beta), label(nu), label(beta * nu), num(tr.initial()), num(tr.terminal()), num(amp)]);
        pts.push((beta * nu, amp));
    }
    report.check("finite_amplification", finite, "every (beta, nu) pair completes with finite D(T)/D(0)");
    if let (Some(a1), Some(a4)) = (amp_at(1.0, &pairs, &amps), amp_at(4.0, &pairs, &amps)) {
        report.metric("amplification_bn1", a1);
        report.metric("amplification_bn4", a4);
        report.check("bn4_vs_bn1", a4 <= 10.0 * a1, format!("D(T)/D(0): {a4:e} at beta*nu = 4, {a1:e} at beta*nu = 1"));
    }
    report.curves.push(Curve {
        name: "amplification".into(),
        panel: Panel {
            title: "D(T)/D(0) vs beta*nu (r = 3)".into(),
            x_label: "beta * nu".into(),
            series: vec![Series { label: "amplification".into(), points: pts }],
        },
    });
    for (&(beta, nu), tr) in pairs.iter().zip(traces) {
        report.runs.push(RunResult { name: format!("beta_{beta}_nu_{nu}"), ledger: tr.perturbed });
    }
    Ok(report)
}

// ------------------------------------------------------------ epsilon sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepFamily {
    /// Regularized logarithmic potential with the clamped mobility.
    Regularized,
    /// Polynomial double well with the clamped mobility.
    Regular,
    /// Singular logarithmic potential with the clamped mobility.
    Logarithmic,
}

impl SweepFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SweepFamily::Regularized => "regularized",
            SweepFamily::Regular => "regular",
            SweepFamily::Logarithmic => "logarithmic",
        }
    }
}

const FAMILIES: [SweepFamily; 3] = [SweepFamily::Regularized, SweepFamily::Regular, SweepFamily::Logarithmic];

struct EpsOutcome {
    run: RunResult,
    excess: Vec<(f64, f64)>,
    entropy: Vec<(f64, f64)>,
    phi_max: f64,
}

fn sweep_materials(base: &SimulationSetup) -> Result<(PotentialSpec, MobilitySpec)> {
    let log = match base.potential.kind() {
        PotentialKind::Logarithmic { theta, theta_c } | PotentialKind::Regularized { theta, theta_c, .. } => {
            PotentialSpec::logarithmic(theta, theta_c)?
        }
        PotentialKind::Regular => PotentialSpec::logarithmic(DEFAULT_THETA, DEFAULT_THETA_C)?,
    };
    let mob = match &base.mobility {
        m @ MobilitySpec::Degenerate { .. } => m.clone(),
        MobilitySpec::Clamped { base, .. } if base.is_degenerate() => (**base).clone(),
        _ => MobilitySpec::degenerate(1)?,
    };
    Ok((log, mob))
}

pub fn run_epsilon_sweep(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let (log, degenerate) = sweep_materials(&plan.base)?;
    let jobs: Vec<(SweepFamily, f64)> =
        plan.epsilons.iter().flat_map(|&e| FAMILIES.iter().map(move |&f| (f, e))).collect();
    let outcomes = parallel_map(plan.workers, &jobs, |&(family, eps)| {
        let mob = degenerate.regularize(eps)?;
        let pot = match family {
            SweepFamily::Regularized => log.regularize(eps)?,
            SweepFamily::Regular => PotentialSpec::regular(),
            SweepFamily::Logarithmic => log,
        };
        let entropy = EntropyFunction::new(&mob, ENTROPY_PANELS)?;
        let setup = SimulationSetup { potential: pot, mobility: mob, ..plan.base.clone() };
        let mut sim = Simulation::new(&setup)?;
        let mut excess = vec![(0.0, positive_part_excess(&sim.state().phi))];
        let mut ent = vec![(0.0, entropy_functional(&sim.state().phi, &entropy))];
        sim.run_with(|s, _| {
            excess.push((s.t, positive_part_excess(&s.phi)));
            ent.push((s.t, entropy_functional(&s.phi, &entropy)));
            Ok(())
        })?;
        let phi_max = sim.ledger().records().iter().fold(0.0_f64, |m, r| m.max(r.phi_max));
        Ok(EpsOutcome {
            run: RunResult { name: format!("{}_eps_{eps}", family.name()), ledger: sim.into_ledger() },
            excess,
            entropy: ent,
            phi_max,
        })
    })?;

    let mut report = ExperimentReport::new(
        ExperimentKind::EpsilonSweep,
        SummaryTable::new(&[
            "family",
            "epsilon",
            "initial_excess",
            "terminal_excess",
            "phi_max",
            "entropy_initial",
            "entropy_max",
            "mass_drift",
        ]),
    );
    let mut overshoot = Vec::new();
    let mut phimax_series = Vec::new();
    for family in FAMILIES {
        let rows: Vec<(&f64, &EpsOutcome)> =
            jobs.iter().zip(&outcomes).filter(|((f, _), _)| *f == family).map(|((_, e), o)| (e, o)).collect();
        let mut terminal = Vec::new();
        let mut ent0_max: f64 = 0.0;
        let mut ent_max: f64 = 0.0;
        let mut start_zero = true;
        for (eps, o) in &rows {
            let e0 = o.excess[0].1;
            let et = o.excess.last().unwrap().1;
            let g0 = o.entropy[0].1;
            let gmax = o.entropy.iter().fold(0.0_f64, |m, p| m.max(p.1));
            ent0_max = ent0_max.max(g0);
            ent_max = ent_max.max(gmax);
            start_zero &= e0 == 0.0;
            terminal.push(et);
            report.summary.push(vec![
                family.name().into(),
                label(**eps),
                num(e0),
                num(et),
                num(o.phi_max),
                num(g0),
                num(gmax),
                num(o.run.ledger.mass_drift()),
            ]);
            report.metric(format!("terminal_excess_{}_{}", family.name(), eps), et);
            report.metric(format!("phi_max_{}_{}", family.name(), eps), o.phi_max);
        }
        let fam = family.name();
        report.check(format!("{fam}_initial_excess_zero"), start_zero, "initial data satisfy |phi| <= 1");
        let weakly = terminal.windows(2).all(|w| w[1] <= w[0]);
        if family != SweepFamily::Logarithmic {
            report.check(
                format!("{fam}_excess_nonincreasing"),
                weakly,
                format!("terminal excess along the eps list: {terminal:?}"),
            );
        }
        report.check(
            format!("{fam}_entropy_bounded"),
            ent_max <= 2.0 * ent0_max,
            format!("max entropy {ent_max:e} vs initial {ent0_max:e}"),
        );
        if family == SweepFamily::Logarithmic {
            let worst = rows.iter().fold(0.0_f64, |m, (_, o)| m.max(o.phi_max));
            report.metric("logarithmic_phi_max", worst);
            report.check("logarithmic_phi_below_one", worst < 1.0, format!("max |phi| {worst}"));
        }
        overshoot.push(Series {
            label: fam.into(),
            points: rows.iter().zip(&terminal).map(|((e, _), t)| (**e, *t)).collect(),
        });
        phimax_series.push(Series { label: fam.into(), points: rows.iter().map(|(e, o)| (**e, o.phi_max)).collect() });
    }
    report.curves.push(Curve {
        name: "overshoot".into(),
        panel: Panel { title: "terminal int (|phi| - 1)_+^2 vs eps".into(), x_label: "eps".into(), series: overshoot },
    });
    report.curves.push(Curve {
        name: "phi_max".into(),
        panel: Panel { title: "max |phi| over the run vs eps".into(), x_label: "eps".into(), series: phimax_series },
    });
    let entropy_series = jobs
        .iter()
        .zip(&outcomes)
        .filter(|((f, _), _)| *f == SweepFamily::Regularized)
        .map(|((_, e), o)| Series { label: format!("eps = {e}"), points: o.entropy.clone() })
        .collect();
    report.curves.push(Curve {
        name: "entropy".into(),
        panel: Panel { title: "entropy functional (regularized family)".into(), x_label: "t".into(), series: entropy_series },
    });
    report.runs.extend(outcomes.into_iter().map(|o| o.run));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SolverParams;

    fn base(n: usize, t_final: f64) -> SimulationSetup {
        SimulationSetup::new(
            Grid::new(2, n).unwrap(),
            SolverParams { dt: 1e-4, t_final, ..SolverParams::default() },
            PotentialSpec::regular(),
            MobilitySpec::constant(1.0).unwrap(),
        )
    }

    #[test]
    fn kinds_parse() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::parse(k.name()).unwrap(), k);
        }
        assert!(ExperimentKind::parse("nope").is_err());
    }

    #[test]
    fn empty_lists_are_rejected_before_running() {
        for k in ExperimentKind::ALL {
            let plan = ExperimentPlan::new(k, base(16, 1e-3));
            assert!(matches!(run_experiment(&plan), Err(Error::Precondition(_))), "{k:?}");
        }
        let mut p = ExperimentPlan::new(ExperimentKind::EpsilonSweep, base(16, 1e-3));
        p.epsilons = vec![0.05, 0.1, 0.2];
        assert!(p.validate().is_err());
    }

    #[test]
    fn linear_factor_is_below_one_for_stable_modes() {
        let pi = std::f64::consts::PI;
        let g = linear_mode_factor(1e-4, 2.0 * pi * pi, -4.0, 4.0);
        assert!(g < 1.0 && g > 0.9);
    }

    #[test]
    fn r_sweep_small() {
        let mut plan = ExperimentPlan::new(ExperimentKind::RSweep, base(16, 2e-3));
        plan.base.init.velocity = crate::init::VelocityInit::Vortex;
        plan.r_values = vec![1.0, 3.0];
        let rep = run_r_sweep(&plan).unwrap();
        assert_eq!(rep.runs.len(), 2);
        assert!(rep.all_passed(), "{:?}", rep.checks);
        assert_eq!(rep.get_metric("linear_drag_gap"), Some(0.0));
    }

    #[test]
    fn continuous_dependence_control_is_exact() {
        let mut plan = ExperimentPlan::new(ExperimentKind::ContinuousDependence, base(16, 2e-3));
        plan.deltas = vec![1e-2, 5e-3, 2.5e-3];
        let rep = run_continuous_dependence(&plan).unwrap();
        assert_eq!(rep.get_metric("control_max_distance"), Some(0.0));
        assert!(rep.all_passed(), "{:?}", rep.checks);
    }
}
