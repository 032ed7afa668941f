//! Flat `section.key = value` run configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Omitted keys take
//! the defaults listed in [`RunConfig::default`], so an empty file is a
//! complete configuration. [`RunConfig::serialize`] writes every key in a
//! fixed order and reparses to the same value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use chns_core::grid::{Grid, MAX_CELLS_3D, MIN_CELLS};
use chns_core::init::{vortex_pair, InitSpec, PhiProfile, VelocityInit};
use chns_core::materials::{MobilitySpec, PotentialSpec, DEFAULT_EPSILON_0, DEFAULT_THETA, DEFAULT_THETA_C};
use chns_core::solver::{DampingModel, ForcingSpec, SolverParams};
use chns_core::SimulationSetup;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn syntax(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: None, message: message.into() }
    }

    fn key(key: &str, line: Option<usize>, message: impl Into<String>) -> Self {
        Self { line, key: Some(key.to_string()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "{k}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// One `key = value` line, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits text into entries without interpreting keys. Duplicate keys are a
/// syntax error.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::syntax(line, format!("expected `section.key = value`, found {content:?}")));
        };
        let key = k.trim();
        let value = v.trim();
        let valid = key.split('.').count() == 2
            && key.split('.').all(|p| !p.is_empty())
            && key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.');
        if !valid {
            return Err(ConfigError::syntax(line, format!("malformed key {key:?}; expected `section.key`")));
        }
        if value.is_empty() {
            return Err(ConfigError::syntax(line, format!("missing value for {key}")));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(ConfigError::syntax(line, format!("duplicate key {key} (first set on line {})", prev.line)));
        }
        out.push(Entry { key: key.to_string(), value: value.to_string(), line });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialChoice {
    Regular,
    Logarithmic,
    Regularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityChoice {
    Constant,
    /// Degenerate `(1 - s^2)^n` clamped at `|s| = 1 - mobility.epsilon`.
    Regularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingChoice {
    Zero,
    /// `forcing.amplitude` times the unit vortex pair.
    Steady,
    /// `forcing.amplitude cos(forcing.omega t)` times the unit vortex pair.
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub nu: f64,
    pub beta: f64,
    pub r: f64,
    pub damping: DampingModel,
    pub potential: PotentialChoice,
    pub theta: f64,
    pub theta_c: f64,
    pub potential_epsilon: f64,
    /// `None` uses the smallest valid convexity constant.
    pub c0: Option<f64>,
    pub mobility: MobilityChoice,
    pub mobility_value: f64,
    pub mobility_n: u32,
    pub mobility_epsilon: f64,
    pub forcing: ForcingChoice,
    pub forcing_amplitude: f64,
    pub forcing_omega: f64,
    pub init: InitSpec,
    pub output_dir: PathBuf,
    pub every_k_steps: usize,
    pub poisson_tol: f64,
    pub ch_tol: f64,
    pub max_inner_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = SolverParams::default();
        Self {
            dim: 2,
            n: 64,
            dt: p.dt,
            t_final: p.t_final,
            nu: p.nu,
            beta: p.beta,
            r: p.r,
            damping: p.damping,
            potential: PotentialChoice::Regular,
            theta: DEFAULT_THETA,
            theta_c: DEFAULT_THETA_C,
            potential_epsilon: 0.1,
            c0: None,
            mobility: MobilityChoice::Constant,
            mobility_value: 1.0,
            mobility_n: 1,
            mobility_epsilon: 0.1,
            forcing: ForcingChoice::Zero,
            forcing_amplitude: 0.0,
            forcing_omega: 0.0,
            init: InitSpec::default(),
            output_dir: PathBuf::from("out"),
            every_k_steps: 1,
            poisson_tol: p.poisson_tol,
            ch_tol: p.ch_tol,
            max_inner_iters: p.max_inner_iters,
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: [&str; 31] = [
    "grid.dim",
    "grid.n",
    "time.dt",
    "time.t_final",
    "physics.nu",
    "physics.beta",
    "physics.r",
    "physics.damping",
    "potential.kind",
    "potential.theta",
    "potential.theta_c",
    "potential.epsilon",
    "potential.c0",
    "mobility.kind",
    "mobility.value",
    "mobility.n",
    "mobility.epsilon",
    "forcing.kind",
    "forcing.amplitude",
    "forcing.omega",
    "init.phi_mean",
    "init.noise_amp",
    "init.seed",
    "init.profile",
    "init.velocity",
    "init.velocity_amp",
    "output.dir",
    "output.every_k_steps",
    "solver.poisson_tol",
    "solver.ch_tol",
    "solver.max_inner_iters",
];

fn float(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got {v:?}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, got {v:?}"))
    }
}

fn int<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn choice<T: Copy>(v: &str, options: &[(&str, T)]) -> Result<T, String> {
    options.iter().find(|(n, _)| *n == v).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        format!("expected one of {}, got {v:?}", names.join(" | "))
    })
}

const POTENTIALS: [(&str, PotentialChoice); 3] = [
    ("regular", PotentialChoice::Regular),
    ("logarithmic", PotentialChoice::Logarithmic),
    ("regularized", PotentialChoice::Regularized),
];
const MOBILITIES: [(&str, MobilityChoice); 2] =
    [("constant", MobilityChoice::Constant), ("regularized", MobilityChoice::Regularized)];
const FORCINGS: [(&str, ForcingChoice); 3] =
    [("zero", ForcingChoice::Zero), ("steady", ForcingChoice::Steady), ("periodic", ForcingChoice::Periodic)];
const DAMPINGS: [(&str, DampingModel); 3] = [
    ("forchheimer", DampingModel::Forchheimer),
    ("linear", DampingModel::LinearDrag),
    ("off", DampingModel::Off),
];
const PROFILES: [(&str, PhiProfile); 2] = [("noise", PhiProfile::Noise), ("smooth", PhiProfile::Smooth)];
const VELOCITIES: [(&str, VelocityInit); 2] = [("zero", VelocityInit::Zero), ("vortex", VelocityInit::Vortex)];

fn name_of<T: Copy + PartialEq>(options: &[(&'static str, T)], v: T) -> &'static str {
    options.iter().find(|(_, t)| *t == v).map(|(n, _)| *n).expect("every variant is listed")
}

impl RunConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "grid.dim" => self.dim = int(v)?,
            "grid.n" => self.n = int(v)?,
            "time.dt" => self.dt = float(v)?,
            "time.t_final" => self.t_final = float(v)?,
            "physics.nu" => self.nu = float(v)?,
            "physics.beta" => self.beta = float(v)?,
            "physics.r" => self.r = float(v)?,
            "physics.damping" => self.damping = choice(v, &DAMPINGS)?,
            "potential.kind" => self.potential = choice(v, &POTENTIALS)?,
            "potential.theta" => self.theta = float(v)?,
            "potential.theta_c" => self.theta_c = float(v)?,
            "potential.epsilon" => self.potential_epsilon = float(v)?,
            "potential.c0" => self.c0 = if v == "auto" { None } else { Some(float(v)?) },
            "mobility.kind" => {
                if v == "degenerate" {
                    return Err("a degenerate mobility cannot be stepped directly; use `regularized` \
                                with mobility.epsilon"
                        .into());
                }
                self.mobility = choice(v, &MOBILITIES)?
            }
            "mobility.value" => self.mobility_value = float(v)?,
            "mobility.n" => self.mobility_n = int(v)?,
            "mobility.epsilon" => self.mobility_epsilon = float(v)?,
            "forcing.kind" => self.forcing = choice(v, &FORCINGS)?,
            "forcing.amplitude" => self.forcing_amplitude = float(v)?,
            "forcing.omega" => self.forcing_omega = float(v)?,
            "init.phi_mean" => self.init.phi_mean = float(v)?,
            "init.noise_amp" => self.init.noise_amp = float(v)?,
            "init.seed" => self.init.seed = int(v)?,
            "init.profile" => self.init.profile = choice(v, &PROFILES)?,
            "init.velocity" => self.init.velocity = choice(v, &VELOCITIES)?,
            "init.velocity_amp" => self.init.velocity_amp = float(v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.every_k_steps" => self.every_k_steps = int(v)?,
            "solver.poisson_tol" => self.poisson_tol = float(v)?,
            "solver.ch_tol" => self.ch_tol = float(v)?,
            "solver.max_inner_iters" => self.max_inner_iters = int(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "grid.dim" => self.dim.to_string(),
            "grid.n" => self.n.to_string(),
            "time.dt" => format!("{:?}", self.dt),
            "time.t_final" => format!("{:?}", self.t_final),
            "physics.nu" => format!("{:?}", self.nu),
            "physics.beta" => format!("{:?}", self.beta),
            "physics.r" => format!("{:?}", self.r),
            "physics.damping" => name_of(&DAMPINGS, self.damping).into(),
            "potential.kind" => name_of(&POTENTIALS, self.potential).into(),
            "potential.theta" => format!("{:?}", self.theta),
            "potential.theta_c" => format!("{:?}", self.theta_c),
            "potential.epsilon" => format!("{:?}", self.potential_epsilon),
            "potential.c0" => self.c0.map_or("auto".into(), |c| format!("{c:?}")),
            "mobility.kind" => name_of(&MOBILITIES, self.mobility).into(),
            "mobility.value" => format!("{:?}", self.mobility_value),
            "mobility.n" => self.mobility_n.to_string(),
            "mobility.epsilon" => format!("{:?}", self.mobility_epsilon),
            "forcing.kind" => name_of(&FORCINGS, self.forcing).into(),
            "forcing.amplitude" => format!("{:?}", self.forcing_amplitude),
            "forcing.omega" => format!("{:?}", self.forcing_omega),
            "init.phi_mean" => format!("{:?}", self.init.phi_mean),
            "init.noise_amp" => format!("{:?}", self.init.noise_amp),
            "init.seed" => self.init.seed.to_string(),
            "init.profile" => name_of(&PROFILES, self.init.profile).into(),
            "init.velocity" => name_of(&VELOCITIES, self.init.velocity).into(),
            "init.velocity_amp" => format!("{:?}", self.init.velocity_amp),
            "output.dir" => self.output_dir.display().to_string(),
            "output.every_k_steps" => self.every_k_steps.to_string(),
            "solver.poisson_tol" => format!("{:?}", self.poisson_tol),
            "solver.ch_tol" => format!("{:?}", self.ch_tol),
            "solver.max_inner_iters" => self.max_inner_iters.to_string(),
            _ => unreachable!("serialize only visits KEYS"),
        }
    }

    /// Applies entries on top of `self` and validates the result.
    pub fn apply(mut self, entries: &[Entry]) -> Result<Self, ConfigError> {
        let mut lines = BTreeMap::new();
        for e in entries {
            if !KEYS.contains(&e.key.as_str()) {
                return Err(ConfigError::key(&e.key, Some(e.line), "unknown key"));
            }
            self.set(&e.key, &e.value).map_err(|m| ConfigError::key(&e.key, Some(e.line), m))?;
            lines.insert(e.key.clone(), e.line);
        }
        self.validate().map_err(|mut err| {
            if let Some(k) = &err.key {
                err.line = lines.get(k).copied();
            }
            err
        })?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: String| Err(ConfigError::key(key, None, msg));
        let positive = |key: &str, v: f64| if v > 0.0 { Ok(()) } else { bad(key, format!("must be > 0, got {v}")) };
        if self.dim != 2 && self.dim != 3 {
            return bad("grid.dim", format!("must be 2 or 3, got {}", self.dim));
        }
        if self.n < MIN_CELLS {
            return bad("grid.n", format!("must be >= {MIN_CELLS}, got {}", self.n));
        }
        if self.dim == 3 && self.n > MAX_CELLS_3D {
            return bad("grid.n", format!("must be <= {MAX_CELLS_3D} in 3D, got {}", self.n));
        }
        positive("time.dt", self.dt)?;
        positive("time.t_final", self.t_final)?;
        positive("physics.nu", self.nu)?;
        positive("physics.beta", self.beta)?;
        if self.r < 1.0 {
            return bad("physics.r", format!("must satisfy r >= 1, got {}", self.r));
        }
        if self.potential != PotentialChoice::Regular && !(self.theta > 0.0 && self.theta < self.theta_c) {
            let key = if self.theta > 0.0 { "potential.theta_c" } else { "potential.theta" };
            return bad(
                key,
                format!("must satisfy 0 < theta < theta_c, got theta = {}, theta_c = {}", self.theta, self.theta_c),
            );
        }
        if self.potential == PotentialChoice::Regularized
            && !(self.potential_epsilon > 0.0 && self.potential_epsilon <= DEFAULT_EPSILON_0)
        {
            return bad(
                "potential.epsilon",
                format!("must lie in (0, {DEFAULT_EPSILON_0}], got {}", self.potential_epsilon),
            );
        }
        if let Some(c0) = self.c0 {
            let min = self.base_potential().intrinsic_c0();
            if c0 < min {
                return bad("potential.c0", format!("must be >= {min} (the convexity defect of F), got {c0}"));
            }
        }
        match self.mobility {
            MobilityChoice::Constant => positive("mobility.value", self.mobility_value)?,
            MobilityChoice::Regularized => {
                if self.mobility_n < 1 {
                    return bad("mobility.n", "must be >= 1".into());
                }
                if !(self.mobility_epsilon > 0.0 && self.mobility_epsilon <= DEFAULT_EPSILON_0) {
                    return bad(
                        "mobility.epsilon",
                        format!("must lie in (0, {DEFAULT_EPSILON_0}], got {}", self.mobility_epsilon),
                    );
                }
            }
        }
        if self.forcing_omega < 0.0 {
            return bad("forcing.omega", format!("must be >= 0, got {}", self.forcing_omega));
        }
        if self.init.noise_amp < 0.0 {
            return bad("init.noise_amp", format!("must be >= 0, got {}", self.init.noise_amp));
        }
        if self.init.velocity_amp < 0.0 {
            return bad("init.velocity_amp", format!("must be >= 0, got {}", self.init.velocity_amp));
        }
        if self.potential == PotentialChoice::Logarithmic && self.init.phi_mean.abs() + self.init.noise_amp >= 1.0 {
            return bad(
                "init.noise_amp",
                "|init.phi_mean| + init.noise_amp must be < 1 for the logarithmic potential".into(),
            );
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output.dir", "must not be empty".into());
        }
        if self.every_k_steps == 0 {
            return bad("output.every_k_steps", "must be >= 1".into());
        }
        positive("solver.poisson_tol", self.poisson_tol)?;
        positive("solver.ch_tol", self.ch_tol)?;
        if self.max_inner_iters == 0 {
            return bad("solver.max_inner_iters", "must be >= 1".into());
        }
        Ok(())
    }

    /// Canonical text: every key, fixed order, one per line.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            s.push_str(key);
            s.push_str(" = ");
            s.push_str(&self.get(key));
            s.push('\n');
        }
        s
    }

    fn base_potential(&self) -> PotentialSpec {
        match self.potential {
            PotentialChoice::Regular => PotentialSpec::regular(),
            _ => PotentialSpec::logarithmic(self.theta, self.theta_c).expect("validated temperatures"),
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.dim, self.n).expect("validated grid")
    }

    pub fn potential_spec(&self) -> chns_core::Result<PotentialSpec> {
        let base = self.base_potential();
        let p = match self.potential {
            PotentialChoice::Regularized => base.regularize(self.potential_epsilon)?,
            _ => base,
        };
        match self.c0 {
            Some(c0) => p.with_c0(c0),
            None => Ok(p),
        }
    }

    pub fn mobility_spec(&self) -> chns_core::Result<MobilitySpec> {
        match self.mobility {
            MobilityChoice::Constant => MobilitySpec::constant(self.mobility_value),
            MobilityChoice::Regularized => MobilitySpec::degenerate(self.mobility_n)?.regularize(self.mobility_epsilon),
        }
    }

    pub fn forcing_spec(&self) -> ForcingSpec {
        let shape = || vortex_pair(self.grid(), 1.0);
        match self.forcing {
            ForcingChoice::Zero => ForcingSpec::Zero,
            ForcingChoice::Steady => {
                let mut f = shape();
                f.scale(self.forcing_amplitude);
                ForcingSpec::Steady(f)
            }
            ForcingChoice::Periodic => {
                ForcingSpec::Periodic { shape: shape(), amplitude: self.forcing_amplitude, omega: self.forcing_omega }
            }
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            nu: self.nu,
            beta: self.beta,
            r: self.r,
            dt: self.dt,
            t_final: self.t_final,
            poisson_tol: self.poisson_tol,
            ch_tol: self.ch_tol,
            max_inner_iters: self.max_inner_iters,
            damping: self.damping,
            forcing: self.forcing_spec(),
        }
    }

    pub fn setup(&self) -> chns_core::Result<SimulationSetup> {
        Ok(SimulationSetup::new(self.grid(), self.solver_params(), self.potential_spec()?, self.mobility_spec()?)
            .with_init(self.init))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::default().apply(&parse_entries(text)?)
}
