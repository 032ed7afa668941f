//! A single trajectory: stepper, current state and its diagnostics ledger.

use crate::diagnostics::{self, AuxTerms, DiagnosticsRecord, LedgerMeta, TrajectoryLedger};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::init::{initial_phi, initial_velocity, InitSpec};
use crate::materials::{MobilitySpec, PotentialSpec};
use crate::solver::{damping_dissipation, damping_weights, SolverParams, State, Stepper};

#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub grid: Grid,
    pub params: SolverParams,
    pub potential: PotentialSpec,
    pub mobility: MobilitySpec,
    pub init: InitSpec,
}

impl SimulationSetup {
    pub fn new(grid: Grid, params: SolverParams, potential: PotentialSpec, mobility: MobilitySpec) -> Self {
        Self { grid, params, potential, mobility, init: InitSpec::default() }
    }

    pub fn with_init(mut self, init: InitSpec) -> Self {
        self.init = init;
        self
    }

    pub fn initial_fields(&self) -> (VectorField, ScalarField) {
        (initial_velocity(self.grid, &self.init), initial_phi(self.grid, &self.init))
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    stepper: Stepper,
    state: State,
    ledger: TrajectoryLedger,
    steps: usize,
}

impl Simulation {
    pub fn new(setup: &SimulationSetup) -> Result<Self> {
        let (u, phi) = setup.initial_fields();
        Self::from_fields(setup, u, phi)
    }

    /// Starts from explicit initial fields instead of `setup.init`.
    pub fn from_fields(setup: &SimulationSetup, u: VectorField, phi: ScalarField) -> Result<Self> {
        let stepper = Stepper::new(setup.grid, setup.params.clone(), setup.potential, setup.mobility.clone())?;
        if u.grid() != setup.grid || phi.grid() != setup.grid {
            return Err(Error::Parameter("initial fields do not live on the configured grid".into()));
        }
        let state = State::new(u, phi, &setup.potential)?;
        let meta = LedgerMeta {
            dim: setup.grid.dim(),
            n: setup.grid.n(),
            nu: setup.params.nu,
            beta: setup.params.beta,
            r: setup.params.r,
            potential: setup.potential.label(),
            mobility: setup.mobility.label(),
        };
        let mut ledger = TrajectoryLedger::new(setup.params.dt, meta)?;
        let (rec, aux) = state_record(&stepper, &state)?;
        ledger.push(rec, aux)?;
        Ok(Self { stepper, state, ledger, steps: 0 })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn ledger(&self) -> &TrajectoryLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> TrajectoryLedger {
        self.ledger
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn steps_total(&self) -> usize {
        self.stepper.params().steps()
    }

    pub fn is_finished(&self) -> bool {
        self.steps >= self.steps_total()
    }

    pub fn initial_record(&self) -> &DiagnosticsRecord {
        &self.ledger.records()[0]
    }

    pub fn advance(&mut self) -> Result<&DiagnosticsRecord> {
        let out = self.stepper.step_coupled(&self.state)?;
        self.ledger.push(out.record, out.aux)?;
        self.state = out.state;
        self.steps += 1;
        Ok(self.ledger.last().expect("just pushed"))
    }

    /// Advances to `t_final`, calling `observe` after every accepted step.
    pub fn run_with(&mut self, mut observe: impl FnMut(&State, &DiagnosticsRecord) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            self.advance()?;
            observe(&self.state, self.ledger.last().expect("non-empty"))?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_with(|_, _| Ok(()))
    }
}

/// Diagnostics of a state that did not come out of a step: the damping and
/// mobility rates are evaluated at the state itself.
pub fn state_record(stepper: &Stepper, state: &State) -> Result<(DiagnosticsRecord, AuxTerms)> {
    let p = stepper.params();
    let w = damping_weights(&state.u, p.damping, p.beta, p.r);
    let m = stepper.face_mobility(&state.phi);
    let forcing = p.forcing.eval(state.t);
    let rec = diagnostics::step_record(
        state,
        stepper.potential(),
        p.nu,
        damping_dissipation(&w, &state.u),
        diagnostics::mobility_dissipation(&m, &state.mu),
        forcing.as_ref(),
    )?;
    let aux = diagnostics::aux_terms(state, stepper.potential(), stepper.mobility())?;
    Ok((rec, aux))
}
