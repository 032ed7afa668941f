use chns_core::diagnostics::{
    degenerate_energy_residual, energy_balance_residual, entropy_functional, total_energy,
};
use chns_core::grid::{Grid, ScalarField, VectorField};
use chns_core::init::{unit_solenoidal, vortex_pair, InitSpec, PhiProfile, VelocityInit};
use chns_core::materials::{EntropyFunction, MobilitySpec, PotentialSpec};
use chns_core::simulation::{Simulation, SimulationSetup};
use chns_core::solver::{ForcingSpec, SolverParams, State, Stepper};
use chns_core::Error;

#[test]
fn one_step_never_raises_kinetic_energy() {
    let g = Grid::new(2, 16).unwrap();
    let pot = PotentialSpec::regular();
    for r in [1.0, 2.0, 3.0, 4.0] {
        let params = SolverParams { r, dt: 1e-3, ..SolverParams::default() };
        let stepper = Stepper::new(g, params, pot, MobilitySpec::constant(1.0).unwrap()).unwrap();
        for seed in 0..25u64 {
            let mut u = unit_solenoidal(g, 1000 * r as u64 + seed, 1e-12).unwrap();
            u.scale(0.2 * (1 + seed % 5) as f64 / u.max_abs());
            let state = State::new(u.clone(), ScalarField::zeros(g), &pot).unwrap();
            let out = stepper.step_coupled(&state).unwrap();
            let before = 0.5 * u.dot(&u);
            let after = 0.5 * out.state.u.dot(&out.state.u);
            assert!(after <= before * (1.0 + 1e-12), "r = {r}, seed {seed}: {before} -> {after}");
        }
    }
}

#[test]
fn degenerate_run_keeps_entropy_and_bounds() {
    let g = Grid::new(2, 32).unwrap();
    let log = PotentialSpec::logarithmic(0.15, 0.3).unwrap();
    let mob = MobilitySpec::degenerate(1).unwrap().regularize(0.1).unwrap();
    let params = SolverParams { dt: 1e-4, t_final: 0.01, ..SolverParams::default() };
    let setup = SimulationSetup::new(g, params, log, mob.clone()).with_init(InitSpec {
        noise_amp: 0.5,
        velocity: VelocityInit::Vortex,
        ..InitSpec::default()
    });
    let entropy = EntropyFunction::new(&mob, 256).unwrap();
    let mut sim = Simulation::new(&setup).unwrap();
    let g0 = entropy_functional(&sim.state().phi, &entropy);
    let mut worst: f64 = 0.0;
    sim.run_with(|s, rec| {
        worst = worst.max(entropy_functional(&s.phi, &entropy));
        assert!(rec.phi_max < 1.0);
        Ok(())
    })
    .unwrap();
    assert!(worst <= 2.0 * g0, "{worst} vs {g0}");
    let l = sim.ledger();
    assert!(l.mass_drift() <= 1e-12);
    assert!(l.max_energy_increase() <= 1e-12 * l.records()[0].energy());
    let res = degenerate_energy_residual(l, &log, &mob).unwrap();
    assert!(res.is_finite() && res.abs() < 0.5, "{res}");
}

#[test]
fn degenerate_residual_needs_matching_materials() {
    let g = Grid::new(2, 16).unwrap();
    let params = SolverParams { t_final: 1e-3, ..SolverParams::default() };
    let setup = SimulationSetup::new(g, params, PotentialSpec::regular(), MobilitySpec::constant(1.0).unwrap());
    let mut sim = Simulation::new(&setup).unwrap();
    sim.run().unwrap();
    let r = degenerate_energy_residual(sim.ledger(), &PotentialSpec::regular(), &MobilitySpec::constant(1.0).unwrap());
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn three_dimensional_run_dissipates() {
    let g = Grid::new(3, 12).unwrap();
    let params = SolverParams { dt: 1e-4, t_final: 2e-3, ..SolverParams::default() };
    let init = InitSpec { velocity: VelocityInit::Vortex, profile: PhiProfile::Smooth, ..InitSpec::default() };
    let setup = SimulationSetup::new(g, params, PotentialSpec::regular(), MobilitySpec::constant(1.0).unwrap())
        .with_init(init);
    let mut sim = Simulation::new(&setup).unwrap();
    sim.run().unwrap();
    let l = sim.ledger();
    assert!(l.mass_drift() <= 1e-12);
    assert!(l.max_energy_increase() <= 1e-12 * l.records()[0].energy());
    let res = energy_balance_residual(l).unwrap();
    assert!(res < 0.05, "{res}");
}

#[test]
fn forced_run_balances_work() {
    let g = Grid::new(2, 32).unwrap();
    let shape = vortex_pair(g, 1.0);
    let forcing = ForcingSpec::Periodic { shape, amplitude: 5.0, omega: 20.0 };
    let params = SolverParams { dt: 5e-5, t_final: 0.02, forcing, ..SolverParams::default() };
    let setup = SimulationSetup::new(g, params, PotentialSpec::regular(), MobilitySpec::constant(1.0).unwrap())
        .with_init(InitSpec { profile: PhiProfile::Smooth, ..InitSpec::default() });
    let mut sim = Simulation::new(&setup).unwrap();
    sim.run().unwrap();
    let l = sim.ledger();
    assert!(l.records().iter().any(|r| r.work.abs() > 0.0));
    assert!(l.mass_drift() <= 1e-12);
    assert!(energy_balance_residual(l).unwrap() < 0.05);
}

#[test]
fn runs_are_deterministic() {
    let g = Grid::new(2, 16).unwrap();
    let params = SolverParams { t_final: 2e-3, ..SolverParams::default() };
    let setup = SimulationSetup::new(g, params, PotentialSpec::regular(), MobilitySpec::constant(1.0).unwrap())
        .with_init(InitSpec { velocity: VelocityInit::Vortex, ..InitSpec::default() });
    let a = { let mut s = Simulation::new(&setup).unwrap(); s.run().unwrap(); s.into_ledger().to_csv() };
    let b = { let mut s = Simulation::new(&setup).unwrap(); s.run().unwrap(); s.into_ledger().to_csv() };
    assert_eq!(a, b);
}

#[test]
fn cfl_violation_is_reported() {
    let g = Grid::new(2, 16).unwrap();
    let params = SolverParams { dt: 1.0, t_final: 1.0, ..SolverParams::default() };
    let setup = SimulationSetup::new(g, params, PotentialSpec::regular(), MobilitySpec::constant(1.0).unwrap());
    let mut sim = Simulation::from_fields(&setup, vortex_pair(g, 1.0), ScalarField::zeros(g)).unwrap();
    assert!(matches!(sim.advance(), Err(Error::Stability { .. })));
}

#[test]
fn energy_of_zero_velocity_equilibrium_is_bulk_only() {
    let g = Grid::new(2, 8).unwrap();
    let pot = PotentialSpec::regular();
    let s = State::new(VectorField::zeros(g), ScalarField::constant(g, 1.0), &pot).unwrap();
    assert_eq!(total_energy(&s, &pot).unwrap(), 0.0);
}
