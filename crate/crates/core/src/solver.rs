//! Semi-implicit time stepping for the coupled system
//!
//! ```text
//! phi_t + u . grad phi = div(m(phi) grad mu),       mu = -Lap phi + F'(phi)
//! u_t - nu Lap u + (u . grad) u + beta |u|^(r-1) u + grad pi = mu grad phi + U
//! div u = 0,   no-slip walls,   zero normal derivative of phi and mu
//! ```
//!
//! One step runs the Cahn-Hilliard half first and hands its chemical
//! potential to the momentum half:
//!
//! 1. Cahn-Hilliard, convex splitting: `phi^{n+1}` solves
//!    `phi^{n+1} - phi^n + dt div(u^n phi^n) = dt div(M grad mu^{n+1/2})` with
//!    `mu^{n+1/2} = -Lap phi^{n+1} + Fc'(phi^{n+1}) + Fe'(phi^n)` and face
//!    mobility `M` averaged from `m(phi^n)`. The nonlinear system is solved by
//!    damped Newton; each update has zero mean, so mass is conserved to
//!    roundoff.
//! 2. Momentum: implicit viscosity, skew-symmetric convection linearized
//!    about `u^n`, damping linearized as `beta |u^n|^(r-1) u^{n+1}`, explicit
//!    Korteweg force `mu^{n+1/2} grad phi^n`, then a Helmholtz projection.

use crate::diagnostics::{self, AuxTerms, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{
    cell_speed, cell_velocity, for_each, gradient_cc, laplacian_into, raw_max_abs, strides, vector_laplacian_component,
    weighted_laplacian_into, Grid, ScalarField, VectorField,
};
use crate::krylov::{bicgstab, SolveReport};
use crate::materials::{MobilitySpec, PotentialSpec};
use crate::operators::{advect_scalar, laplacian_neumann, Convection, PoissonSolver};

/// CFL safety factor: steps with `dt > h / (SAFETY max|u|)` are rejected.
pub const CFL_SAFETY: f64 = 4.0;
pub const CRITICAL_EXPONENT: f64 = 3.0;
const NEWTON_LINEAR_TOL: f64 = 1e-9;
const MOMENTUM_TOL: f64 = 1e-13;
const LINEAR_MAX_ITERS: usize = 500;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DampingModel {
    /// `beta |u|^(r-1) u`, linearized about the previous step.
    Forchheimer,
    /// `beta u` regardless of `r`.
    LinearDrag,
    /// No damping term.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingSpec {
    Zero,
    Steady(VectorField),
    /// `amplitude cos(omega t) shape`.
    Periodic { shape: VectorField, amplitude: f64, omega: f64 },
}

impl ForcingSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingSpec::Zero)
    }

    pub fn eval(&self, t: f64) -> Option<VectorField> {
        match self {
            ForcingSpec::Zero => None,
            ForcingSpec::Steady(f) => Some(f.clone()),
            ForcingSpec::Periodic { shape, amplitude, omega } => {
                let mut f = shape.clone();
                f.scale(amplitude * (omega * t).cos());
                Some(f)
            }
        }
    }

    fn grid(&self) -> Option<Grid> {
        match self {
            ForcingSpec::Zero => None,
            ForcingSpec::Steady(f) | ForcingSpec::Periodic { shape: f, .. } => Some(f.grid()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub nu: f64,
    pub beta: f64,
    pub r: f64,
    pub dt: f64,
    pub t_final: f64,
    pub poisson_tol: f64,
    pub ch_tol: f64,
    pub max_inner_iters: usize,
    pub damping: DampingModel,
    pub forcing: ForcingSpec,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            nu: 1.0,
            beta: 1.0,
            r: 3.0,
            dt: 1e-4,
            t_final: 0.2,
            poisson_tol: 1e-10,
            ch_tol: 1e-10,
            max_inner_iters: 50,
            damping: DampingModel::Forchheimer,
            forcing: ForcingSpec::Zero,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("nu", self.nu)?;
        pos("beta", self.beta)?;
        pos("dt", self.dt)?;
        pos("poisson_tol", self.poisson_tol)?;
        pos("ch_tol", self.ch_tol)?;
        if !(self.r.is_finite() && self.r >= 1.0) {
            return Err(Error::Parameter(format!("r must satisfy r >= 1, got {}", self.r)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::Parameter(format!("t_final must be non-negative, got {}", self.t_final)));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::Parameter("max_inner_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_critical(&self) -> bool {
        self.r == CRITICAL_EXPONENT
    }

    /// Number of steps needed to reach `t_final`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: VectorField,
    pub phi: ScalarField,
    /// `chemical_potential(phi)`.
    pub mu: ScalarField,
    pub pressure: ScalarField,
}

impl State {
    pub fn new(u: VectorField, phi: ScalarField, pot: &PotentialSpec) -> Result<Self> {
        if u.grid() != phi.grid() {
            return Err(Error::Parameter("velocity and phase field live on different grids".into()));
        }
        if !u.is_finite() || !phi.is_finite() {
            return Err(Error::Parameter("initial fields must be finite".into()));
        }
        let mu = chemical_potential(&phi, pot)?;
        let pressure = ScalarField::zeros(phi.grid());
        Ok(Self { t: 0.0, u, phi, mu, pressure })
    }

    pub fn grid(&self) -> Grid {
        self.phi.grid()
    }
}

fn check_domain(phi: &ScalarField, pot: &PotentialSpec) -> Result<()> {
    let count = phi.values().iter().filter(|&&s| !pot.admits(s)).count();
    if count > 0 {
        Err(Error::StateDomain { count })
    } else {
        Ok(())
    }
}

/// `mu = -Lap phi + F'(phi)`.
pub fn chemical_potential(phi: &ScalarField, pot: &PotentialSpec) -> Result<ScalarField> {
    check_domain(phi, pot)?;
    let mut mu = laplacian_neumann(phi);
    for (m, &s) in mu.values_mut().iter_mut().zip(phi.values()) {
        *m = pot.deriv(s, 1)? - *m;
    }
    Ok(mu)
}

/// `<|v1|^(r-1) v1 - |v2|^(r-1) v2, v1 - v2>` with both fields interpolated
/// to cell centers, where the pointwise monotonicity makes every term
/// non-negative.
pub fn damping_pairing(u1: &VectorField, u2: &VectorField, r: f64) -> f64 {
    let a = cell_velocity(u1);
    let b = cell_velocity(u2);
    let grid = u1.grid();
    let d = grid.dim();
    let mut acc = 0.0;
    for idx in 0..grid.num_cells() {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for k in 0..d {
            s1 += a[k].values()[idx].powi(2);
            s2 += b[k].values()[idx].powi(2);
        }
        let w1 = s1.sqrt().powf(r - 1.0);
        let w2 = s2.sqrt().powf(r - 1.0);
        for k in 0..d {
            let x = a[k].values()[idx];
            let y = b[k].values()[idx];
            acc += (w1 * x - w2 * y) * (x - y);
        }
    }
    acc * grid.cell_volume()
}

/// Face weights `w` of the linearized damping term `w u^{n+1}`: for
/// Forchheimer, `beta` times the average of `|u^n|^(r-1)` over the two cells
/// sharing the face.
pub fn damping_weights(u: &VectorField, model: DampingModel, beta: f64, r: f64) -> VectorField {
    let grid = u.grid();
    let mut w = VectorField::zeros(grid);
    match model {
        DampingModel::Off => {}
        DampingModel::LinearDrag => {
            for a in 0..grid.dim() {
                let comp = w.comp_mut(a);
                for_each(grid.face_shape(a), |c, idx| {
                    if grid.is_interior_face(a, c) {
                        comp[idx] = beta;
                    }
                });
            }
        }
        DampingModel::Forchheimer => {
            let speed = cell_speed(u).map(|s| s.powf(r - 1.0));
            let cs = strides(grid.cell_shape());
            for a in 0..grid.dim() {
                let comp = w.comp_mut(a);
                for_each(grid.face_shape(a), |c, idx| {
                    if grid.is_interior_face(a, c) {
                        let right = crate::grid::linear(grid.cell_shape(), c);
                        comp[idx] = beta * 0.5 * (speed.values()[right] + speed.values()[right - cs[a]]);
                    }
                });
            }
        }
    }
    w
}

/// `sum_f w_f u_f^2 h^d`, the discrete damping dissipation.
pub fn damping_dissipation(weights: &VectorField, u: &VectorField) -> f64 {
    let mut acc = 0.0;
    for a in 0..u.grid().dim() {
        for (w, v) in weights.comp(a).iter().zip(u.comp(a)) {
            acc += w * v * v;
        }
    }
    acc * u.grid().cell_volume()
}

/// Result of the Cahn-Hilliard half step.
#[derive(Debug, Clone)]
pub struct ChOutcome {
    pub phi: ScalarField,
    /// `mu^{n+1/2}`, shared with the momentum half.
    pub mu_half: ScalarField,
    /// Face mobility averaged from `m(phi^n)`.
    pub face_mobility: VectorField,
    /// Scaled max-norm residual before each Newton update, plus the final one.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NsOutcome {
    pub u: VectorField,
    pub pressure: ScalarField,
    /// Damping face weights built from `u^n`.
    pub damping_weights: VectorField,
    pub projection: SolveReport,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: State,
    pub record: DiagnosticsRecord,
    pub aux: AuxTerms,
}

/// Advances states for a fixed grid, parameter set and material pair.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    params: SolverParams,
    potential: PotentialSpec,
    mobility: MobilitySpec,
    poisson: PoissonSolver,
}

impl Stepper {
    pub fn new(grid: Grid, params: SolverParams, potential: PotentialSpec, mobility: MobilitySpec) -> Result<Self> {
        params.validate()?;
        if mobility.is_degenerate() {
            return Err(Error::Parameter(
                "a degenerate mobility must be regularized (mobility.epsilon) before time stepping".into(),
            ));
        }
        if let Some(g) = params.forcing.grid() {
            if g != grid {
                return Err(Error::Parameter("forcing field lives on a different grid".into()));
            }
        }
        Ok(Self { grid, params, potential, mobility, poisson: PoissonSolver::new(grid) })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn mobility(&self) -> &MobilitySpec {
        &self.mobility
    }

    pub fn poisson(&self) -> &PoissonSolver {
        &self.poisson
    }

    /// Largest admissible step for velocity `u`.
    pub fn stability_limit(&self, u: &VectorField) -> f64 {
        let umax = u.max_abs();
        if umax == 0.0 {
            f64::INFINITY
        } else {
            self.grid.h() / (CFL_SAFETY * umax)
        }
    }

    pub fn face_mobility(&self, phi: &ScalarField) -> VectorField {
        let m = phi.map(|s| self.mobility.value(s));
        let mut face = crate::grid::face_average(&m);
        face.zero_boundary_normal();
        face
    }

    pub fn step_ch(&self, state: &State) -> Result<ChOutcome> {
        let grid = self.grid;
        let dt = self.params.dt;
        let pot = &self.potential;
        let n_cells = grid.num_cells();
        let phi_n = &state.phi;
        check_domain(phi_n, pot)?;
        let mface = self.face_mobility(phi_n);
        let adv = advect_scalar(&state.u, phi_n);
        let explicit: Vec<f64> = phi_n.values().iter().map(|&s| pot.concave_deriv(s)).collect();
        let phi_n_max = phi_n.max_abs();

        let m_bar = {
            let mut sum = 0.0;
            let mut cnt = 0usize;
            for a in 0..grid.dim() {
                for_each(grid.face_shape(a), |c, idx| {
                    if grid.is_interior_face(a, c) {
                        sum += mface.comp(a)[idx];
                        cnt += 1;
                    }
                });
            }
            sum / cnt as f64
        };

        let mut phi = phi_n.values().to_vec();
        let mut mu = vec![0.0; n_cells];
        let mut flux = vec![0.0; n_cells];
        let mut res = vec![0.0; n_cells];
        let mut history = Vec::new();
        let fail = |reason: String, history: Vec<f64>| Error::Step { t: state.t + dt, reason, residuals: history };

        for iter in 0..=self.params.max_inner_iters {
            // mu = -Lap phi + Fc'(phi) + Fe'(phi^n)
            laplacian_into(grid, &phi, &mut mu);
            for i in 0..n_cells {
                mu[i] = pot.convex_deriv(phi[i])? - mu[i] + explicit[i];
            }
            weighted_laplacian_into(grid, &mface, &mu, &mut flux);
            for i in 0..n_cells {
                res[i] = phi[i] - phi_n.values()[i] + dt * adv.values()[i] - dt * flux[i];
            }
            let scale = 1.0_f64.max(phi_n_max).max(dt * raw_max_abs(&flux));
            let r = raw_max_abs(&res) / scale;
            history.push(r);
            if r <= self.params.ch_tol {
                let phi = ScalarField::from_values(grid, phi)?;
                let mu_half = ScalarField::from_values(grid, mu)?;
                return Ok(ChOutcome { phi, mu_half, face_mobility: mface, residuals: history });
            }
            if iter == self.params.max_inner_iters {
                break;
            }
            if !r.is_finite() {
                return Err(fail("non-finite Cahn-Hilliard residual".into(), history));
            }

            let d2: Vec<f64> = phi.iter().map(|&s| pot.convex_second(s)).collect::<Result<_>>()?;
            let s_bar = d2.iter().sum::<f64>() / n_cells as f64;
            let apply = |x: &[f64], y: &mut [f64]| {
                let mut t = vec![0.0; n_cells];
                laplacian_into(grid, x, &mut t);
                for i in 0..n_cells {
                    t[i] = d2[i] * x[i] - t[i];
                }
                weighted_laplacian_into(grid, &mface, &t, y);
                for i in 0..n_cells {
                    y[i] = x[i] - dt * y[i];
                }
            };
            let spectral = self.poisson.spectral();
            let precond = |r: &[f64], z: &mut [f64]| {
                spectral.apply_symbol(r, z, |lam| 1.0 / (1.0 + dt * m_bar * lam * (lam + s_bar)));
            };
            let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
            let mut delta = vec![0.0; n_cells];
            bicgstab(apply, precond, &rhs, &mut delta, NEWTON_LINEAR_TOL, LINEAR_MAX_ITERS).map_err(|rep| {
                fail(
                    format!(
                        "Newton linear solve stalled after {} iterations (relative residual {:.3e})",
                        rep.iterations, rep.relative_residual
                    ),
                    history.clone(),
                )
            })?;
            let mean = delta.iter().sum::<f64>() / n_cells as f64;
            delta.iter_mut().for_each(|v| *v -= mean);

            let mut lambda = 1.0;
            let mut halvings = 0;
            while phi.iter().zip(&delta).any(|(p, d)| !pot.admits(p + lambda * d)) {
                lambda *= 0.5;
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(fail("Newton update cannot stay inside the potential domain".into(), history));
                }
            }
            for (p, d) in phi.iter_mut().zip(&delta) {
                *p += lambda * d;
            }
        }
        Err(fail(
            format!("Cahn-Hilliard iteration did not converge in {} iterations", self.params.max_inner_iters),
            history,
        ))
    }

    pub fn step_ns(&self, state: &State, mu_half: &ScalarField) -> Result<NsOutcome> {
        let grid = self.grid;
        let p = &self.params;
        let dt = p.dt;
        let inv_dt = 1.0 / dt;
        let n = grid.n();
        let inv_h2 = 1.0 / (grid.h() * grid.h());

        let mut korteweg = crate::grid::face_average(mu_half);
        let grad_phi = gradient_cc(&state.phi);
        for a in 0..grid.dim() {
            for (k, g) in korteweg.comp_mut(a).iter_mut().zip(grad_phi.comp(a)) {
                *k *= g;
            }
        }
        let forcing = p.forcing.eval(state.t + dt);
        let weights = damping_weights(&state.u, p.damping, p.beta, p.r);
        let conv = Convection::new(&state.u);

        let mut tilde = VectorField::zeros(grid);
        for a in 0..grid.dim() {
            let fs = grid.face_shape(a);
            let nf = grid.num_faces(a);
            let w = weights.comp(a);
            let mut rhs = vec![0.0; nf];
            let mut diag = vec![1.0; nf];
            let ua = state.u.comp(a);
            for_each(fs, |c, idx| {
                if !grid.is_interior_face(a, c) {
                    return;
                }
                let mut f = ua[idx] * inv_dt + korteweg.comp(a)[idx];
                if let Some(fc) = &forcing {
                    f += fc.comp(a)[idx];
                }
                rhs[idx] = f;
                let mut lap_diag = 0.0;
                for b in 0..grid.dim() {
                    lap_diag += if b != a && (c[b] == 0 || c[b] + 1 == n) { 3.0 } else { 2.0 };
                }
                diag[idx] = inv_dt + w[idx] + p.nu * lap_diag * inv_h2;
            });
            let apply = |x: &[f64], y: &mut [f64]| {
                let mut lap = vec![0.0; nf];
                let mut skew = vec![0.0; nf];
                let mut scratch = vec![0.0; nf];
                vector_laplacian_component(grid, a, x, &mut lap);
                conv.apply_skew(a, x, &mut skew, &mut scratch);
                for i in 0..nf {
                    y[i] = (inv_dt + w[i]) * x[i] - p.nu * lap[i] + skew[i];
                }
                for_each(fs, |c, idx| {
                    if !grid.is_interior_face(a, c) {
                        y[idx] = 0.0;
                    }
                });
            };
            let precond = |r: &[f64], z: &mut [f64]| {
                for i in 0..nf {
                    z[i] = r[i] / diag[i];
                }
            };
            let x = tilde.comp_mut(a);
            x.copy_from_slice(ua);
            bicgstab(apply, precond, &rhs, x, MOMENTUM_TOL, LINEAR_MAX_ITERS).map_err(|rep| Error::Step {
                t: state.t + dt,
                reason: format!(
                    "momentum solve for component {a} stalled after {} iterations (relative residual {:.3e})",
                    rep.iterations, rep.relative_residual
                ),
                residuals: vec![rep.relative_residual],
            })?;
        }
        tilde.zero_boundary_normal();
        let proj = self.poisson.project(&tilde, p.poisson_tol)?;
        let mut pressure = proj.potential;
        pressure.scale(inv_dt);
        Ok(NsOutcome { u: proj.field, pressure, damping_weights: weights, projection: proj.report })
    }

    pub fn step_coupled(&self, state: &State) -> Result<StepOutcome> {
        let dt = self.params.dt;
        let limit = self.stability_limit(&state.u);
        if dt > limit {
            return Err(Error::Stability { dt, limit });
        }
        let ch = self.step_ch(state)?;
        let ns = self.step_ns(state, &ch.mu_half)?;
        let t = state.t + dt;
        let mu = chemical_potential(&ch.phi, &self.potential)?;
        let next = State { t, u: ns.u, phi: ch.phi, mu, pressure: ns.pressure };
        let forcing = self.params.forcing.eval(t);
        let record = diagnostics::step_record(
            &next,
            &self.potential,
            self.params.nu,
            damping_dissipation(&ns.damping_weights, &next.u),
            diagnostics::mobility_dissipation(&ch.face_mobility, &ch.mu_half),
            forcing.as_ref(),
        )?;
        let aux = diagnostics::aux_terms(&next, &self.potential, &self.mobility)?;
        Ok(StepOutcome { state: next, record, aux })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, params: SolverParams) -> Stepper {
        let g = Grid::new(2, n).unwrap();
        Stepper::new(g, params, PotentialSpec::regular(), MobilitySpec::constant(1.0).unwrap()).unwrap()
    }

    fn random_velocity(g: Grid, rng: &mut ChaCha8Rng, amp: f64) -> VectorField {
        let comps = (0..g.dim()).map(|a| (0..g.num_faces(a)).map(|_| rng.gen_range(-amp..amp)).collect()).collect();
        let mut v = VectorField::from_components(g, comps).unwrap();
        v.zero_boundary_normal();
        PoissonSolver::new(g).project(&v, 1e-12).unwrap().field
    }

    #[test]
    fn chemical_potential_examples() {
        let g = Grid::new(2, 16).unwrap();
        let pot = PotentialSpec::regular();
        for c in [1.0, 0.0] {
            let mu = chemical_potential(&ScalarField::constant(g, c), &pot).unwrap();
            assert_eq!(mu.max_abs(), 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let phi = ScalarField::from_values(g, (0..g.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mu = chemical_potential(&phi, &pot).unwrap();
        let fp = phi.map(|s| pot.deriv(s, 1).unwrap());
        assert!((mu.integral() - fp.integral()).abs() <= 1e-12);
        let log = PotentialSpec::logarithmic(0.15, 0.3).unwrap();
        let mut bad = phi.clone();
        bad.values_mut()[0] = 1.0;
        bad.values_mut()[1] = -1.5;
        assert!(matches!(chemical_potential(&bad, &log), Err(Error::StateDomain { count: 2 })));
    }

    #[test]
    fn uniform_state_is_an_equilibrium() {
        let st = setup(16, SolverParams::default());
        let g = st.grid();
        let state = State::new(VectorField::zeros(g), ScalarField::constant(g, 0.3), st.potential()).unwrap();
        let out = st.step_coupled(&state).unwrap();
        assert!(out.state.phi.sub(&state.phi).max_abs() < 1e-15);
        assert_eq!(out.state.u.max_abs(), 0.0);
    }

    #[test]
    fn ch_step_conserves_mass_and_matches_linear_factor() {
        let params = SolverParams { dt: 1e-3, ..SolverParams::default() };
        let st = setup(32, params.clone());
        let g = st.grid();
        let pi = std::f64::consts::PI;
        let amp = 1e-6;
        let phi = ScalarField::from_fn(g, |x| amp * (pi * x[0]).cos());
        let state = State::new(VectorField::zeros(g), phi.clone(), st.potential()).unwrap();
        let out = st.step_ch(&state).unwrap();
        assert!((out.phi.mean() - phi.mean()).abs() <= 1e-12);
        // Discrete cosine mode: -Lap_h has eigenvalue (4/h^2) sin^2(pi h / 2).
        let h = g.h();
        let k2 = 4.0 / (h * h) * (pi * h / 2.0).sin().powi(2);
        let c0 = st.potential().c0();
        let dt = params.dt;
        let factor = (1.0 + dt * k2 * c0) / (1.0 + dt * k2 * (k2 - 4.0 + c0));
        let ratio = out.phi.values()[0] / phi.values()[0];
        assert!((ratio - factor).abs() < 1e-6, "{ratio} vs {factor}");
    }

    #[test]
    fn kinetic_energy_decays_without_forcing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let st = setup(16, SolverParams { dt: 1e-3, ..SolverParams::default() });
        let g = st.grid();
        for _ in 0..20 {
            let u = random_velocity(g, &mut rng, 1.0);
            let state = State::new(u, ScalarField::constant(g, 0.0), st.potential()).unwrap();
            let ns = st.step_ns(&state, &state.mu).unwrap();
            assert!(ns.u.norm() < state.u.norm());
            assert!(crate::grid::divergence_fc(&ns.u).max_abs() <= 10.0 * 1e-10);
        }
    }

    #[test]
    fn unit_exponent_matches_linear_drag() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let base = SolverParams { r: 1.0, beta: 2.0, dt: 1e-3, ..SolverParams::default() };
        let a = setup(16, base.clone());
        let b = setup(16, SolverParams { damping: DampingModel::LinearDrag, ..base });
        let g = a.grid();
        let u = random_velocity(g, &mut rng, 1.0);
        let state = State::new(u, ScalarField::constant(g, 0.0), a.potential()).unwrap();
        let ua = a.step_ns(&state, &state.mu).unwrap().u;
        let ub = b.step_ns(&state, &state.mu).unwrap().u;
        assert!(ua.sub(&ub).max_abs() <= 1e-12);
    }

    #[test]
    fn damping_pairing_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = Grid::new(2, 8).unwrap();
        let u = random_velocity(g, &mut rng, 1.0);
        assert_eq!(damping_pairing(&u, &u, 3.0), 0.0);
        let zero = VectorField::zeros(g);
        let p = damping_pairing(&u, &zero, 3.0);
        let cells = cell_speed(&u);
        let direct: f64 = cells.values().iter().map(|s| s.powi(4)).sum::<f64>() * g.cell_volume();
        assert!((p - direct).abs() < 1e-14);
    }

    #[test]
    fn cfl_guard_rejects_large_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let st = setup(16, SolverParams { dt: 1.0, ..SolverParams::default() });
        let g = st.grid();
        let state = State::new(random_velocity(g, &mut rng, 1.0), ScalarField::constant(g, 0.0), st.potential()).unwrap();
        assert!(matches!(st.step_coupled(&state), Err(Error::Stability { .. })));
    }

    #[test]
    fn degenerate_mobility_needs_regularization() {
        let g = Grid::new(2, 16).unwrap();
        let m = MobilitySpec::degenerate(1).unwrap();
        assert!(Stepper::new(g, SolverParams::default(), PotentialSpec::regular(), m.clone()).is_err());
        assert!(Stepper::new(g, SolverParams::default(), PotentialSpec::regular(), m.regularize(0.1).unwrap()).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(SolverParams { r: 0.5, ..SolverParams::default() }.validate().is_err());
        assert!(SolverParams { nu: 0.0, ..SolverParams::default() }.validate().is_err());
        assert!(SolverParams::default().is_critical());
        assert_eq!(SolverParams { dt: 1e-4, t_final: 0.2, ..SolverParams::default() }.steps(), 2000);
    }
}
