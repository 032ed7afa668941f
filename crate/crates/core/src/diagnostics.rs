//! Energies, dissipation rates and trajectory-level balance residuals.
//!
//! The free energy is `E = 1/2 ||u||^2 + 1/2 ||grad phi||^2 + int F(phi)`,
//! integrated with the midpoint rule. Its balance over `[0, t]` reads
//!
//! ```text
//! E(t) - E(0) + int (nu ||grad u||^2 + damping + ||sqrt(m) grad mu||^2 - <U, u>) = 0
//! ```
//!
//! in the continuum. Time integrals are right-endpoint sums over the stored
//! records, which matches the implicit character of the scheme.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{divergence_fc, face_average, gradient_cc, laplacian_neumann, velocity_gradient_norm_sq, ScalarField, VectorField};
use crate::materials::{EntropyFunction, MobilitySpec, PotentialSpec};
use crate::operators::PoissonSolver;
use crate::solver::State;

pub const COLUMNS: [&str; 11] =
    ["t", "mass", "kinetic", "interfacial", "bulk", "visc_diss", "damp_diss", "mob_diss", "work", "div_max", "phi_max"];

/// One row of the per-step ledger.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Spatial average of `phi`.
    pub mass: f64,
    pub kinetic: f64,
    pub interfacial: f64,
    pub bulk: f64,
    pub visc_diss: f64,
    pub damp_diss: f64,
    pub mob_diss: f64,
    pub work: f64,
    pub div_max: f64,
    pub phi_max: f64,
}

impl DiagnosticsRecord {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.interfacial + self.bulk
    }

    pub fn dissipation(&self) -> f64 {
        self.visc_diss + self.damp_diss + self.mob_diss
    }

    pub fn csv_header() -> String {
        COLUMNS.join(",")
    }

    pub fn values(&self) -> [f64; 11] {
        [
            self.t,
            self.mass,
            self.kinetic,
            self.interfacial,
            self.bulk,
            self.visc_diss,
            self.damp_diss,
            self.mob_diss,
            self.work,
            self.div_max,
            self.phi_max,
        ]
    }

    /// Comma-separated values in [`COLUMNS`] order, printed with the
    /// shortest representation that round-trips.
    pub fn to_csv_row(&self) -> String {
        let mut s = String::with_capacity(256);
        for (i, v) in self.values().iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v:e}").unwrap();
        }
        s
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parameter(format!("malformed CSV row {line:?}: {e}")))?;
        if vals.len() != COLUMNS.len() {
            return Err(Error::Parameter(format!(
                "CSV row has {} fields, expected {}",
                vals.len(),
                COLUMNS.len()
            )));
        }
        Ok(Self {
            t: vals[0],
            mass: vals[1],
            kinetic: vals[2],
            interfacial: vals[3],
            bulk: vals[4],
            visc_diss: vals[5],
            damp_diss: vals[6],
            mob_diss: vals[7],
            work: vals[8],
            div_max: vals[9],
            phi_max: vals[10],
        })
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        COLUMNS.iter().position(|c| *c == column).map(|i| self.values()[i])
    }
}

/// Extra per-step quantities entering the degenerate-mobility energy identity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AuxTerms {
    /// `1/2 ||phi||^2`.
    pub phi_half_sq: f64,
    /// `(m grad F'(phi), grad phi)`, the discrete `||sqrt(m F'') grad phi||^2`.
    pub mobility_curvature: f64,
    /// `(Lap phi grad phi, u)`.
    pub korteweg_work: f64,
    /// `(m grad Lap phi, grad phi)`.
    pub mobility_third: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LedgerMeta {
    pub dim: usize,
    pub n: usize,
    pub nu: f64,
    pub beta: f64,
    pub r: f64,
    pub potential: String,
    pub mobility: String,
}

/// Ordered records of one trajectory at uniform spacing `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLedger {
    dt: f64,
    meta: LedgerMeta,
    records: Vec<DiagnosticsRecord>,
    aux: Vec<AuxTerms>,
}

impl TrajectoryLedger {
    pub fn new(dt: f64, meta: LedgerMeta) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("ledger spacing must be positive, got {dt}")));
        }
        Ok(Self { dt, meta, records: Vec::new(), aux: Vec::new() })
    }

    pub fn push(&mut self, record: DiagnosticsRecord, aux: AuxTerms) -> Result<()> {
        if let Some(last) = self.records.last() {
            let gap = record.t - last.t;
            if !(gap > 0.0) || (gap - self.dt).abs() > 1e-6 * self.dt {
                return Err(Error::Precondition(format!(
                    "ledger records must be spaced by dt = {}, got t = {} after {}",
                    self.dt, record.t, last.t
                )));
            }
        }
        self.records.push(record);
        self.aux.push(aux);
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn meta(&self) -> &LedgerMeta {
        &self.meta
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn aux(&self) -> &[AuxTerms] {
        &self.aux
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&DiagnosticsRecord> {
        self.records.last()
    }

    /// Largest `|mass_k - mass_0|`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.records.first().map_or(0.0, |r| r.mass);
        self.records.iter().fold(0.0, |m, r| m.max((r.mass - m0).abs()))
    }

    /// Largest step-to-step energy increase `E^{k+1} - E^k` (negative when
    /// the energy strictly decreases everywhere).
    pub fn max_energy_increase(&self) -> f64 {
        self.records.windows(2).map(|w| w[1].energy() - w[0].energy()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = DiagnosticsRecord::csv_header();
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.to_csv_row());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub interfacial: f64,
    pub bulk: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.interfacial + self.bulk
    }
}

pub fn energy_parts(state: &State, pot: &PotentialSpec) -> Result<EnergyParts> {
    let kinetic = 0.5 * state.u.dot(&state.u);
    let g = gradient_cc(&state.phi);
    let interfacial = 0.5 * g.dot(&g);
    let mut bulk = 0.0;
    for &s in state.phi.values() {
        bulk += pot.value(s)?;
    }
    bulk *= state.grid().cell_volume();
    Ok(EnergyParts { kinetic, interfacial, bulk })
}

/// `1/2 ||u||^2 + 1/2 ||grad phi||^2 + sum F(phi) h^d`.
pub fn total_energy(state: &State, pot: &PotentialSpec) -> Result<f64> {
    Ok(energy_parts(state, pot)?.total())
}

/// `sum_f M_f |grad mu|_f^2 h^d`.
pub fn mobility_dissipation(face_mobility: &VectorField, mu: &ScalarField) -> f64 {
    let g = gradient_cc(mu);
    let mut acc = 0.0;
    for a in 0..mu.grid().dim() {
        for (m, d) in face_mobility.comp(a).iter().zip(g.comp(a)) {
            acc += m * d * d;
        }
    }
    acc * mu.grid().cell_volume()
}

/// Assembles a record from a state and the step's dissipation rates.
pub fn step_record(
    state: &State,
    pot: &PotentialSpec,
    nu: f64,
    damp_diss: f64,
    mob_diss: f64,
    forcing: Option<&VectorField>,
) -> Result<DiagnosticsRecord> {
    let e = energy_parts(state, pot)?;
    Ok(DiagnosticsRecord {
        t: state.t,
        mass: state.phi.mean(),
        kinetic: e.kinetic,
        interfacial: e.interfacial,
        bulk: e.bulk,
        visc_diss: nu * velocity_gradient_norm_sq(&state.u),
        damp_diss,
        mob_diss,
        work: forcing.map_or(0.0, |f| f.dot(&state.u)),
        div_max: divergence_fc(&state.u).max_abs(),
        phi_max: state.phi.max_abs(),
    })
}

fn face_mobility(phi: &ScalarField, mob: &MobilitySpec) -> VectorField {
    let mut m = face_average(&phi.map(|s| mob.value(s)));
    m.zero_boundary_normal();
    m
}

fn weighted_pairing(m: &VectorField, a: &VectorField, b: &VectorField) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.grid().dim() {
        for ((w, x), y) in m.comp(k).iter().zip(a.comp(k)).zip(b.comp(k)) {
            acc += w * x * y;
        }
    }
    acc * a.grid().cell_volume()
}

pub fn aux_terms(state: &State, pot: &PotentialSpec, mob: &MobilitySpec) -> Result<AuxTerms> {
    let phi = &state.phi;
    let m = face_mobility(phi, mob);
    let grad_phi = gradient_cc(phi);
    let fp = phi.try_map(|s| pot.deriv(s, 1))?;
    let lap = laplacian_neumann(phi);
    let mut lap_grad = face_average(&lap);
    for a in 0..phi.grid().dim() {
        for (l, g) in lap_grad.comp_mut(a).iter_mut().zip(grad_phi.comp(a)) {
            *l *= g;
        }
    }
    Ok(AuxTerms {
        phi_half_sq: 0.5 * phi.dot(phi),
        mobility_curvature: weighted_pairing(&m, &gradient_cc(&fp), &grad_phi),
        korteweg_work: lap_grad.dot(&state.u),
        mobility_third: weighted_pairing(&m, &gradient_cc(&lap), &grad_phi),
    })
}

/// Normalized `|R|` with
/// `R = E(t1) - E(0) + sum_k dt (visc + damp + mob - work)_k`,
/// divided by `E(0) + sum_k dt (visc + damp + mob)_k`.
pub fn energy_balance_residual(ledger: &TrajectoryLedger) -> Result<f64> {
    let recs = ledger.records();
    let (first, last) = match (recs.first(), recs.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Precondition("energy balance needs a non-empty ledger".into())),
    };
    let dt = ledger.dt();
    let mut flux = 0.0;
    let mut diss = 0.0;
    for r in &recs[1..] {
        flux += dt * (r.dissipation() - r.work);
        diss += dt * r.dissipation();
    }
    let res = last.energy() - first.energy() + flux;
    let scale = first.energy().abs() + diss;
    Ok(if scale == 0.0 { res.abs() } else { res.abs() / scale })
}

/// Signed, normalized residual of the degenerate-mobility energy identity
///
/// ```text
/// 1/2 (||u||^2 + ||phi||^2)(t) - (same)(0)
///   + int [ (m F'' grad phi, grad phi) + nu ||grad u||^2 + damping + (Lap phi grad phi, u)
///           - <U, u> - (m grad Lap phi, grad phi) ]
/// ```
///
/// divided by the initial value of `1/2 (||u||^2 + ||phi||^2)` plus the
/// time integrals of the magnitudes of each rate.
pub fn degenerate_energy_residual(ledger: &TrajectoryLedger, pot: &PotentialSpec, mob: &MobilitySpec) -> Result<f64> {
    if !pot.is_logarithmic_family() || !matches!(mob, MobilitySpec::Clamped { .. }) {
        return Err(Error::Precondition(format!(
            "degenerate energy identity needs a logarithmic-family potential and a clamped mobility, got {} and {}",
            pot.label(),
            mob.label()
        )));
    }
    let recs = ledger.records();
    let aux = ledger.aux();
    if recs.is_empty() {
        return Err(Error::Precondition("degenerate energy residual needs a non-empty ledger".into()));
    }
    let dt = ledger.dt();
    let e = |k: usize| recs[k].kinetic + aux[k].phi_half_sq;
    let last = recs.len() - 1;
    let mut rate_sum = 0.0;
    let mut scale = e(0).abs();
    for k in 1..recs.len() {
        let (r, a) = (&recs[k], &aux[k]);
        let terms = [
            a.mobility_curvature,
            r.visc_diss,
            r.damp_diss,
            a.korteweg_work,
            -r.work,
            -a.mobility_third,
        ];
        for t in terms {
            rate_sum += dt * t;
            scale += dt * t.abs();
        }
    }
    let res = e(last) - e(0) + rate_sum;
    Ok(if scale == 0.0 { res } else { res / scale })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HMinusOne {
    /// `||rho||_* = ||grad B^-1 rho||` of the mean-free difference.
    pub star: f64,
    /// `||rho||` of the mean-free difference.
    pub l2: f64,
}

pub fn hminus1_distance(phi1: &ScalarField, phi2: &ScalarField, tol: f64) -> Result<HMinusOne> {
    if phi1.grid() != phi2.grid() {
        return Err(Error::Parameter("fields live on different grids".into()));
    }
    hminus1_distance_with(&PoissonSolver::new(phi1.grid()), phi1, phi2, tol)
}

/// [`hminus1_distance`] reusing a prepared Poisson solver.
pub fn hminus1_distance_with(
    solver: &PoissonSolver,
    phi1: &ScalarField,
    phi2: &ScalarField,
    tol: f64,
) -> Result<HMinusOne> {
    let mut rho = phi1.sub(phi2);
    rho.remove_mean();
    let l2 = rho.norm();
    if l2 == 0.0 {
        return Ok(HMinusOne { star: 0.0, l2 });
    }
    let star = solver.neumann_inverse(&rho, tol)?.norm;
    Ok(HMinusOne { star, l2 })
}

/// `sum G(phi) h^d`.
pub fn entropy_functional(phi: &ScalarField, g: &EntropyFunction) -> f64 {
    phi.values().iter().map(|&s| g.value(s)).sum::<f64>() * phi.grid().cell_volume()
}

/// `sum (|phi| - 1)_+^2 h^d`.
pub fn positive_part_excess(phi: &ScalarField) -> f64 {
    phi.values().iter().map(|s| (s.abs() - 1.0).max(0.0).powi(2)).sum::<f64>() * phi.grid().cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(u: VectorField, phi: ScalarField) -> State {
        State::new(u, phi, &PotentialSpec::regular()).unwrap()
    }

    #[test]
    fn energy_examples() {
        let g = Grid::new(2, 16).unwrap();
        let pot = PotentialSpec::regular();
        let zero = state(VectorField::zeros(g), ScalarField::zeros(g));
        assert!((total_energy(&zero, &pot).unwrap() - 1.0).abs() < 1e-14);
        let one = state(VectorField::zeros(g), ScalarField::constant(g, 1.0));
        assert_eq!(total_energy(&one, &pot).unwrap(), 0.0);
        let u = VectorField::from_fn(g, |a, x| if a == 0 { x[1] } else { 0.5 });
        let mut u2 = u.clone();
        u2.scale(2.0);
        let k1 = energy_parts(&state(u, ScalarField::zeros(g)), &pot).unwrap().kinetic;
        let k2 = energy_parts(&state(u2, ScalarField::zeros(g)), &pot).unwrap().kinetic;
        assert_eq!(k2, 4.0 * k1);
    }

    #[test]
    fn csv_roundtrip() {
        let r = DiagnosticsRecord { t: 0.1, mass: -0.3, kinetic: 1.0 / 3.0, phi_max: 0.99, ..Default::default() };
        let back = DiagnosticsRecord::from_csv_row(&r.to_csv_row()).unwrap();
        assert_eq!(r, back);
        assert_eq!(DiagnosticsRecord::csv_header().split(',').count(), 11);
        assert!(DiagnosticsRecord::from_csv_row("1,2,3").is_err());
    }

    #[test]
    fn ledger_spacing_and_residuals() {
        let mut l = TrajectoryLedger::new(0.1, LedgerMeta::default()).unwrap();
        assert!(energy_balance_residual(&l).is_err());
        l.push(DiagnosticsRecord::default(), AuxTerms::default()).unwrap();
        assert!(l.push(DiagnosticsRecord { t: 0.3, ..Default::default() }, AuxTerms::default()).is_err());
        l.push(DiagnosticsRecord { t: 0.1, ..Default::default() }, AuxTerms::default()).unwrap();
        assert_eq!(energy_balance_residual(&l).unwrap(), 0.0);
        let log = PotentialSpec::logarithmic(0.15, 0.3).unwrap();
        let clamped = MobilitySpec::degenerate(1).unwrap().regularize(0.1).unwrap();
        assert_eq!(degenerate_energy_residual(&l, &log, &clamped).unwrap(), 0.0);
        assert!(degenerate_energy_residual(&l, &PotentialSpec::regular(), &clamped).is_err());
    }

    #[test]
    fn hminus1_examples() {
        let g = Grid::new(2, 64).unwrap();
        let pi = std::f64::consts::PI;
        let a = ScalarField::from_fn(g, |x| (pi * x[0]).cos());
        let z = ScalarField::zeros(g);
        let d = hminus1_distance(&a, &z, 1e-12).unwrap();
        assert!((d.star / d.l2 * pi - 1.0).abs() < 0.02);
        assert_eq!(hminus1_distance(&a, &a, 1e-12).unwrap().star, 0.0);
        let shifted = a.map(|v| v + 0.25);
        assert!(hminus1_distance(&shifted, &a, 1e-12).unwrap().star < 1e-14);
    }

    #[test]
    fn hminus1_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let g = Grid::new(2, 16).unwrap();
        let ps = PoissonSolver::new(g);
        let mut rand_field = || {
            ScalarField::from_values(g, (0..g.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        for _ in 0..20 {
            let (a, b, c) = (rand_field(), rand_field(), rand_field());
            let ab = hminus1_distance_with(&ps, &a, &b, 1e-12).unwrap().star;
            let bc = hminus1_distance_with(&ps, &b, &c, 1e-12).unwrap().star;
            let ac = hminus1_distance_with(&ps, &a, &c, 1e-12).unwrap().star;
            assert!(ac <= ab + bc + 1e-10);
        }
    }

    #[test]
    fn entropy_functional_examples() {
        let g = Grid::new(2, 16).unwrap();
        let ent = EntropyFunction::new(&MobilitySpec::constant(1.0).unwrap(), 256).unwrap();
        assert_eq!(entropy_functional(&ScalarField::zeros(g), &ent), 0.0);
        let phi = ScalarField::from_fn(g, |x| x[0] - 0.3 * x[1]);
        assert!((entropy_functional(&phi, &ent) - 0.5 * phi.dot(&phi)).abs() < 1e-8);
    }

    #[test]
    fn positive_part_excess_examples() {
        let g = Grid::new(2, 8).unwrap();
        assert_eq!(positive_part_excess(&ScalarField::constant(g, 0.9)), 0.0);
        assert!((positive_part_excess(&ScalarField::constant(g, -1.5)) - 0.25).abs() < 1e-15);
    }
}
