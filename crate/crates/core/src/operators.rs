//! Global operators built on the grid stencils: Helmholtz projection, the
//! inverse Neumann Laplacian `B^-1`, the skew trilinear form and scalar
//! transport.
//!
//! Poisson problems are solved by preconditioned conjugate gradients with the
//! cosine transform of [`crate::spectral`] as preconditioner. The transform
//! inverts the discrete Neumann Laplacian exactly, so a solve usually takes a
//! single iteration; CG is kept around it so the stopping rule is an actual
//! residual check.

pub use crate::grid::{divergence_fc, gradient_cc, laplacian_neumann};

use crate::error::{Error, Result};
use crate::grid::{for_each, laplacian_into, linear, raw_dot, strides, Grid, ScalarField, VectorField};
use crate::krylov::{pcg, SolveReport, Stop};
use crate::spectral::SpectralPoisson;

pub const POISSON_MAX_ITERS: usize = 200;
/// Largest `|mean f|` accepted by [`neumann_inverse`].
pub const MEAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Projection {
    /// The divergence-free part `v - grad q`.
    pub field: VectorField,
    /// Mean-zero potential with `Lap q = div v`.
    pub potential: ScalarField,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct NeumannSolution {
    /// Mean-zero `u` with `-Lap u = f`.
    pub u: ScalarField,
    /// `||grad u||`, i.e. `||f||_*`.
    pub norm: f64,
    pub report: SolveReport,
}

/// Poisson machinery for one grid, reusable across calls.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    spectral: SpectralPoisson,
}

impl PoissonSolver {
    pub fn new(grid: Grid) -> Self {
        Self { spectral: SpectralPoisson::new(grid) }
    }

    pub fn grid(&self) -> Grid {
        self.spectral.grid()
    }

    pub fn spectral(&self) -> &SpectralPoisson {
        &self.spectral
    }

    /// Solves `-Lap u = rhs` for mean-zero `u`, starting from `u`.
    fn solve(&self, rhs: &[f64], u: &mut [f64], stop: Stop, what: &'static str) -> Result<SolveReport> {
        let grid = self.grid();
        let apply = |x: &[f64], y: &mut [f64]| {
            laplacian_into(grid, x, y);
            y.iter_mut().for_each(|v| *v = -*v);
        };
        let precond = |r: &[f64], z: &mut [f64]| self.spectral.solve_poisson(r, z);
        let report =
            pcg(apply, precond, rhs, u, stop, POISSON_MAX_ITERS).map_err(|report| Error::Convergence { what, report })?;
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        u.iter_mut().for_each(|v| *v -= mean);
        Ok(report)
    }

    /// Helmholtz-Hodge projection; the output divergence is at most `tol`
    /// in max norm.
    pub fn project(&self, v: &VectorField, tol: f64) -> Result<Projection> {
        if !(tol > 0.0) {
            return Err(Error::Parameter(format!("projection tolerance must be positive, got {tol}")));
        }
        let grid = self.grid();
        let mut rhs = divergence_fc(v);
        rhs.remove_mean();
        rhs.scale(-1.0);
        let mut q = vec![0.0; grid.num_cells()];
        let report = self.solve(rhs.values(), &mut q, Stop::MaxAbs(tol), "pressure projection")?;
        let potential = ScalarField::from_values(grid, q)?;
        let mut field = v.clone();
        field.axpy(-1.0, &gradient_cc(&potential));
        Ok(Projection { field, potential, report })
    }

    pub fn neumann_inverse(&self, f: &ScalarField, tol: f64) -> Result<NeumannSolution> {
        if !(tol > 0.0) {
            return Err(Error::Parameter(format!("Poisson tolerance must be positive, got {tol}")));
        }
        let mean = f.mean();
        if mean.abs() > MEAN_TOLERANCE {
            return Err(Error::Precondition(format!(
                "inverse Neumann Laplacian needs a mean-zero source, got mean {mean:.3e}"
            )));
        }
        let grid = self.grid();
        let mut rhs = f.clone();
        rhs.remove_mean();
        let mut u = vec![0.0; grid.num_cells()];
        let report = self.solve(rhs.values(), &mut u, Stop::Relative(tol), "inverse Neumann Laplacian")?;
        let u = ScalarField::from_values(grid, u)?;
        let norm = gradient_cc(&u).norm();
        Ok(NeumannSolution { u, norm, report })
    }
}

pub fn helmholtz_project(v: &VectorField, tol: f64) -> Result<(VectorField, SolveReport)> {
    let p = PoissonSolver::new(v.grid()).project(v, tol)?;
    Ok((p.field, p.report))
}

/// `(B^-1 f, ||f||_*, report)` for mean-zero `f`.
pub fn neumann_inverse(f: &ScalarField, tol: f64) -> Result<(ScalarField, f64, SolveReport)> {
    let s = PoissonSolver::new(f.grid()).neumann_inverse(f, tol)?;
    Ok((s.u, s.norm, s.report))
}

/// Central-difference convection operator `v -> (u . grad) v` for a frozen
/// advecting field `u`, acting on face velocities with no-slip closure.
///
/// Row `f` of component `a` reads `sum_b c_b(f) (v[f + e_b] - v[f - e_b])`
/// with `c_b = ubar_b / (2h)`, where `ubar_b` is `u_b` interpolated to the
/// face. Reflected ghosts at walls fold into the diagonal.
#[derive(Debug, Clone)]
pub struct Convection {
    grid: Grid,
    /// `coef[a][b][f]`.
    coef: Vec<Vec<Vec<f64>>>,
}

impl Convection {
    pub fn new(u: &VectorField) -> Self {
        let grid = u.grid();
        let d = grid.dim();
        let half_inv_h = 0.5 / grid.h();
        let mut coef = vec![vec![Vec::new(); d]; d];
        for a in 0..d {
            let fs = grid.face_shape(a);
            for b in 0..d {
                let mut cb = vec![0.0; grid.num_faces(a)];
                let ub = u.comp(b);
                let bs = grid.face_shape(b);
                let bstep = strides(bs)[b];
                for_each(fs, |c, idx| {
                    if !grid.is_interior_face(a, c) {
                        return;
                    }
                    let ubar = if a == b {
                        ub[idx]
                    } else {
                        // Four b-faces around the a-face: cells c - e_a and c.
                        let hi_cell = linear(bs, c);
                        let mut lo = c;
                        lo[a] -= 1;
                        let lo_cell = linear(bs, lo);
                        0.25 * (ub[hi_cell] + ub[hi_cell + bstep] + ub[lo_cell] + ub[lo_cell + bstep])
                    };
                    cb[idx] = ubar * half_inv_h;
                });
                coef[a][b] = cb;
            }
        }
        Self { grid, coef }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `out = C_a v` for component `a`.
    pub fn apply(&self, a: usize, v: &[f64], out: &mut [f64]) {
        let grid = self.grid;
        let n = grid.n();
        let fs = grid.face_shape(a);
        let st = strides(fs);
        for_each(fs, |c, idx| {
            if !grid.is_interior_face(a, c) {
                out[idx] = 0.0;
                return;
            }
            let x = v[idx];
            let mut acc = 0.0;
            for b in 0..grid.dim() {
                let k = self.coef[a][b][idx];
                let (lo, hi) = if b == a {
                    (v[idx - st[b]], v[idx + st[b]])
                } else {
                    (
                        if c[b] > 0 { v[idx - st[b]] } else { -x },
                        if c[b] + 1 < n { v[idx + st[b]] } else { -x },
                    )
                };
                acc += k * (hi - lo);
            }
            out[idx] = acc;
        });
    }

    /// `out = C_a^T w`, restricted to interior faces.
    pub fn apply_transpose(&self, a: usize, w: &[f64], out: &mut [f64]) {
        let grid = self.grid;
        let n = grid.n();
        let fs = grid.face_shape(a);
        let st = strides(fs);
        out.iter_mut().for_each(|o| *o = 0.0);
        for_each(fs, |c, idx| {
            if !grid.is_interior_face(a, c) {
                return;
            }
            let wf = w[idx];
            for b in 0..grid.dim() {
                let kw = self.coef[a][b][idx] * wf;
                if b == a {
                    out[idx + st[b]] += kw;
                    out[idx - st[b]] -= kw;
                } else {
                    if c[b] + 1 < n {
                        out[idx + st[b]] += kw;
                    } else {
                        out[idx] -= kw;
                    }
                    if c[b] > 0 {
                        out[idx - st[b]] -= kw;
                    } else {
                        out[idx] += kw;
                    }
                }
            }
        });
        for_each(fs, |c, idx| {
            if !grid.is_interior_face(a, c) {
                out[idx] = 0.0;
            }
        });
    }

    /// Skew part `N_a = (C_a - C_a^T) / 2`; `scratch` must match `out` in length.
    pub fn apply_skew(&self, a: usize, v: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.apply(a, v, out);
        self.apply_transpose(a, v, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = 0.5 * (*o - s);
        }
    }

    /// `<C v, w>` summed over components, with `h^d` weight.
    pub fn pairing(&self, v: &VectorField, w: &VectorField) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.grid.dim() {
            let mut cv = vec![0.0; v.comp(a).len()];
            self.apply(a, v.comp(a), &mut cv);
            acc += raw_dot(&cv, w.comp(a));
        }
        acc * self.grid.cell_volume()
    }
}

/// Skew-symmetrized trilinear form `b(u, v, w) = (<(u.grad)v, w> - <(u.grad)w, v>) / 2`.
/// Antisymmetric in `(v, w)` in floating point, so `b(u, v, v) = 0` exactly.
pub fn trilinear_b(u: &VectorField, v: &VectorField, w: &VectorField) -> f64 {
    let c = Convection::new(u);
    0.5 * (c.pairing(v, w) - c.pairing(w, v))
}

/// Conservative transport `div(u phi_face)` with arithmetically averaged
/// face values.
pub fn advect_scalar(u: &VectorField, phi: &ScalarField) -> ScalarField {
    let mut flux = crate::grid::face_average(phi);
    for a in 0..u.grid().dim() {
        for (f, ua) in flux.comp_mut(a).iter_mut().zip(u.comp(a)) {
            *f *= ua;
        }
    }
    divergence_fc(&flux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(grid: Grid, rng: &mut ChaCha8Rng) -> VectorField {
        let comps = (0..grid.dim()).map(|a| (0..grid.num_faces(a)).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut v = VectorField::from_components(grid, comps).unwrap();
        v.zero_boundary_normal();
        v
    }

    fn random_scalar(grid: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_values(grid, (0..grid.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn projection_is_orthogonal_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for dim in [2, 3] {
            let g = Grid::new(dim, 16).unwrap();
            let ps = PoissonSolver::new(g);
            let v = random_vector(g, &mut rng);
            let p = ps.project(&v, 1e-10).unwrap();
            assert!(divergence_fc(&p.field).max_abs() <= 1e-10);
            let rest = v.sub(&p.field);
            let lhs = p.field.norm().powi(2) + rest.norm().powi(2);
            assert!((lhs - v.norm().powi(2)).abs() <= 1e-10 * v.norm().powi(2));
            let pp = ps.project(&p.field, 1e-10).unwrap();
            assert!(pp.field.sub(&p.field).norm() <= 10.0 * 1e-10);
            assert_eq!(p.field.boundary_normal_max(), 0.0);
        }
    }

    #[test]
    fn gradients_project_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid::new(2, 32).unwrap();
        let q = random_scalar(g, &mut rng);
        let (out, _) = helmholtz_project(&gradient_cc(&q), 1e-10).unwrap();
        assert!(out.max_abs() < 1e-9);
    }

    #[test]
    fn neumann_inverse_symmetry_and_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = Grid::new(2, 32).unwrap();
        let ps = PoissonSolver::new(g);
        let mut f = random_scalar(g, &mut rng);
        let mut h = random_scalar(g, &mut rng);
        f.remove_mean();
        h.remove_mean();
        let bf = ps.neumann_inverse(&f, 1e-12).unwrap();
        let bh = ps.neumann_inverse(&h, 1e-12).unwrap();
        assert!((f.dot(&bh.u) - h.dot(&bf.u)).abs() <= 1e-10);
        let star2 = f.dot(&bf.u);
        assert!((bf.norm * bf.norm - star2).abs() <= 1e-10 * star2);
        let zero = ps.neumann_inverse(&ScalarField::zeros(g), 1e-12).unwrap();
        assert_eq!(zero.norm, 0.0);
        assert!(matches!(
            ps.neumann_inverse(&ScalarField::constant(g, 1.0), 1e-12),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn trilinear_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for dim in [2, 3] {
            let g = Grid::new(dim, 8).unwrap();
            let u = random_vector(g, &mut rng);
            let v = random_vector(g, &mut rng);
            let w = random_vector(g, &mut rng);
            assert_eq!(trilinear_b(&u, &v, &v), 0.0);
            assert_eq!(trilinear_b(&u, &v, &w) + trilinear_b(&u, &w, &v), 0.0);
        }
    }

    #[test]
    fn transpose_matches_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for dim in [2, 3] {
            let g = Grid::new(dim, 8).unwrap();
            let u = random_vector(g, &mut rng);
            let c = Convection::new(&u);
            let v = random_vector(g, &mut rng);
            let w = random_vector(g, &mut rng);
            for a in 0..dim {
                let mut cv = vec![0.0; v.comp(a).len()];
                let mut ctw = vec![0.0; v.comp(a).len()];
                c.apply(a, v.comp(a), &mut cv);
                c.apply_transpose(a, w.comp(a), &mut ctw);
                let l = raw_dot(&cv, w.comp(a));
                let r = raw_dot(v.comp(a), &ctw);
                assert!((l - r).abs() < 1e-10 * l.abs().max(1.0));
            }
        }
    }

    #[test]
    fn advection_is_mass_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let g = Grid::new(2, 32).unwrap();
        let (u, _) = helmholtz_project(&random_vector(g, &mut rng), 1e-12).unwrap();
        let phi = random_scalar(g, &mut rng);
        assert!(advect_scalar(&u, &phi).integral().abs() <= 1e-12);
        let c = advect_scalar(&u, &ScalarField::constant(g, 0.7));
        assert!(c.max_abs() <= 1e-11);
        assert_eq!(advect_scalar(&VectorField::zeros(g), &phi).max_abs(), 0.0);
    }
}
