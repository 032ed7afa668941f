//! Separable cosine transform that diagonalizes the Neumann Laplacian.
//!
//! With mirror ghosts, the 1D three-point Laplacian on `n` cells has the
//! orthonormal DCT-II vectors as eigenvectors, with eigenvalues of `-Lap`
//! equal to `(4 / h^2) sin^2(pi k / (2n))`. The tensor product does the same
//! in 2D and 3D, so one forward transform, a diagonal scaling and one inverse
//! transform solve any constant-coefficient polynomial in the Laplacian.
//! The transform is a dense `n x n` matrix per axis, which is cheap at the
//! grid sizes this crate supports.

use crate::grid::{strides, Grid, Shape};

#[derive(Debug, Clone)]
pub struct SpectralPoisson {
    grid: Grid,
    /// Row `k` holds the `k`-th orthonormal cosine vector.
    basis: Vec<f64>,
    /// Eigenvalue of `-Lap` per mode, in field storage order.
    eig: Vec<f64>,
}

impl SpectralPoisson {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let nf = n as f64;
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                basis[k * n + i] = s * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / nf).cos();
            }
        }
        let h = grid.h();
        let lam1: Vec<f64> = (0..n)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * nf)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        let mut eig = vec![0.0; grid.num_cells()];
        crate::grid::for_each(grid.cell_shape(), |c, idx| {
            eig[idx] = (0..grid.dim()).map(|a| lam1[c[a]]).sum();
        });
        Self { grid, basis, eig }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Eigenvalues of `-Lap` in mode order (mode `0` is the constant).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig
    }

    pub fn forward(&self, data: &mut [f64]) {
        for a in 0..self.grid.dim() {
            self.transform_axis(data, a, false);
        }
    }

    pub fn inverse(&self, data: &mut [f64]) {
        for a in 0..self.grid.dim() {
            self.transform_axis(data, a, true);
        }
    }

    /// `out = f(-Lap) rhs`, where `multiplier` maps an eigenvalue of `-Lap`
    /// to the scaling of its mode.
    pub fn apply_symbol(&self, rhs: &[f64], out: &mut [f64], multiplier: impl Fn(f64) -> f64) {
        out.copy_from_slice(rhs);
        self.forward(out);
        for (v, &lam) in out.iter_mut().zip(&self.eig) {
            *v *= multiplier(lam);
        }
        self.inverse(out);
    }

    /// Mean-zero solution of `-Lap u = rhs`; the constant mode is discarded.
    pub fn solve_poisson(&self, rhs: &[f64], out: &mut [f64]) {
        self.apply_symbol(rhs, out, |lam| if lam > 0.0 { 1.0 / lam } else { 0.0 });
    }

    fn transform_axis(&self, data: &mut [f64], axis: usize, inverse: bool) {
        let n = self.grid.n();
        let shape: Shape = self.grid.cell_shape();
        let st = strides(shape)[axis];
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        let others: Vec<usize> = (0..3).filter(|&b| b != axis).collect();
        for q in 0..shape[others[1]] {
            for p in 0..shape[others[0]] {
                let mut c = [0usize; 3];
                c[others[0]] = p;
                c[others[1]] = q;
                let base = crate::grid::linear(shape, c);
                for i in 0..n {
                    line[i] = data[base + i * st];
                }
                if inverse {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    for k in 0..n {
                        let lk = line[k];
                        let row = &self.basis[k * n..(k + 1) * n];
                        for (o, b) in out.iter_mut().zip(row) {
                            *o += lk * b;
                        }
                    }
                } else {
                    for k in 0..n {
                        let row = &self.basis[k * n..(k + 1) * n];
                        out[k] = crate::grid::raw_dot(row, &line);
                    }
                }
                for i in 0..n {
                    data[base + i * st] = out[i];
                }
            }
        }
    }
}
