//! Uniform staggered (MAC) grid on `[0, 1]^d`, `d` in `{2, 3}`.
//!
//! Scalars (`phi`, `mu`, pressure) live at cell centers. The velocity
//! component along axis `a` lives at the centers of the faces normal to `a`,
//! so its array has `n + 1` entries along `a` and `n` along the other axes.
//! Storage is `x` fastest, then `y`, then `z`; in 2D the `z` extent is 1.
//!
//! Homogeneous Neumann conditions for scalars are imposed by a mirror ghost
//! cell (zero boundary flux). No-slip for velocity sets the boundary-normal
//! faces to zero and reflects tangential components across the wall.

use crate::error::{Error, Result};

pub const MIN_CELLS: usize = 8;
pub const MAX_CELLS_3D: usize = 32;

pub type Shape = [usize; 3];
pub type Index = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Parameter(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if n < MIN_CELLS {
            return Err(Error::Parameter(format!("grid needs at least {MIN_CELLS} cells per axis, got {n}")));
        }
        if dim == 3 && n > MAX_CELLS_3D {
            return Err(Error::Parameter(format!("3D grids are limited to {MAX_CELLS_3D} cells per axis, got {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `h^d`, the quadrature weight of one cell or face.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn cell_shape(&self) -> Shape {
        if self.dim == 2 {
            [self.n, self.n, 1]
        } else {
            [self.n, self.n, self.n]
        }
    }

    pub fn num_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn face_shape(&self, axis: usize) -> Shape {
        let mut s = self.cell_shape();
        s[axis] += 1;
        s
    }

    pub fn num_faces(&self, axis: usize) -> usize {
        self.face_shape(axis).iter().product()
    }

    /// Physical coordinates of a cell center. In 2D the third coordinate is 0.
    pub fn cell_center(&self, c: Index) -> [f64; 3] {
        let h = self.h();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (c[a] as f64 + 0.5) * h;
        }
        x
    }

    pub fn face_center(&self, axis: usize, c: Index) -> [f64; 3] {
        let mut x = self.cell_center(c);
        x[axis] = c[axis] as f64 * self.h();
        x
    }

    pub(crate) fn is_interior_face(&self, axis: usize, c: Index) -> bool {
        c[axis] > 0 && c[axis] < self.n
    }
}

#[inline]
pub fn strides(shape: Shape) -> [usize; 3] {
    [1, shape[0], shape[0] * shape[1]]
}

#[inline]
pub fn linear(shape: Shape, c: Index) -> usize {
    c[0] + shape[0] * (c[1] + shape[1] * c[2])
}

/// Visits every index of `shape` in storage order.
#[inline]
pub fn for_each(shape: Shape, mut f: impl FnMut(Index, usize)) {
    let mut idx = 0;
    for k in 0..shape[2] {
        for j in 0..shape[1] {
            for i in 0..shape[0] {
                f([i, j, k], idx);
                idx += 1;
            }
        }
    }
}

/// Unweighted Euclidean dot product.
#[inline]
pub(crate) fn raw_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn raw_max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.num_cells()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.num_cells()] }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut values = vec![0.0; grid.num_cells()];
        for_each(grid.cell_shape(), |c, idx| values[idx] = f(grid.cell_center(c)));
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Parameter(format!(
                "scalar field needs {} values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `L^2` inner product with midpoint quadrature.
    pub fn dot(&self, other: &Self) -> f64 {
        raw_dot(&self.values, &other.values) * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Spatial average; on the unit domain this equals [`Self::integral`].
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        raw_max_abs(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn try_map(&self, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: self.grid, values })
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        let comps = (0..grid.dim()).map(|a| vec![0.0; grid.num_faces(a)]).collect();
        Self { grid, comps }
    }

    /// Samples component `a` of `f` at the centers of the `a`-faces.
    /// Boundary-normal faces are set to zero (no-slip).
    pub fn from_fn(grid: Grid, f: impl Fn(usize, [f64; 3]) -> f64) -> Self {
        let mut v = Self::zeros(grid);
        for a in 0..grid.dim() {
            let comp = &mut v.comps[a];
            for_each(grid.face_shape(a), |c, idx| {
                if grid.is_interior_face(a, c) {
                    comp[idx] = f(a, grid.face_center(a, c));
                }
            });
        }
        v
    }

    pub fn from_components(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().enumerate().any(|(a, c)| c.len() != grid.num_faces(a)) {
            return Err(Error::Parameter("vector field components do not match the grid".into()));
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn comp(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn comp_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// `L^2` inner product over all faces.
    pub fn dot(&self, other: &Self) -> f64 {
        self.comps.iter().zip(&other.comps).map(|(a, b)| raw_dot(a, b)).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| raw_max_abs(c)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.comps.iter_mut().zip(&other.comps) {
            for (p, q) in x.iter_mut().zip(y) {
                *p += a * q;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.comps.iter_mut().flatten().for_each(|v| *v *= a);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Largest magnitude of a boundary-normal component.
    pub fn boundary_normal_max(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..self.grid.dim() {
            for_each(self.grid.face_shape(a), |c, idx| {
                if !self.grid.is_interior_face(a, c) {
                    m = m.max(self.comps[a][idx].abs());
                }
            });
        }
        m
    }

    pub fn zero_boundary_normal(&mut self) {
        let grid = self.grid;
        for a in 0..grid.dim() {
            let comp = &mut self.comps[a];
            for_each(grid.face_shape(a), |c, idx| {
                if !grid.is_interior_face(a, c) {
                    comp[idx] = 0.0;
                }
            });
        }
    }
}

/// Face-centered gradient with zero normal flux on the boundary.
pub fn gradient_cc(phi: &ScalarField) -> VectorField {
    let grid = phi.grid();
    let inv_h = 1.0 / grid.h();
    let cs = strides(grid.cell_shape());
    let mut out = VectorField::zeros(grid);
    for a in 0..grid.dim() {
        let comp = &mut out.comps[a];
        let v = phi.values();
        for_each(grid.face_shape(a), |c, idx| {
            if grid.is_interior_face(a, c) {
                let right = linear(grid.cell_shape(), c);
                comp[idx] = (v[right] - v[right - cs[a]]) * inv_h;
            }
        });
    }
    out
}

/// Cell-centered divergence of a face field.
pub fn divergence_fc(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let inv_h = 1.0 / grid.h();
    let mut out = ScalarField::zeros(grid);
    for a in 0..grid.dim() {
        let fs = grid.face_shape(a);
        let step = strides(fs)[a];
        let comp = v.comp(a);
        let vals = out.values_mut();
        for_each(grid.cell_shape(), |c, idx| {
            let lo = linear(fs, c);
            vals[idx] += (comp[lo + step] - comp[lo]) * inv_h;
        });
    }
    out
}

/// `(2d+1)`-point Laplacian with mirror ghosts (homogeneous Neumann).
pub fn laplacian_neumann(phi: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(phi.grid());
    laplacian_into(phi.grid(), phi.values(), out.values_mut());
    out
}

/// [`laplacian_neumann`] on raw cell arrays.
pub fn laplacian_into(grid: Grid, v: &[f64], out: &mut [f64]) {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let cs = strides(grid.cell_shape());
    for_each(grid.cell_shape(), |c, idx| {
        let x = v[idx];
        let mut acc = 0.0;
        for a in 0..grid.dim() {
            if c[a] > 0 {
                acc += v[idx - cs[a]] - x;
            }
            if c[a] + 1 < n {
                acc += v[idx + cs[a]] - x;
            }
        }
        out[idx] = acc * inv_h2;
    });
}

/// `div(M grad v)` with face coefficients `M` and zero boundary flux.
pub fn weighted_laplacian_into(grid: Grid, m: &VectorField, v: &[f64], out: &mut [f64]) {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let cs = strides(grid.cell_shape());
    out.iter_mut().for_each(|o| *o = 0.0);
    for a in 0..grid.dim() {
        let fs = grid.face_shape(a);
        let fstep = strides(fs)[a];
        let ma = m.comp(a);
        for_each(grid.cell_shape(), |c, idx| {
            let lo = linear(fs, c);
            let x = v[idx];
            let mut acc = 0.0;
            if c[a] > 0 {
                acc += ma[lo] * (v[idx - cs[a]] - x);
            }
            if c[a] + 1 < n {
                acc += ma[lo + fstep] * (v[idx + cs[a]] - x);
            }
            out[idx] += acc * inv_h2;
        });
    }
}

/// Arithmetic average of adjacent cell values on each face; boundary faces
/// take the value of their single neighbor.
pub fn face_average(phi: &ScalarField) -> VectorField {
    let grid = phi.grid();
    let n = grid.n();
    let cs = strides(grid.cell_shape());
    let v = phi.values();
    let mut out = VectorField::zeros(grid);
    for a in 0..grid.dim() {
        let comp = &mut out.comps[a];
        for_each(grid.face_shape(a), |c, idx| {
            let mut cc = c;
            if c[a] == n {
                cc[a] = n - 1;
                comp[idx] = v[linear(grid.cell_shape(), cc)];
            } else if c[a] == 0 {
                comp[idx] = v[linear(grid.cell_shape(), cc)];
            } else {
                let right = linear(grid.cell_shape(), cc);
                comp[idx] = 0.5 * (v[right] + v[right - cs[a]]);
            }
        });
    }
    out
}

/// Component `a` of the no-slip vector Laplacian, written into `out`.
/// Only interior faces are touched; boundary entries of `out` are zeroed.
pub fn vector_laplacian_component(grid: Grid, a: usize, v: &[f64], out: &mut [f64]) {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
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
            if b == a {
                acc += v[idx - st[b]] + v[idx + st[b]] - 2.0 * x;
            } else {
                let lo = if c[b] > 0 { v[idx - st[b]] } else { -x };
                let hi = if c[b] + 1 < n { v[idx + st[b]] } else { -x };
                acc += lo + hi - 2.0 * x;
            }
        }
        out[idx] = acc * inv_h2;
    });
}

pub fn vector_laplacian(v: &VectorField) -> VectorField {
    let grid = v.grid();
    let mut out = VectorField::zeros(grid);
    for a in 0..grid.dim() {
        vector_laplacian_component(grid, a, v.comp(a), &mut out.comps[a]);
    }
    out
}

/// Discrete `||grad v||^2 = -<v, lap v>` as a sum of squared differences,
/// including the half-cell wall gradients implied by the reflected ghosts.
pub fn velocity_gradient_norm_sq(v: &VectorField) -> f64 {
    let grid = v.grid();
    let n = grid.n();
    let mut acc = 0.0;
    for a in 0..grid.dim() {
        let fs = grid.face_shape(a);
        let st = strides(fs);
        let comp = v.comp(a);
        for_each(fs, |c, idx| {
            let x = comp[idx];
            for b in 0..grid.dim() {
                if b == a {
                    if c[a] < n {
                        let d = comp[idx + st[b]] - x;
                        acc += d * d;
                    }
                } else if grid.is_interior_face(a, c) {
                    if c[b] + 1 < n {
                        let d = comp[idx + st[b]] - x;
                        acc += d * d;
                    }
                    if c[b] == 0 || c[b] + 1 == n {
                        acc += 2.0 * x * x;
                    }
                }
            }
        });
    }
    acc * grid.cell_volume() / (grid.h() * grid.h())
}

/// Velocity interpolated to cell centers, one scalar field per axis.
pub fn cell_velocity(v: &VectorField) -> Vec<ScalarField> {
    let grid = v.grid();
    (0..grid.dim())
        .map(|a| {
            let fs = grid.face_shape(a);
            let step = strides(fs)[a];
            let comp = v.comp(a);
            let mut out = ScalarField::zeros(grid);
            let vals = out.values_mut();
            for_each(grid.cell_shape(), |c, idx| {
                let lo = linear(fs, c);
                vals[idx] = 0.5 * (comp[lo] + comp[lo + step]);
            });
            out
        })
        .collect()
}

/// `|u|` at cell centers.
pub fn cell_speed(v: &VectorField) -> ScalarField {
    let parts = cell_velocity(v);
    let mut out = ScalarField::zeros(v.grid());
    for p in &parts {
        for (o, x) in out.values_mut().iter_mut().zip(p.values()) {
            *o += x * x;
        }
    }
    out.values_mut().iter_mut().for_each(|x| *x = x.sqrt());
    out
}

/// Averages `2^d` fine cells onto a grid with half the resolution.
pub fn restrict(phi: &ScalarField) -> Result<ScalarField> {
    let fine = phi.grid();
    if !fine.n().is_multiple_of(2) {
        return Err(Error::Parameter(format!("cannot restrict a grid with odd n = {}", fine.n())));
    }
    let coarse = Grid::new(fine.dim(), fine.n() / 2)?;
    let fshape = fine.cell_shape();
    let mut out = ScalarField::zeros(coarse);
    let w = 1.0 / (1 << fine.dim()) as f64;
    let vals = out.values_mut();
    for_each(fshape, |c, idx| {
        let cc = [c[0] / 2, c[1] / 2, c[2] / 2];
        vals[linear(coarse.cell_shape(), cc)] += w * phi.values()[idx];
    });
    Ok(out)
}
