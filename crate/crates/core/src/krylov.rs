//! Matrix-free Krylov solvers over flat `f64` slices.

use crate::grid::raw_dot;

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final residual relative to the right-hand side (or the absolute
    /// max-norm residual when solving with [`Stop::MaxAbs`]).
    pub relative_residual: f64,
}

/// Stopping rule for [`pcg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// `||r||_2 <= tol * ||b||_2`.
    Relative(f64),
    /// `max |r_i| <= tol`.
    MaxAbs(f64),
}

impl Stop {
    fn measure(&self, r: &[f64], b_norm: f64) -> (f64, bool) {
        match *self {
            Stop::Relative(tol) => {
                let v = if b_norm > 0.0 { raw_dot(r, r).sqrt() / b_norm } else { raw_dot(r, r).sqrt() };
                (v, v <= tol)
            }
            Stop::MaxAbs(tol) => {
                let v = r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                (v, v <= tol)
            }
        }
    }
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite operator. `x` holds the initial guess on entry.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    stop: Stop,
    max_iter: usize,
) -> Result<SolveReport, SolveReport> {
    let n = b.len();
    let b_norm = raw_dot(b, b).sqrt();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let (mut res, mut done) = stop.measure(&r, b_norm);
    if done {
        return Ok(SolveReport { iterations: 0, relative_residual: res });
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = raw_dot(&r, &z);
    for it in 1..=max_iter {
        apply(&p, &mut q);
        let pq = raw_dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            return Err(SolveReport { iterations: it, relative_residual: res });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        (res, done) = stop.measure(&r, b_norm);
        if done {
            return Ok(SolveReport { iterations: it, relative_residual: res });
        }
        precond(&r, &mut z);
        let rz_new = raw_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveReport { iterations: max_iter, relative_residual: res })
}

/// Right-preconditioned BiCGStab for general non-singular operators.
/// Stops when `||b - A x||_2 <= tol * ||b||_2`.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport, SolveReport> {
    let n = b.len();
    let b_norm = raw_dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveReport::default());
    }
    let rel = |r: &[f64]| raw_dot(r, r).sqrt() / b_norm;
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = rel(&r);
    if res <= tol {
        return Ok(SolveReport { iterations: 0, relative_residual: res });
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = raw_dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(SolveReport { iterations: it, relative_residual: res });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut p_hat);
        apply(&p_hat, &mut v);
        let rv = raw_dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return Err(SolveReport { iterations: it, relative_residual: res });
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let s_res = rel(&s);
        if s_res <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(SolveReport { iterations: it, relative_residual: s_res });
        }
        precond(&s, &mut s_hat);
        apply(&s_hat, &mut t);
        let tt = raw_dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            return Err(SolveReport { iterations: it, relative_residual: s_res });
        }
        omega = raw_dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = rel(&r);
        if res <= tol {
            return Ok(SolveReport { iterations: it, relative_residual: res });
        }
        if omega == 0.0 {
            return Err(SolveReport { iterations: it, relative_residual: res });
        }
    }
    Err(SolveReport { iterations: max_iter, relative_residual: res })
}

pub fn identity(r: &[f64], z: &mut [f64]) {
    z.copy_from_slice(r);
}

#[cfg(test)]
mod tests {
    use super::*;

    // 1D Dirichlet Laplacian plus a shift, with an optional advection part.
    fn tridiag(shift: f64, skew: f64) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            let n = x.len();
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = (2.0 + shift) * x[i] - l - r + skew * (r - l);
            }
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 50;
        let a = tridiag(0.1, 0.0);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let rep = pcg(&a, identity, &b, &mut x, Stop::Relative(1e-12), 200).unwrap();
        let mut ax = vec![0.0; n];
        a(&x, &mut ax);
        let err = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err} after {rep:?}");
        let rep2 = pcg(&a, identity, &b, &mut x, Stop::MaxAbs(1e-9), 200).unwrap();
        assert_eq!(rep2.iterations, 0);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let n = 60;
        let a = tridiag(0.5, 0.3);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let mut x = vec![0.0; n];
        bicgstab(&a, |r: &[f64], z: &mut [f64]| z.iter_mut().zip(r).for_each(|(z, r)| *z = r / 2.5), &b, &mut x, 1e-12, 500)
            .unwrap();
        let mut ax = vec![0.0; n];
        a(&x, &mut ax);
        let err = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let n = 200;
        let a = tridiag(0.0, 0.0);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let err = pcg(&a, identity, &b, &mut x, Stop::Relative(1e-14), 3).unwrap_err();
        assert_eq!(err.iterations, 3);
        assert!(err.relative_residual > 1e-14);
    }
}
