//! Jacobi-preconditioned conjugate gradients for matrix-free SPD operators.

use crate::error::{CryoError, Result};

/// A symmetric positive-definite operator applied without assembling a matrix.
pub trait SpdOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` starting from the contents of `x`; stops once `‖b − A x‖ ≤ tol ‖b‖`.
pub fn pcg<A: SpdOperator>(
    op: &A,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);

    let diag = op.diagonal();
    if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(CryoError::LinearSolveFailure {
            iterations: 0,
            residual: f64::NAN,
            reason: "operator diagonal is not positive".into(),
        });
    }

    let b_norm = dot(b, b).sqrt();
    let mut ax = vec![0.0; n];
    op.apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let threshold = tol * b_norm;
    let mut r_norm = dot(&r, &r).sqrt();
    if r_norm <= threshold {
        return Ok(CgReport {
            iterations: 0,
            relative_residual: relative(r_norm, b_norm),
        });
    }

    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(CryoError::LinearSolveFailure {
                iterations: it,
                residual: relative(r_norm, b_norm),
                reason: format!("curvature p·Ap = {pap:e} is not positive"),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        r_norm = dot(&r, &r).sqrt();
        if r_norm <= threshold {
            return Ok(CgReport {
                iterations: it,
                relative_residual: relative(r_norm, b_norm),
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err(CryoError::LinearSolveFailure {
        iterations: max_iter,
        residual: relative(r_norm, b_norm),
        reason: "iteration limit reached".into(),
    })
}

fn relative(r: f64, b: f64) -> f64 {
    if b > 0.0 {
        r / b
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense(Vec<Vec<f64>>);

    impl SpdOperator for Dense {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], out: &mut [f64]) {
            for (o, row) in out.iter_mut().zip(&self.0) {
                *o = dot(row, x);
            }
        }
        fn diagonal(&self) -> Vec<f64> {
            (0..self.0.len()).map(|i| self.0[i][i]).collect()
        }
    }

    #[test]
    fn solves_badly_scaled_spd_system() {
        let a = Dense(vec![
            vec![1e4, 1.0, 0.0],
            vec![1.0, 2.0, 0.1],
            vec![0.0, 0.1, 1e-2],
        ]);
        let exact = [1.0, -2.0, 3.0];
        let mut b = vec![0.0; 3];
        a.apply(&exact, &mut b);
        let mut x = vec![0.0; 3];
        let rep = pcg(&a, &b, &mut x, 1e-13, 30).unwrap();
        assert!(rep.iterations <= 10);
        for (xi, ei) in x.iter().zip(exact) {
            assert!((xi - ei).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_initial_guess_takes_no_iterations() {
        let a = Dense(vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
        let mut x = vec![1.0, 1.0];
        let rep = pcg(&a, &[2.0, 3.0], &mut x, 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(x, vec![1.0, 1.0]);
    }

    #[test]
    fn indefinite_operator_fails() {
        let a = Dense(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        let mut x = vec![0.0, 0.0];
        let err = pcg(&a, &[1.0, -1.0], &mut x, 1e-12, 10).unwrap_err();
        assert!(matches!(err, CryoError::LinearSolveFailure { .. }));
    }
}
