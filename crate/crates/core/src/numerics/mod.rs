//! Dense linear-algebra kernels and a small convex QP solver.
//!
//! Everything here operates on `nalgebra` dense matrices. Problems are tiny
//! (tens of variables), so all factorizations are direct and allocation is
//! not a concern.

mod qp;
mod simplex;

pub use qp::{
    kkt_residual, solve_qp, solve_qp_bounded, solve_qp_from, QpProblem, QpSolution, QpStatus,
    FEAS_TOL, KKT_TOL,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors produced by the numerics layer.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is singular or not positive definite (pivot {pivot:.3e} at index {index})")]
    Singular { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("iteration limit of {0} reached")]
    MaxIter(usize),
    #[error("fixed-point iteration did not converge within {0} iterations")]
    Divergence(usize),
}

/// Max absolute entry of a matrix; zero for empty matrices.
pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<(), NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = max_abs(m).max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > tol * scale {
        return Err(NumericsError::NotSymmetric(worst));
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// If a pivot is non-positive, a single jitter of `1e-10 * trace(M) / n` is
/// added to the diagonal and the factorization retried; a second failure is
/// reported as [`NumericsError::Singular`]. The jitter is applied at most
/// once so that downstream log-determinants stay trustworthy.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
    check_symmetric(m, 1e-10)?;
    match cholesky_raw(m) {
        Ok(l) => Ok(l),
        Err(_) => {
            let n = m.nrows();
            let jitter = 1e-10 * m.trace() / n.max(1) as f64;
            let mut jittered = m.clone();
            for i in 0..n {
                jittered[(i, i)] += jitter;
            }
            cholesky_raw(&jittered)
        }
    }
}

fn cholesky_raw(m: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(NumericsError::Singular {
                index: j,
                pivot: diag,
            });
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[(i, k)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    y
}

/// Solve `Lᵀ x = b` for lower-triangular `L`.
pub fn backward_substitute(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= l[(k, i)] * x[k];
        }
        x[i] = v / l[(i, i)];
    }
    x
}

/// LU solve with a couple of iterative-refinement passes.
///
/// Refinement keeps KKT residuals near machine level even when the slack
/// penalty makes the Hessian badly conditioned.
pub(crate) fn solve_lu_refined(
    mat: &DMatrix<f64>,
    rhs: &DVector<f64>,
    passes: usize,
) -> Option<DVector<f64>> {
    let lu = mat.clone().lu();
    let mut x = lu.solve(rhs)?;
    for _ in 0..passes {
        let r = rhs - mat * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        } else {
            break;
        }
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Solve the discrete Lyapunov equation in the form `P = A P Aᵀ + Q` by
/// fixed-point iteration.
///
/// Requires the spectral radius of `A` to be below one; convergence is
/// declared when `‖P − A P Aᵀ − Q‖ ≤ 1e-8 ‖Q‖` (max-abs norms).
pub fn solve_discrete_lyapunov(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, NumericsError> {
    const MAX_ITER: usize = 100_000;
    if a.nrows() != a.ncols() || a.shape() != q.shape() {
        return Err(NumericsError::Dimension(format!(
            "A is {}x{}, Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    check_symmetric(q, 1e-10)?;
    let tol = 1e-8 * max_abs(q).max(f64::MIN_POSITIVE);
    let mut p = q.clone();
    for _ in 0..MAX_ITER {
        let next = a * &p * a.transpose() + q;
        let residual = max_abs(&(&next - a * &next * a.transpose() - q));
        p = next;
        if residual <= tol {
            // enforce exact symmetry lost to roundoff
            let sym = (&p + p.transpose()) * 0.5;
            return Ok(sym);
        }
        if !residual.is_finite() {
            return Err(NumericsError::Divergence(MAX_ITER));
        }
    }
    Err(NumericsError::Divergence(MAX_ITER))
}

/// Variant solving the conventional cost-to-go form `P = Aᵀ P A + Q`.
pub fn solve_discrete_lyapunov_transposed(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, NumericsError> {
    solve_discrete_lyapunov(&a.transpose(), q)
}
