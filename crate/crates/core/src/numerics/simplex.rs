//! Phase-1 feasibility LP for the active-set QP solver.
//!
//! Minimizes the sum of artificial variables for the constraint system
//! `A x ≤ b`, `E x = e` with free `x`. A positive optimum is a certificate
//! of primal infeasibility; a zero optimum yields a feasible starting point.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-11;
const PRICE_TOL: f64 = 1e-9;

#[derive(Debug)]
pub(crate) enum Phase1Outcome {
    /// A point satisfying all constraints (up to roundoff).
    Feasible(DVector<f64>),
    /// Minimum total infeasibility stayed positive.
    Infeasible { objective: f64 },
    /// Bland's rule should terminate; this is a numerical safety net.
    IterationLimit,
}

/// Run the phase-1 simplex. `ineq`/`ineq_rhs` hold `A x ≤ b`; the optional
/// pair holds equalities.
pub(crate) fn phase1(
    ineq: &DMatrix<f64>,
    ineq_rhs: &DVector<f64>,
    eq: Option<(&DMatrix<f64>, &DVector<f64>)>,
    max_iter: usize,
) -> Phase1Outcome {
    let n = ineq.ncols();
    let m = ineq.nrows();
    let p = eq.map_or(0, |(e, _)| e.nrows());
    let rows = m + p;
    if rows == 0 {
        return Phase1Outcome::Feasible(DVector::zeros(n));
    }

    // Columns: x+ (n) | x- (n) | slacks (m) | artificials (counted below).
    // Every row is scaled so its right-hand side is nonnegative.
    let mut needs_art = vec![false; rows];
    let mut n_art = 0;
    for i in 0..m {
        if ineq_rhs[i] < 0.0 {
            needs_art[i] = true;
            n_art += 1;
        }
    }
    for j in 0..p {
        needs_art[m + j] = true;
        n_art += 1;
    }
    let cols = 2 * n + m + n_art;
    let mut t = DMatrix::<f64>::zeros(rows, cols + 1);
    let mut basis = vec![0usize; rows];

    let mut art_col = 2 * n + m;
    for i in 0..rows {
        let (coeffs, rhs): (Vec<f64>, f64) = if i < m {
            ((0..n).map(|j| ineq[(i, j)]).collect(), ineq_rhs[i])
        } else {
            let (e, r) = eq.unwrap();
            ((0..n).map(|j| e[(i - m, j)]).collect(), r[i - m])
        };
        let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * coeffs[j];
            t[(i, n + j)] = -sign * coeffs[j];
        }
        if i < m {
            t[(i, 2 * n + i)] = sign;
        }
        t[(i, cols)] = sign * rhs;
        if needs_art[i] {
            t[(i, art_col)] = 1.0;
            basis[i] = art_col;
            art_col += 1;
        } else {
            basis[i] = 2 * n + i;
        }
    }

    // Reduced-cost row for min Σ artificials: price[j] = Σ over artificial
    // rows of t[i][j]; entering columns have price > 0.
    let art_start = 2 * n + m;
    let mut price = DVector::<f64>::zeros(cols + 1);
    for i in 0..rows {
        if basis[i] >= art_start {
            for j in 0..=cols {
                price[j] += t[(i, j)];
            }
        }
    }
    for j in art_start..cols {
        price[j] -= 1.0;
    }

    for _ in 0..max_iter {
        // Bland: smallest-index favorable column.
        let mut entering = None;
        for j in 0..cols {
            if price[j] > PRICE_TOL {
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else {
            return finish(&t, &basis, n, cols, art_start);
        };

        // Ratio test; Bland tie-break on smallest basis index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a = t[(i, col)];
            if a > PIVOT_TOL {
                let ratio = t[(i, cols)] / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 || (ratio < lr + 1e-12 && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = leave else {
            // Phase-1 objective is bounded below by zero, so an unbounded
            // direction can only be numerical noise.
            return Phase1Outcome::IterationLimit;
        };

        // Pivot.
        let piv = t[(row, col)];
        for j in 0..=cols {
            t[(row, j)] /= piv;
        }
        for i in 0..rows {
            if i != row {
                let f = t[(i, col)];
                if f != 0.0 {
                    for j in 0..=cols {
                        t[(i, j)] -= f * t[(row, j)];
                    }
                }
            }
        }
        let f = price[col];
        if f != 0.0 {
            for j in 0..=cols {
                price[j] -= f * t[(row, j)];
            }
        }
        basis[row] = col;
    }
    Phase1Outcome::IterationLimit
}

fn finish(
    t: &DMatrix<f64>,
    basis: &[usize],
    n: usize,
    cols: usize,
    art_start: usize,
) -> Phase1Outcome {
    let mut objective = 0.0;
    for (i, &b) in basis.iter().enumerate() {
        if b >= art_start {
            objective += t[(i, cols)];
        }
    }
    if objective > 1e-8 {
        return Phase1Outcome::Infeasible { objective };
    }
    let mut x = DVector::<f64>::zeros(n);
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] += t[(i, cols)];
        } else if b < 2 * n {
            x[b - n] -= t[(i, cols)];
        }
    }
    Phase1Outcome::Feasible(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_halfspace() {
        // u >= 1  <=>  -u <= -1
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let b = DVector::from_row_slice(&[-1.0]);
        match phase1(&a, &b, None, 200) {
            Phase1Outcome::Feasible(x) => assert!(-x[0] <= -1.0 + 1e-9),
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn infeasible_box() {
        // u <= -1 and u >= 1
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_row_slice(&[-1.0, -1.0]);
        match phase1(&a, &b, None, 200) {
            Phase1Outcome::Infeasible { objective } => assert!(objective > 1e-8),
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn equality_with_inequalities() {
        // x + y = 3, x <= 1, y <= 5
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_row_slice(&[1.0, 5.0]);
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let r = DVector::from_row_slice(&[3.0]);
        match phase1(&a, &b, Some((&e, &r)), 200) {
            Phase1Outcome::Feasible(x) => {
                assert!((x[0] + x[1] - 3.0).abs() <= 1e-9);
                assert!(x[0] <= 1.0 + 1e-9);
                assert!(x[1] <= 5.0 + 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn zero_row_infeasible() {
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let b = DVector::from_row_slice(&[-0.5]);
        match phase1(&a, &b, None, 200) {
            Phase1Outcome::Infeasible { objective } => {
                assert!((objective - 0.5).abs() <= 1e-9)
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }
}
