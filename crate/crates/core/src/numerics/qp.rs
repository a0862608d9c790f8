//! Dense primal active-set solver for small convex quadratic programs.
//!
//! ```text
//!     minimize    1/2 zᵀ H z + cᵀ z
//!     subject to  A z ≤ b,   E z = e
//! ```
//!
//! A phase-1 simplex provides a feasible starting point (or an infeasibility
//! certificate); phase 2 is the textbook primal active-set iteration. The
//! method is exact up to factorization roundoff, warm-startable, and returns
//! clean `Infeasible` verdicts, which the backup-horizon search relies on.

use super::simplex::{phase1, Phase1Outcome};
use super::{check_symmetric, solve_lu_refined, NumericsError};
use nalgebra::{DMatrix, DVector};

/// Componentwise primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// KKT residual a solution reported `Optimal` must satisfy.
pub const KKT_TOL: f64 = 1e-6;
/// Default iteration cap shared by both phases.
pub const DEFAULT_MAX_ITER: usize = 500;

const STEP_TOL: f64 = 1e-11;
const DUAL_TOL: f64 = 1e-9;

/// Termination status of a QP solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// A convex QP instance. Constructed through [`QpProblem::new`], which
/// enforces dimension consistency and Hessian symmetry.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear_cost: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_upper: DVector<f64>,
    pub eq_matrix: Option<DMatrix<f64>>,
    pub eq_rhs: Option<DVector<f64>>,
}

impl QpProblem {
    pub fn new(
        hessian: DMatrix<f64>,
        linear_cost: DVector<f64>,
        ineq_matrix: DMatrix<f64>,
        ineq_upper: DVector<f64>,
        eq_matrix: Option<DMatrix<f64>>,
        eq_rhs: Option<DVector<f64>>,
    ) -> Result<Self, NumericsError> {
        let n = hessian.nrows();
        check_symmetric(&hessian, 1e-10)?;
        if linear_cost.len() != n {
            return Err(NumericsError::Dimension(format!(
                "linear cost has length {}, expected {}",
                linear_cost.len(),
                n
            )));
        }
        if ineq_matrix.ncols() != n && ineq_matrix.nrows() > 0 {
            return Err(NumericsError::Dimension(format!(
                "inequality matrix has {} columns, expected {}",
                ineq_matrix.ncols(),
                n
            )));
        }
        if ineq_matrix.nrows() != ineq_upper.len() {
            return Err(NumericsError::Dimension(format!(
                "{} inequality rows but {} bounds",
                ineq_matrix.nrows(),
                ineq_upper.len()
            )));
        }
        match (&eq_matrix, &eq_rhs) {
            (Some(e), Some(r)) => {
                if e.ncols() != n || e.nrows() != r.len() {
                    return Err(NumericsError::Dimension(
                        "equality block dimensions inconsistent".into(),
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return Err(NumericsError::Dimension(
                    "equality matrix and rhs must be provided together".into(),
                ))
            }
        }
        let all_finite = hessian.iter().all(|v| v.is_finite())
            && linear_cost.iter().all(|v| v.is_finite())
            && ineq_matrix.iter().all(|v| v.is_finite())
            && ineq_upper.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(NumericsError::Dimension("non-finite problem data".into()));
        }
        Ok(Self {
            hessian,
            linear_cost,
            ineq_matrix,
            ineq_upper,
            eq_matrix,
            eq_rhs,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_matrix.nrows()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_matrix.as_ref().map_or(0, |e| e.nrows())
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * (self.hessian.clone() * z).dot(z) + self.linear_cost.dot(z)
    }
}

/// Solver output. `phase1_objective` is positive exactly when the status is
/// `Infeasible` and certifies the minimum total constraint violation.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub primal: DVector<f64>,
    pub dual_ineq: DVector<f64>,
    pub dual_eq: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub phase1_objective: f64,
}

/// Independent KKT residual: stationarity, primal feasibility, dual
/// feasibility and complementarity, reduced to a single max-norm scalar.
/// Recomputes everything from the problem data.
pub fn kkt_residual(
    p: &QpProblem,
    primal: &DVector<f64>,
    dual_ineq: &DVector<f64>,
    dual_eq: &DVector<f64>,
) -> f64 {
    let mut stationarity = &p.hessian * primal + &p.linear_cost;
    if p.num_ineq() > 0 {
        stationarity += p.ineq_matrix.transpose() * dual_ineq;
    }
    if let Some(e) = &p.eq_matrix {
        stationarity += e.transpose() * dual_eq;
    }
    let mut worst = stationarity.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    if p.num_ineq() > 0 {
        let slack = &p.ineq_matrix * primal - &p.ineq_upper;
        for i in 0..slack.len() {
            worst = worst.max(slack[i]); // primal feasibility
            worst = worst.max(-dual_ineq[i]); // dual feasibility
            worst = worst.max((dual_ineq[i] * slack[i]).abs()); // complementarity
        }
    }
    if let (Some(e), Some(r)) = (&p.eq_matrix, &p.eq_rhs) {
        let viol = e * primal - r;
        worst = worst.max(viol.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    }
    worst
}

/// Solve a QP from scratch.
pub fn solve_qp(p: &QpProblem) -> QpSolution {
    solve_qp_from(p, None)
}

/// Solve a QP, optionally skipping phase 1 when the caller can supply a
/// feasible point (the MPC layer constructs one from the slack structure).
pub fn solve_qp_from(p: &QpProblem, start: Option<&DVector<f64>>) -> QpSolution {
    solve_qp_bounded(p, start, DEFAULT_MAX_ITER)
}

/// Solve with an explicit iteration cap shared by both phases.
pub fn solve_qp_bounded(
    p: &QpProblem,
    start: Option<&DVector<f64>>,
    max_iter: usize,
) -> QpSolution {
    let n = p.num_vars();
    let m = p.num_ineq();

    // Constant rows (all-zero gradient) decide feasibility outright.
    for i in 0..m {
        let row_scale = (0..n).fold(0.0_f64, |a, j| a.max(p.ineq_matrix[(i, j)].abs()));
        if row_scale == 0.0 && p.ineq_upper[i] < -FEAS_TOL {
            return infeasible_solution(p, -p.ineq_upper[i]);
        }
    }

    let x0 = match start {
        Some(z) if z.len() == n && is_feasible(p, z, 1e-9) => z.clone(),
        _ => {
            let eq = p
                .eq_matrix
                .as_ref()
                .map(|e| (e, p.eq_rhs.as_ref().expect("validated")));
            match phase1(&p.ineq_matrix, &p.ineq_upper, eq, max_iter) {
                Phase1Outcome::Feasible(x) => x,
                Phase1Outcome::Infeasible { objective } => {
                    return infeasible_solution(p, objective)
                }
                Phase1Outcome::IterationLimit => {
                    return max_iter_solution(p, DVector::zeros(n), max_iter)
                }
            }
        }
    };

    active_set(p, x0, max_iter)
}

fn is_feasible(p: &QpProblem, z: &DVector<f64>, tol: f64) -> bool {
    if p.num_ineq() > 0 {
        let slack = &p.ineq_matrix * z - &p.ineq_upper;
        if slack.iter().any(|v| *v > tol) {
            return false;
        }
    }
    if let (Some(e), Some(r)) = (&p.eq_matrix, &p.eq_rhs) {
        let viol = e * z - r;
        if viol.iter().any(|v| v.abs() > tol) {
            return false;
        }
    }
    true
}

fn infeasible_solution(p: &QpProblem, certificate: f64) -> QpSolution {
    QpSolution {
        status: QpStatus::Infeasible,
        primal: DVector::zeros(p.num_vars()),
        dual_ineq: DVector::zeros(p.num_ineq()),
        dual_eq: DVector::zeros(p.num_eq()),
        objective: f64::INFINITY,
        kkt_residual: f64::INFINITY,
        iterations: 0,
        phase1_objective: certificate,
    }
}

fn max_iter_solution(p: &QpProblem, primal: DVector<f64>, iterations: usize) -> QpSolution {
    let objective = p.objective(&primal);
    QpSolution {
        status: QpStatus::MaxIter,
        primal,
        dual_ineq: DVector::zeros(p.num_ineq()),
        dual_eq: DVector::zeros(p.num_eq()),
        objective,
        kkt_residual: f64::INFINITY,
        iterations,
        phase1_objective: 0.0,
    }
}

/// Primal active-set iteration (Nocedal & Wright, alg. 16.3). The working
/// set starts with the equalities only; blocking constraints are added one
/// at a time, which keeps the working-set rows linearly independent.
fn active_set(p: &QpProblem, mut x: DVector<f64>, max_iter: usize) -> QpSolution {
    let n = p.num_vars();
    let m = p.num_ineq();
    let n_eq = p.num_eq();
    let mut working: Vec<usize> = Vec::new();

    for iter in 0..max_iter {
        let g = &p.hessian * &x + &p.linear_cost;
        let w = working.len();
        let dim = n + n_eq + w;

        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
        if let Some(e) = &p.eq_matrix {
            for r in 0..n_eq {
                for j in 0..n {
                    kkt[(n + r, j)] = e[(r, j)];
                    kkt[(j, n + r)] = e[(r, j)];
                }
            }
        }
        for (k, &ci) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(n + n_eq + k, j)] = p.ineq_matrix[(ci, j)];
                kkt[(j, n + n_eq + k)] = p.ineq_matrix[(ci, j)];
            }
        }
        let mut rhs = DVector::<f64>::zeros(dim);
        for j in 0..n {
            rhs[j] = -g[j];
        }

        let Some(sol) = solve_lu_refined(&kkt, &rhs, 2) else {
            return max_iter_solution(p, x, iter);
        };
        let step = sol.rows(0, n).into_owned();
        let step_norm = step.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let x_scale = x.iter().fold(1.0_f64, |a, v| a.max(v.abs()));

        if step_norm <= STEP_TOL * x_scale {
            // At the EQP optimum for this working set. The step is far below
            // the feasibility tolerance, so apply it unconditionally: the
            // KKT stationarity certificate holds at x + p, not at x.
            x += &step;
            // Check the working-set multipliers.
            let mut most_negative: Option<(usize, f64)> = None;
            for (k, &ci) in working.iter().enumerate() {
                let lambda = sol[n + n_eq + k];
                if lambda < -DUAL_TOL {
                    match most_negative {
                        None => most_negative = Some((k, lambda)),
                        Some((_, best)) if lambda < best => most_negative = Some((k, lambda)),
                        _ => {}
                    }
                    let _ = ci;
                }
            }
            match most_negative {
                Some((k, _)) => {
                    working.remove(k);
                    continue;
                }
                None => {
                    let mut dual_ineq = DVector::<f64>::zeros(m);
                    for (k, &ci) in working.iter().enumerate() {
                        dual_ineq[ci] = sol[n + n_eq + k].max(0.0);
                    }
                    let dual_eq = sol.rows(n, n_eq).into_owned();
                    let objective = p.objective(&x);
                    let kkt_res = kkt_residual(p, &x, &dual_ineq, &dual_eq);
                    // Optimal status is only reported with a certified
                    // residual. The certification floor scales with the
                    // problem data: a backward-stable solve cannot land
                    // below eps * |H| * |z|.
                    let data_scale = super::max_abs(&p.hessian)
                        .max(super::max_abs(&p.ineq_matrix))
                        .max(1.0);
                    let floor = 64.0 * f64::EPSILON * data_scale * x.amax().max(1.0);
                    if kkt_res > KKT_TOL.max(floor) {
                        return max_iter_solution(p, x, iter);
                    }
                    return QpSolution {
                        status: QpStatus::Optimal,
                        primal: x,
                        dual_ineq,
                        dual_eq,
                        objective,
                        kkt_residual: kkt_res,
                        iterations: iter + 1,
                        phase1_objective: 0.0,
                    };
                }
            }
        }

        // Ratio test against constraints outside the working set.
        let mut alpha = 1.0_f64;
        let mut blocker: Option<usize> = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let mut dir = 0.0;
            for j in 0..n {
                dir += p.ineq_matrix[(i, j)] * step[j];
            }
            if dir > 1e-12 {
                let mut slack = p.ineq_upper[i];
                for j in 0..n {
                    slack -= p.ineq_matrix[(i, j)] * x[j];
                }
                let ratio = (slack / dir).max(0.0);
                if ratio < alpha - 1e-15 {
                    alpha = ratio;
                    blocker = Some(i);
                }
            }
        }

        x += step * alpha;
        if let Some(i) = blocker {
            working.push(i);
        }
    }
    max_iter_solution(p, x, max_iter)
}
