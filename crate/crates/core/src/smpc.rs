//! Deterministic tightened OCP in condensed form, the minimal backup-horizon
//! slack relaxation, and the resulting MPC control law.
//!
//! The prediction states are eliminated (`x_{τ|t} = A^τ x + Σ A^{τ-1-j} B u_j`),
//! which turns each solve into a dense QP over the `N·d_u` inputs plus `B·d_c`
//! slacks. With `N = 10` and one input this is a ~10-variable QP solved many
//! thousands of times per run, so everything static is precompiled once.

use crate::numerics::{solve_qp_from, NumericsError, QpProblem, QpSolution, QpStatus};
use crate::plant::AffineConstraint;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmpcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid OCP specification: {0}")]
    Invalid(String),
    #[error("OCP infeasible even with every prediction step relaxed")]
    Infeasible,
    #[error("QP solver hit its iteration cap")]
    SolverStall,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Stacked constraint-tightening parameters: one block of `d_c` entries per
/// prediction step `τ = 0..N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TighteningVector {
    g: DVector<f64>,
    d_c: usize,
}

impl TighteningVector {
    pub fn new(g: DVector<f64>, d_c: usize) -> Result<Self, SmpcError> {
        if d_c == 0 || !g.len().is_multiple_of(d_c) {
            return Err(SmpcError::Dimension(format!(
                "tightening vector of length {} does not split into blocks of {}",
                g.len(),
                d_c
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(SmpcError::Invalid("non-finite tightening entries".into()));
        }
        Ok(Self { g, d_c })
    }

    pub fn zeros(steps: usize, d_c: usize) -> Self {
        Self {
            g: DVector::zeros(steps * d_c),
            d_c,
        }
    }

    pub fn num_steps(&self) -> usize {
        self.g.len() / self.d_c
    }

    pub fn block_dim(&self) -> usize {
        self.d_c
    }

    pub fn block(&self, tau: usize) -> nalgebra::DVectorView<'_, f64> {
        self.g.rows(tau * self.d_c, self.d_c)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.g
    }
}

/// The deterministic OCP data plus everything precomputable about its
/// condensed form.
#[derive(Debug, Clone)]
pub struct OcpSpec {
    pub horizon: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub input_lower: DVector<f64>,
    pub input_upper: DVector<f64>,
    pub constraint: AffineConstraint,
    pub slack_weight: f64,
    // condensed data
    a_pows: Vec<DMatrix<f64>>,
    s_mats: Vec<DMatrix<f64>>,
    h_uu: DMatrix<f64>,
    cost_map: DMatrix<f64>,
    state_rows_u: Vec<DMatrix<f64>>,
}

fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<(), SmpcError> {
    crate::numerics::check_symmetric(m, 1e-10)
        .map_err(|e| SmpcError::Invalid(format!("{name}: {e}")))?;
    let eig = m.clone().symmetric_eigenvalues();
    let scale = eig.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if eig.iter().any(|v| *v < -1e-10 * scale) {
        return Err(SmpcError::Invalid(format!("{name} is not PSD")));
    }
    Ok(())
}

impl OcpSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: usize,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p: DMatrix<f64>,
        input_lower: DVector<f64>,
        input_upper: DVector<f64>,
        constraint: AffineConstraint,
        slack_weight: f64,
    ) -> Result<Self, SmpcError> {
        let d_x = a.nrows();
        let d_u = b.ncols();
        if horizon == 0 {
            return Err(SmpcError::Invalid("horizon must be at least 1".into()));
        }
        if a.ncols() != d_x || b.nrows() != d_x {
            return Err(SmpcError::Dimension("A/B dimensions inconsistent".into()));
        }
        if q.nrows() != d_x || p.nrows() != d_x || r.nrows() != d_u {
            return Err(SmpcError::Dimension("cost matrix dimensions".into()));
        }
        check_psd(&q, "Q")?;
        check_psd(&p, "P")?;
        check_psd(&r, "R")?;
        let r_eig = r.clone().symmetric_eigenvalues();
        if r_eig.iter().any(|v| *v <= 0.0) {
            return Err(SmpcError::Invalid("R must be positive definite".into()));
        }
        if input_lower.len() != d_u || input_upper.len() != d_u {
            return Err(SmpcError::Dimension("input box dimensions".into()));
        }
        for i in 0..d_u {
            if !matches!(
                input_lower[i].partial_cmp(&input_upper[i]),
                Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
            ) {
                return Err(SmpcError::Invalid(format!("input box empty at {i}")));
            }
        }
        if constraint.h_x.ncols() != d_x {
            return Err(SmpcError::Dimension("constraint column count".into()));
        }
        if !(slack_weight.is_finite() && slack_weight > 0.0) {
            return Err(SmpcError::Invalid("slack weight must be positive".into()));
        }

        let n = horizon;
        let n_u = n * d_u;

        let mut a_pows = Vec::with_capacity(n + 1);
        a_pows.push(DMatrix::identity(d_x, d_x));
        for tau in 1..=n {
            let next = &a * &a_pows[tau - 1];
            a_pows.push(next);
        }

        // S_τ maps the stacked inputs to x_{τ|t}: block j is A^{τ-1-j} B.
        let mut s_mats = Vec::with_capacity(n + 1);
        for tau in 0..=n {
            let mut s = DMatrix::zeros(d_x, n_u);
            for j in 0..tau.min(n) {
                let block = &a_pows[tau - 1 - j] * &b;
                s.view_mut((0, j * d_u), (d_x, d_u)).copy_from(&block);
            }
            s_mats.push(s);
        }

        let mut h_uu = DMatrix::<f64>::zeros(n_u, n_u);
        let mut cost_map = DMatrix::<f64>::zeros(n_u, d_x);
        for tau in 1..n {
            h_uu += s_mats[tau].transpose() * &q * &s_mats[tau];
            cost_map += s_mats[tau].transpose() * &q * &a_pows[tau];
        }
        h_uu += s_mats[n].transpose() * &p * &s_mats[n];
        cost_map += s_mats[n].transpose() * &p * &a_pows[n];
        for tau in 0..n {
            for i in 0..d_u {
                for j in 0..d_u {
                    h_uu[(tau * d_u + i, tau * d_u + j)] += r[(i, j)];
                }
            }
        }
        h_uu *= 2.0;
        cost_map *= 2.0;
        // symmetrize away accumulation roundoff
        h_uu = (&h_uu + h_uu.transpose()) * 0.5;

        let state_rows_u = (0..n).map(|tau| &constraint.h_x * &s_mats[tau]).collect();

        Ok(Self {
            horizon,
            a,
            b,
            q,
            r,
            p,
            input_lower,
            input_upper,
            constraint,
            slack_weight,
            a_pows,
            s_mats,
            h_uu,
            cost_map,
            state_rows_u,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn constraint_dim(&self) -> usize {
        self.constraint.num_rows()
    }

    pub fn tightening_dim(&self) -> usize {
        self.horizon * self.constraint_dim()
    }

    /// Immediate cost `xᵀQx + uᵀRu`.
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (&self.q * x).dot(x) + (&self.r * u).dot(u)
    }

    /// Predicted state `x_{τ|t}` for stacked inputs `u`.
    fn predicted_state(&self, x: &DVector<f64>, u: &DVector<f64>, tau: usize) -> DVector<f64> {
        &self.a_pows[tau] * x + &self.s_mats[tau] * u
    }

    fn check_build_args(
        &self,
        x: &DVector<f64>,
        gamma: &TighteningVector,
        backup: usize,
    ) -> Result<(), SmpcError> {
        if x.len() != self.state_dim() {
            return Err(SmpcError::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.state_dim()
            )));
        }
        if gamma.as_vector().len() != self.tightening_dim()
            || gamma.block_dim() != self.constraint_dim()
        {
            return Err(SmpcError::Dimension(format!(
                "tightening vector has length {}, expected {}",
                gamma.as_vector().len(),
                self.tightening_dim()
            )));
        }
        if backup > self.horizon {
            return Err(SmpcError::Dimension(format!(
                "backup horizon {} exceeds N = {}",
                backup, self.horizon
            )));
        }
        Ok(())
    }
}

/// Assemble the condensed QP for state `x`, tightening `γ`, and backup
/// horizon `B`. Decision vector: `(u_0..u_{N-1}, s_0..s_{B-1})`; the first
/// `B` prediction steps carry nonnegative slacks, the rest are hard.
pub fn build_qp(
    spec: &OcpSpec,
    x: &DVector<f64>,
    gamma: &TighteningVector,
    backup: usize,
) -> Result<QpProblem, SmpcError> {
    spec.check_build_args(x, gamma, backup)?;
    let n = spec.horizon;
    let d_u = spec.input_dim();
    let d_c = spec.constraint_dim();
    let n_u = n * d_u;
    let n_s = backup * d_c;
    let n_z = n_u + n_s;
    let m = 2 * n_u + n * d_c + n_s;

    let mut hessian = DMatrix::<f64>::zeros(n_z, n_z);
    hessian.view_mut((0, 0), (n_u, n_u)).copy_from(&spec.h_uu);
    for k in 0..n_s {
        hessian[(n_u + k, n_u + k)] = 2.0 * spec.slack_weight;
    }

    let mut linear = DVector::<f64>::zeros(n_z);
    let cu = &spec.cost_map * x;
    for j in 0..n_u {
        linear[j] = cu[j];
    }

    let mut a_ineq = DMatrix::<f64>::zeros(m, n_z);
    let mut b_ineq = DVector::<f64>::zeros(m);
    let mut row = 0;

    // input box: u ≤ upper, −u ≤ −lower
    for tau in 0..n {
        for i in 0..d_u {
            a_ineq[(row, tau * d_u + i)] = 1.0;
            b_ineq[row] = spec.input_upper[i];
            row += 1;
        }
    }
    for tau in 0..n {
        for i in 0..d_u {
            a_ineq[(row, tau * d_u + i)] = -1.0;
            b_ineq[row] = -spec.input_lower[i];
            row += 1;
        }
    }

    // tightened state constraints, slack-relaxed for τ < B
    for tau in 0..n {
        let free = &spec.constraint.h_x * (&spec.a_pows[tau] * x);
        let g_tau = gamma.block(tau);
        for c in 0..d_c {
            for j in 0..n_u {
                a_ineq[(row, j)] = spec.state_rows_u[tau][(c, j)];
            }
            if tau < backup {
                a_ineq[(row, n_u + tau * d_c + c)] = -1.0;
            }
            b_ineq[row] = spec.constraint.offset[c] - g_tau[c] - free[c];
            row += 1;
        }
    }

    // slack nonnegativity
    for k in 0..n_s {
        a_ineq[(row, n_u + k)] = -1.0;
        b_ineq[row] = 0.0;
        row += 1;
    }
    debug_assert_eq!(row, m);

    Ok(QpProblem::new(hessian, linear, a_ineq, b_ineq, None, None)?)
}

/// Cheap feasible candidate for the condensed QP: inputs at the in-box point
/// closest to zero, slacks absorbing whatever the relaxed rows violate.
/// Returns `None` when a hard (unrelaxed) row is violated at that input.
fn feasible_candidate(
    spec: &OcpSpec,
    x: &DVector<f64>,
    gamma: &TighteningVector,
    backup: usize,
) -> Option<DVector<f64>> {
    let n = spec.horizon;
    let d_u = spec.input_dim();
    let d_c = spec.constraint_dim();
    let n_u = n * d_u;
    let mut z = DVector::<f64>::zeros(n_u + backup * d_c);
    for tau in 0..n {
        for i in 0..d_u {
            z[tau * d_u + i] = 0.0_f64.clamp(spec.input_lower[i], spec.input_upper[i]);
        }
    }
    let u = z.rows(0, n_u).into_owned();
    for tau in 0..n {
        let xt = spec.predicted_state(x, &u, tau);
        let resid = spec.constraint.residual(&xt) + gamma.block(tau);
        for c in 0..d_c {
            if tau < backup {
                z[n_u + tau * d_c + c] = resid[c].max(0.0);
            } else if resid[c] > 1e-9 {
                return None;
            }
        }
    }
    Some(z)
}

/// Result of the backup-horizon search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackupHorizon {
    pub b: usize,
    /// Set when even `B = N−1` was infeasible and every step is relaxed.
    pub fully_relaxed: bool,
}

fn solve_with_min_backup(
    spec: &OcpSpec,
    x: &DVector<f64>,
    gamma: &TighteningVector,
) -> Result<(BackupHorizon, QpSolution), SmpcError> {
    for b in 0..=spec.horizon {
        let qp = build_qp(spec, x, gamma, b)?;
        let candidate = feasible_candidate(spec, x, gamma, b);
        let sol = solve_qp_from(&qp, candidate.as_ref());
        match sol.status {
            QpStatus::Optimal => {
                return Ok((
                    BackupHorizon {
                        b,
                        fully_relaxed: b == spec.horizon,
                    },
                    sol,
                ))
            }
            QpStatus::Infeasible => continue,
            QpStatus::MaxIter => return Err(SmpcError::SolverStall),
        }
    }
    Err(SmpcError::Infeasible)
}

/// Smallest backup horizon `B ∈ {0..N}` for which the tightened OCP is
/// feasible. Fails only when the input box itself is inconsistent.
pub fn min_backup_horizon(
    spec: &OcpSpec,
    x: &DVector<f64>,
    gamma: &TighteningVector,
) -> Result<BackupHorizon, SmpcError> {
    solve_with_min_backup(spec, x, gamma).map(|(b, _)| b)
}

/// Output of one MPC solve.
#[derive(Debug, Clone)]
pub struct MpcResult {
    pub u0: DVector<f64>,
    pub backup: BackupHorizon,
    pub full_input_sequence: Vec<DVector<f64>>,
    /// One slack vector per prediction step; zero for steps without slacks.
    pub slacks: Vec<DVector<f64>>,
    pub qp: QpSolution,
}

/// The control law: solve at the minimal backup horizon and return the first
/// input along with diagnostics.
pub fn mpc_control(
    spec: &OcpSpec,
    x: &DVector<f64>,
    gamma: &TighteningVector,
) -> Result<MpcResult, SmpcError> {
    let (backup, sol) = solve_with_min_backup(spec, x, gamma)?;
    let n = spec.horizon;
    let d_u = spec.input_dim();
    let d_c = spec.constraint_dim();
    let n_u = n * d_u;

    let mut inputs = Vec::with_capacity(n);
    for tau in 0..n {
        let mut u = DVector::<f64>::zeros(d_u);
        for i in 0..d_u {
            u[i] = sol.primal[tau * d_u + i].clamp(spec.input_lower[i], spec.input_upper[i]);
        }
        inputs.push(u);
    }
    let mut slacks = Vec::with_capacity(n);
    for tau in 0..n {
        let mut s = DVector::<f64>::zeros(d_c);
        if tau < backup.b {
            for c in 0..d_c {
                s[c] = sol.primal[n_u + tau * d_c + c].max(0.0);
            }
        }
        slacks.push(s);
    }

    Ok(MpcResult {
        u0: inputs[0].clone(),
        backup,
        full_input_sequence: inputs,
        slacks,
        qp: sol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::solve_qp;
    use approx::assert_relative_eq;

    fn scalar_constraint(h: f64, offset: f64) -> AffineConstraint {
        AffineConstraint::new(
            DMatrix::from_row_slice(1, 1, &[h]),
            DVector::from_row_slice(&[offset]),
        )
        .unwrap()
    }

    fn dcdc_constraint() -> AffineConstraint {
        AffineConstraint::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap()
    }

    fn dcdc_spec() -> OcpSpec {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0075, -0.143, 0.996]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 10.0]);
        let p = crate::numerics::solve_discrete_lyapunov(&a, &q).unwrap();
        OcpSpec::new(
            10,
            a,
            DMatrix::from_row_slice(2, 1, &[4.798, 0.115]),
            q,
            DMatrix::from_row_slice(1, 1, &[1.0]),
            p,
            DVector::from_row_slice(&[-0.2]),
            DVector::from_row_slice(&[0.2]),
            dcdc_constraint(),
            1e8,
        )
        .unwrap()
    }

    fn zero_gamma(spec: &OcpSpec) -> TighteningVector {
        TighteningVector::zeros(spec.horizon, spec.constraint_dim())
    }

    #[test]
    fn smallest_instance_matches_symbolic_expansion() {
        // N = 1, scalars: J = q x² + r u² + p (a x + b u)²
        let (a, b, q, r, p) = (0.8, 0.5, 1.0, 1.0, 2.0);
        let spec = OcpSpec::new(
            1,
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            DMatrix::from_element(1, 1, p),
            DVector::from_element(1, -10.0),
            DVector::from_element(1, 10.0),
            scalar_constraint(0.0, 1e9),
            1e8,
        )
        .unwrap();
        let x = DVector::from_element(1, 1.5);
        let qp = build_qp(&spec, &x, &zero_gamma(&spec), 0).unwrap();
        assert_relative_eq!(qp.hessian[(0, 0)], 2.0 * (r + p * b * b), epsilon = 1e-12);
        assert_relative_eq!(qp.linear_cost[0], 2.0 * p * a * b * x[0], epsilon = 1e-12);
        let sol = solve_qp(&qp);
        let expected_u = -(p * a * b * x[0]) / (r + p * b * b);
        assert_relative_eq!(sol.primal[0], expected_u, epsilon = 1e-9);
    }

    #[test]
    fn origin_is_feasible_and_optimal() {
        let spec = dcdc_spec();
        let res = mpc_control(&spec, &DVector::zeros(2), &zero_gamma(&spec)).unwrap();
        assert_eq!(res.backup.b, 0);
        assert!(res.u0.amax() <= 1e-8, "u0 = {}", res.u0);
    }

    #[test]
    fn full_relaxation_is_feasible_for_any_state() {
        let spec = dcdc_spec();
        let gamma = zero_gamma(&spec);
        for k in 0..20 {
            let x = DVector::from_fn(2, |i, _| ((k * 7 + i * 3) as f64).sin() * 50.0);
            let qp = build_qp(&spec, &x, &gamma, spec.horizon).unwrap();
            let sol = solve_qp(&qp);
            assert_eq!(sol.status, QpStatus::Optimal, "x = {x}");
        }
    }

    #[test]
    fn backup_zero_when_deep_inside() {
        let spec = dcdc_spec();
        let x = DVector::from_row_slice(&[-0.5, 0.0]);
        let b = min_backup_horizon(&spec, &x, &zero_gamma(&spec)).unwrap();
        assert_eq!(b.b, 0);
        assert!(!b.fully_relaxed);
        // at B = 0 the slacks are absent from the decision vector entirely
        let qp = build_qp(&spec, &x, &zero_gamma(&spec), 0).unwrap();
        assert_eq!(qp.num_vars(), spec.horizon * spec.input_dim());
    }

    #[test]
    fn violating_state_needs_backup() {
        // x1 = 0.5 already violates the τ = 0 constraint, which no input can fix.
        let spec = dcdc_spec();
        let x = DVector::from_row_slice(&[0.5, 0.0]);
        let b = min_backup_horizon(&spec, &x, &zero_gamma(&spec)).unwrap();
        assert!(b.b >= 1, "got B = {}", b.b);
    }

    #[test]
    fn backup_matches_exhaustive_scan() {
        let spec = dcdc_spec();
        let mut rng = crate::plant::RngStream::new(2024);
        for _ in 0..40 {
            let x = DVector::from_fn(2, |_, _| rng.next_unit() * 2.0 - 1.0);
            let gamma_tilde = rng.next_unit() * 1.2 - 1.0;
            let gamma =
                TighteningVector::new(DVector::from_element(spec.tightening_dim(), gamma_tilde), 1)
                    .unwrap();
            let fast = min_backup_horizon(&spec, &x, &gamma).unwrap();
            let mut brute = None;
            for b in 0..=spec.horizon {
                let qp = build_qp(&spec, &x, &gamma, b).unwrap();
                if solve_qp(&qp).status == QpStatus::Optimal {
                    brute = Some(b);
                    break;
                }
            }
            assert_eq!(Some(fast.b), brute, "x = {x}, gamma = {gamma_tilde}");
        }
    }

    #[test]
    fn tightening_monotone_in_backup() {
        let spec = dcdc_spec();
        let mut rng = crate::plant::RngStream::new(77);
        for _ in 0..20 {
            let x = DVector::from_fn(2, |_, _| rng.next_unit() * 1.0 - 0.5);
            let loose = TighteningVector::zeros(spec.horizon, 1);
            let tight =
                TighteningVector::new(DVector::from_element(spec.tightening_dim(), 0.15), 1)
                    .unwrap();
            let b_loose = min_backup_horizon(&spec, &x, &loose).unwrap().b;
            let b_tight = min_backup_horizon(&spec, &x, &tight).unwrap().b;
            assert!(b_tight >= b_loose);
        }
    }

    #[test]
    fn objective_nonincreasing_in_backup() {
        let spec = dcdc_spec();
        let x = DVector::from_row_slice(&[0.4, -0.2]);
        let gamma = zero_gamma(&spec);
        let mut previous = f64::INFINITY;
        for b in 0..=spec.horizon {
            let qp = build_qp(&spec, &x, &gamma, b).unwrap();
            let sol = solve_qp(&qp);
            if sol.status == QpStatus::Optimal {
                assert!(sol.objective <= previous + 1e-6);
                previous = sol.objective;
            }
        }
        assert!(previous.is_finite());
    }

    #[test]
    fn optimal_solutions_respect_tightened_constraints() {
        let spec = dcdc_spec();
        let mut rng = crate::plant::RngStream::new(5150);
        for _ in 0..30 {
            let x = DVector::from_fn(2, |_, _| rng.next_unit() * 0.6 - 0.3);
            let gt = rng.next_unit() * 0.3 - 0.1;
            let gamma =
                TighteningVector::new(DVector::from_element(spec.tightening_dim(), gt), 1).unwrap();
            let res = mpc_control(&spec, &x, &gamma).unwrap();
            let n_u = spec.horizon * spec.input_dim();
            let u = res.qp.primal.rows(0, n_u).into_owned();
            for tau in 0..spec.horizon {
                let xt = spec.predicted_state(&x, &u, tau);
                let resid = spec.constraint.residual(&xt) + gamma.block(tau);
                for c in 0..spec.constraint_dim() {
                    assert!(
                        resid[c] <= res.slacks[tau][c] + 1e-7,
                        "tau {tau}: {} > slack {}",
                        resid[c],
                        res.slacks[tau][c]
                    );
                }
            }
            for u_tau in &res.full_input_sequence {
                for i in 0..spec.input_dim() {
                    assert!(u_tau[i] >= spec.input_lower[i] - 1e-9);
                    assert!(u_tau[i] <= spec.input_upper[i] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn saturated_input_hits_box_bound() {
        let spec = dcdc_spec();
        let x = DVector::from_row_slice(&[-1.0, 0.0]);
        // unconstrained LQ input for comparison
        let qp = build_qp(&spec, &x, &zero_gamma(&spec), 0).unwrap();
        let free = QpProblem::new(
            qp.hessian.clone(),
            qp.linear_cost.clone(),
            DMatrix::zeros(0, qp.num_vars()),
            DVector::zeros(0),
            None,
            None,
        )
        .unwrap();
        let unconstrained = solve_qp(&free);
        assert!(
            unconstrained.primal[0].abs() > 0.2,
            "LQ input {} does not exceed the box",
            unconstrained.primal[0]
        );
        let res = mpc_control(&spec, &x, &zero_gamma(&spec)).unwrap();
        assert_relative_eq!(res.u0[0].abs(), 0.2, epsilon = 1e-9);
    }

    #[test]
    fn identical_calls_are_identical() {
        let spec = dcdc_spec();
        let x = DVector::from_row_slice(&[0.1, -0.05]);
        let gamma =
            TighteningVector::new(DVector::from_element(spec.tightening_dim(), 0.05), 1).unwrap();
        let r1 = mpc_control(&spec, &x, &gamma).unwrap();
        let r2 = mpc_control(&spec, &x, &gamma).unwrap();
        assert_eq!(r1.u0, r2.u0);
        assert_eq!(r1.backup, r2.backup);
        assert_eq!(r1.qp.primal, r2.qp.primal);
    }
}
