//! Property tests for the structural invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use smpc_tighten::gp_classify::aggregate;
use smpc_tighten::numerics::{cholesky, solve_qp, QpProblem, QpStatus, KKT_TOL};
use smpc_tighten::plant::{constraint_label, AffineConstraint};

fn small_f64() -> impl Strategy<Value = f64> {
    (-1.0f64..1.0).prop_map(|v| v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// The Cholesky factor reconstructs random PSD matrices to 1e-10
    /// relative Frobenius error.
    #[test]
    fn cholesky_reconstructs_psd_matrices(
        entries in proptest::collection::vec(small_f64(), 16),
        bump in 0.01f64..1.0,
    ) {
        let g = DMatrix::from_row_slice(4, 4, &entries);
        let mut m = g.transpose() * &g;
        for i in 0..4 {
            m[(i, i)] += bump;
        }
        let m = (&m + m.transpose()) * 0.5;
        let l = cholesky(&m).unwrap();
        let err = (&l * l.transpose() - &m).norm() / m.norm();
        prop_assert!(err <= 1e-10, "relative error {err}");
    }

    /// Shrinking the constraint image of a satisfying state keeps it
    /// satisfying.
    #[test]
    fn constraint_label_is_monotone(
        row in proptest::collection::vec(small_f64(), 3),
        x in proptest::collection::vec(small_f64(), 3),
        offset in 0.0f64..1.0,
        pull in 0.0f64..2.0,
    ) {
        let h = DMatrix::from_row_slice(1, 3, &row);
        prop_assume!(h.norm() > 1e-6);
        let c = AffineConstraint::new(h.clone(), DVector::from_element(1, offset)).unwrap();
        let x = DVector::from_vec(x);
        if constraint_label(&c, &x) {
            // move along −H_xᵀ, which can only decrease H_x·x
            let x_better = &x - h.transpose() * pull;
            prop_assert!(constraint_label(&c, &x_better));
        }
    }

    /// Aggregation is lossless in counts.
    #[test]
    fn aggregation_preserves_totals(labels in proptest::collection::vec((0u8..4, any::<bool>()), 0..200)) {
        let stream: Vec<(DVector<f64>, bool)> = labels
            .iter()
            .map(|(k, l)| (DVector::from_element(1, *k as f64 * 0.25), *l))
            .collect();
        let total_true = stream.iter().filter(|(_, l)| *l).count() as u64;
        let data = aggregate(stream);
        prop_assert_eq!(data.total_trials(), labels.len() as u64);
        let successes: u64 = data.points().iter().map(|p| p.successes).sum();
        prop_assert_eq!(successes, total_true);
        for p in data.points() {
            prop_assert!(p.successes <= p.trials && p.trials >= 1);
        }
        prop_assert!(data.len() <= 4);
    }

    /// Feasible-by-construction QPs come back Optimal with a certified KKT
    /// residual and an objective no worse than the feasible witness.
    #[test]
    fn solver_is_optimal_on_feasible_instances(
        g_entries in proptest::collection::vec(small_f64(), 9),
        c_entries in proptest::collection::vec(small_f64(), 3),
        a_entries in proptest::collection::vec(small_f64(), 15),
        witness in proptest::collection::vec(small_f64(), 3),
        slack in 0.01f64..1.0,
    ) {
        let g = DMatrix::from_row_slice(3, 3, &g_entries);
        let mut h = g.transpose() * &g;
        for i in 0..3 {
            h[(i, i)] += 0.2;
        }
        let h = (&h + h.transpose()) * 0.5;
        let a = DMatrix::from_row_slice(5, 3, &a_entries);
        let w = DVector::from_vec(witness);
        let b = &a * &w + DVector::from_element(5, slack);
        let p = QpProblem::new(
            h,
            DVector::from_vec(c_entries),
            a,
            b,
            None,
            None,
        ).unwrap();
        let sol = solve_qp(&p);
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        prop_assert!(sol.kkt_residual <= KKT_TOL);
        prop_assert!(sol.objective <= p.objective(&w) + 1e-8);
    }
}
