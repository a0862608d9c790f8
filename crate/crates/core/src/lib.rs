//! Online learning of constraint-tightening parameters for stochastic MPC.
//!
//! The closed loop applies a deterministic MPC law with tightened state
//! constraints; per-step constraint-satisfaction labels feed a GP binary
//! regression model of the long-term satisfaction probability, and the
//! tightening vector is repeatedly re-optimized against that model until a
//! final selection over all visited candidates is made.
//!
//! Modules follow the pipeline: [`numerics`] (dense kernels + QP solver),
//! [`plant`] (true dynamics and labels), [`smpc`] (tightened OCP and control
//! law), [`gp_classify`] (probability model), [`tightener`] (the online
//! update loop), and [`baselines`] (comparison tightenings).

pub mod baselines;
pub mod gp_classify;
pub mod numerics;
pub mod plant;
pub mod smpc;
pub mod tightener;

pub use nalgebra::{DMatrix, DVector};

pub use gp_classify::{
    aggregate, laplace_fit, map_hyperparameters, predict, sigmoid, ClassificationDataset,
    HyperPrior, LaplaceFit, SeKernel,
};
pub use numerics::{solve_qp, QpProblem, QpSolution, QpStatus};
pub use plant::{
    constraint_label, sample_noise, step, AffineConstraint, LinearPlant, NoiseModel, RngStream,
};
pub use smpc::{build_qp, min_backup_horizon, mpc_control, MpcResult, OcpSpec, TighteningVector};
pub use tightener::{
    estimate_h, evaluate_closed_loop, run, select_gamma, tcol_bound, twait_bound,
    verify_drift_certificate, DriftCertificate, GammaSpace, RunTrace, TightenerConfig, TwaitRule,
};
