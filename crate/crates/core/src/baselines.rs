//! Offline comparison tightenings computed from the noise description:
//! a Cantelli/Chebyshev bound, a Gaussian quantile, and an empirical
//! scenario quantile, all driven by the open-loop prediction-error
//! covariance ladder `Σ₀ = 0`, `Σ_{τ+1} = A Σ_τ Aᵀ + Σ_w`.

use crate::plant::{sample_noise, AffineConstraint, NoiseModel, RngStream};
use crate::smpc::TighteningVector;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("risk level must lie in (0,1), got {0}")]
    InvalidRisk(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("scenario sample count {got} below the minimum {min}")]
    TooFewScenarios { got: usize, min: usize },
}

/// Open-loop error covariances `Σ_τ` for `τ = 0..N-1`.
pub fn covariance_ladder(
    a: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    horizon: usize,
) -> Vec<DMatrix<f64>> {
    let d = a.nrows();
    let mut ladder = Vec::with_capacity(horizon);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for _ in 0..horizon {
        ladder.push(cov.clone());
        cov = a * &cov * a.transpose() + sigma_w;
    }
    ladder
}

fn check_inputs(
    a: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    constraint: &AffineConstraint,
    delta: f64,
) -> Result<(), BaselineError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BaselineError::InvalidRisk(delta));
    }
    let d = a.nrows();
    if a.ncols() != d || sigma_w.nrows() != d || sigma_w.ncols() != d {
        return Err(BaselineError::Dimension(
            "A and Σ_w must be square and equal".into(),
        ));
    }
    if constraint.h_x.ncols() != d {
        return Err(BaselineError::Dimension(
            "constraint columns must match the state dimension".into(),
        ));
    }
    Ok(())
}

fn from_row_std<F: Fn(f64) -> f64>(
    a: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    constraint: &AffineConstraint,
    horizon: usize,
    scale: F,
) -> TighteningVector {
    let ladder = covariance_ladder(a, sigma_w, horizon);
    let d_c = constraint.num_rows();
    let mut g = DVector::zeros(horizon * d_c);
    for (tau, cov) in ladder.iter().enumerate() {
        for r in 0..d_c {
            let row = constraint.h_x.row(r);
            let var = (row * cov * row.transpose())[(0, 0)].max(0.0);
            g[tau * d_c + r] = scale(var.sqrt());
        }
    }
    TighteningVector::new(g, d_c).expect("constructed with consistent blocks")
}

/// Cantelli-type tightening `g_τ = √((1−δ)/δ) · σ_τ`; distribution-free and
/// conservative.
pub fn chebyshev_tightening(
    a: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    constraint: &AffineConstraint,
    delta: f64,
    horizon: usize,
) -> Result<TighteningVector, BaselineError> {
    check_inputs(a, sigma_w, constraint, delta)?;
    let factor = ((1.0 - delta) / delta).sqrt();
    Ok(from_row_std(a, sigma_w, constraint, horizon, |s| {
        factor * s
    }))
}

/// Standard normal quantile by bisection on the probit, to 1e-10.
pub fn normal_quantile(p: f64) -> Result<f64, BaselineError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(BaselineError::InvalidRisk(p));
    }
    let cdf = |z: f64| crate::gp_classify::sigmoid(z / std::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gaussian-quantile tightening `g_τ = z_{1−δ} · σ_τ`, exact when the noise
/// is Gaussian.
pub fn gaussian_tightening(
    a: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    constraint: &AffineConstraint,
    delta: f64,
    horizon: usize,
) -> Result<TighteningVector, BaselineError> {
    check_inputs(a, sigma_w, constraint, delta)?;
    let z = normal_quantile(1.0 - delta)?;
    Ok(from_row_std(a, sigma_w, constraint, horizon, |s| z * s))
}

/// Sampling-based tightening: simulate `M` open-loop error trajectories and
/// take the `⌈(1−δ)M⌉`-th order statistic of each constraint row per step.
pub fn scenario_tightening(
    a: &DMatrix<f64>,
    noise: &NoiseModel,
    constraint: &AffineConstraint,
    delta: f64,
    horizon: usize,
    samples: usize,
    rng: &mut RngStream,
) -> Result<TighteningVector, BaselineError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BaselineError::InvalidRisk(delta));
    }
    let min_samples = (10.0 / delta).ceil() as usize;
    if samples < min_samples {
        return Err(BaselineError::TooFewScenarios {
            got: samples,
            min: min_samples,
        });
    }
    let d = a.nrows();
    if noise.dim() != d || constraint.h_x.ncols() != d {
        return Err(BaselineError::Dimension(
            "noise/constraint dimensions must match A".into(),
        ));
    }
    let d_c = constraint.num_rows();
    // values[tau][r] collects H_r e_tau across scenarios
    let mut values = vec![vec![Vec::with_capacity(samples); d_c]; horizon];
    for _ in 0..samples {
        let mut e = DVector::<f64>::zeros(d);
        for slot in values.iter_mut() {
            let image = &constraint.h_x * &e;
            for (r, v) in slot.iter_mut().enumerate() {
                v.push(image[r]);
            }
            e = a * &e + sample_noise(noise, rng);
        }
    }
    let rank = ((1.0 - delta) * samples as f64).ceil() as usize;
    let rank = rank.clamp(1, samples);
    let mut g = DVector::zeros(horizon * d_c);
    for (tau, slot) in values.iter_mut().enumerate() {
        for (r, v) in slot.iter_mut().enumerate() {
            let (_, kth, _) = v.select_nth_unstable_by(rank - 1, |x, y| x.partial_cmp(y).unwrap());
            g[tau * d_c + r] = *kth;
        }
    }
    Ok(TighteningVector::new(g, d_c).expect("consistent blocks"))
}
