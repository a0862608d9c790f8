//! Closed-loop behavior of the MPC law on the converter model: stationarity
//! of the satisfaction estimate across seeds and timing sanity.

use nalgebra::{DMatrix, DVector};
use smpc_tighten::numerics::solve_discrete_lyapunov;
use smpc_tighten::plant::{AffineConstraint, LinearPlant, NoiseModel, RngStream};
use smpc_tighten::smpc::{OcpSpec, TighteningVector};
use smpc_tighten::tightener::estimate_h;

fn dcdc_plant(noise: NoiseModel) -> LinearPlant {
    LinearPlant::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0075, -0.143, 0.996]),
        DMatrix::from_row_slice(2, 1, &[4.798, 0.115]),
        noise,
        AffineConstraint::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap(),
    )
    .unwrap()
}

fn dcdc_spec() -> OcpSpec {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0075, -0.143, 0.996]);
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 10.0]);
    let p = solve_discrete_lyapunov(&a, &q).unwrap();
    OcpSpec::new(
        10,
        a,
        DMatrix::from_row_slice(2, 1, &[4.798, 0.115]),
        q,
        DMatrix::from_row_slice(1, 1, &[1.0]),
        p,
        DVector::from_row_slice(&[-0.2]),
        DVector::from_row_slice(&[0.2]),
        AffineConstraint::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap(),
        1e8,
    )
    .unwrap()
}

fn uniform_noise() -> NoiseModel {
    NoiseModel::UniformBox {
        lower: DVector::from_row_slice(&[-0.14, -0.14]),
        upper: DVector::from_row_slice(&[0.14, 0.14]),
    }
}

/// Two independent seeds must agree on the long-run satisfaction rate within
/// three binomial standard deviations, deflating the effective sample count
/// by a factor of ten for serial dependence.
#[test]
fn satisfaction_estimate_is_stationary_across_seeds() {
    let plant = dcdc_plant(uniform_noise());
    let spec = dcdc_spec();
    let gamma = TighteningVector::new(DVector::from_element(10, 0.112), 1).unwrap();
    let horizon = 100_000;
    let burn_in = 500;

    let mut r1 = RngStream::new(101);
    let mut r2 = RngStream::new(202);
    let h1 = estimate_h(&plant, &spec, &gamma, horizon, burn_in, &mut r1).unwrap();
    let h2 = estimate_h(&plant, &spec, &gamma, horizon, burn_in, &mut r2).unwrap();

    let pooled = 0.5 * (h1 + h2);
    let effective = horizon as f64 / 10.0;
    let std_each = (pooled * (1.0 - pooled) / effective).sqrt();
    let bound = 3.0 * (2.0_f64).sqrt() * std_each;
    assert!(
        (h1 - h2).abs() <= bound,
        "h1 = {h1}, h2 = {h2}, bound = {bound}"
    );
    assert!(h1 > 0.5 && h1 < 1.0);
}
