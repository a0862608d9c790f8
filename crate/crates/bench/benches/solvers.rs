//! Hot-path benchmarks: the condensed QP solve inside the control law, the
//! Laplace fit that runs 441 times per hyperparameter refresh, and the
//! fixed-point Lyapunov solve.

use criterion::{criterion_group, criterion_main, Criterion};
use smpc_tighten::gp_classify::{laplace_fit, ClassificationDataset, DataPoint, SeKernel};
use smpc_tighten::numerics::solve_discrete_lyapunov;
use smpc_tighten::plant::{AffineConstraint, LinearPlant, NoiseModel, RngStream};
use smpc_tighten::smpc::{mpc_control, OcpSpec};
use smpc_tighten::tightener::evaluate_closed_loop;
use smpc_tighten::{DMatrix, DVector};
use std::hint::black_box;

fn converter_spec() -> OcpSpec {
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

fn bench_mpc_solve(c: &mut Criterion) {
    let spec = converter_spec();
    let gamma =
        smpc_tighten::smpc::TighteningVector::new(DVector::from_element(10, 0.115), 1).unwrap();
    let x = DVector::from_row_slice(&[-0.115, 0.02]);
    c.bench_function("mpc_control_converter", |b| {
        b.iter(|| mpc_control(&spec, black_box(&x), black_box(&gamma)).unwrap())
    });
}

fn bench_closed_loop(c: &mut Criterion) {
    let spec = converter_spec();
    let plant = LinearPlant::new(
        spec.a.clone(),
        spec.b.clone(),
        NoiseModel::UniformBox {
            lower: DVector::from_row_slice(&[-0.14, -0.14]),
            upper: DVector::from_row_slice(&[0.14, 0.14]),
        },
        spec.constraint.clone(),
    )
    .unwrap();
    let gamma =
        smpc_tighten::smpc::TighteningVector::new(DVector::from_element(10, 0.115), 1).unwrap();
    c.bench_function("closed_loop_1000_steps", |b| {
        b.iter(|| {
            let mut rng = RngStream::new(7);
            evaluate_closed_loop(&plant, &spec, &gamma, 900, 100, &mut rng, false).unwrap()
        })
    });
}

fn bench_laplace_fit(c: &mut Criterion) {
    let mut data = ClassificationDataset::new();
    for j in 0..50 {
        let g = -1.0 + 1.2 * j as f64 / 49.0;
        data.push_point(DataPoint {
            input: DVector::from_element(10, g),
            trials: 1000,
            successes: 200 + 12 * j as u64,
        });
    }
    let kernel = SeKernel::new(0.37, 1.1).unwrap();
    c.bench_function("laplace_fit_50_points", |b| {
        b.iter(|| laplace_fit(black_box(&data), black_box(&kernel)).unwrap())
    });
}

fn bench_lyapunov(c: &mut Criterion) {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0075, -0.143, 0.996]);
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 10.0]);
    c.bench_function("discrete_lyapunov_converter", |b| {
        b.iter(|| solve_discrete_lyapunov(black_box(&a), black_box(&q)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_mpc_solve,
    bench_closed_loop,
    bench_laplace_fit,
    bench_lyapunov
);
criterion_main!(benches);
