//! The true stochastic system: linear dynamics, process noise, and the
//! constraint indicator that produces training labels.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
}

/// Counter-based random stream: identical `(seed, counter)` pairs always
/// produce identical draws, so waiting/collection phases can be replayed
/// independently and replications own disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Deterministically derive an independent stream.
    pub fn substream(&self, tag: u64) -> Self {
        Self {
            seed: splitmix(self.seed ^ GOLDEN.wrapping_mul(tag.wrapping_add(1))),
            counter: 0,
        }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    fn next_raw(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_raw() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_raw().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Process-noise description. Either an axis-aligned uniform box or a
/// diagonal Gaussian.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    UniformBox {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    GaussianDiag {
        mean: DVector<f64>,
        std: DVector<f64>,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        match self {
            NoiseModel::UniformBox { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(PlantError::InvalidNoise("box bound lengths differ".into()));
                }
                for i in 0..lower.len() {
                    if !matches!(
                        lower[i].partial_cmp(&upper[i]),
                        Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
                    ) {
                        return Err(PlantError::InvalidNoise(format!("lower[{i}] > upper[{i}]")));
                    }
                }
                Ok(())
            }
            NoiseModel::GaussianDiag { mean, std } => {
                if mean.len() != std.len() {
                    return Err(PlantError::InvalidNoise("mean/std lengths differ".into()));
                }
                if !std.iter().all(|s| s.is_finite() && *s > 0.0) {
                    return Err(PlantError::InvalidNoise(
                        "standard deviations must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseModel::UniformBox { lower, .. } => lower.len(),
            NoiseModel::GaussianDiag { mean, .. } => mean.len(),
        }
    }

    /// Exact per-component variance, used by the baseline covariance ladder.
    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            NoiseModel::UniformBox { lower, upper } => {
                let d = lower.len();
                DMatrix::from_fn(d, d, |i, j| {
                    if i == j {
                        let w = upper[i] - lower[i];
                        w * w / 12.0
                    } else {
                        0.0
                    }
                })
            }
            NoiseModel::GaussianDiag { std, .. } => {
                let d = std.len();
                DMatrix::from_fn(d, d, |i, j| if i == j { std[i] * std[i] } else { 0.0 })
            }
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseModel::GaussianDiag { .. })
    }
}

/// Draw one noise vector.
pub fn sample_noise(model: &NoiseModel, rng: &mut RngStream) -> DVector<f64> {
    match model {
        NoiseModel::UniformBox { lower, upper } => DVector::from_fn(lower.len(), |i, _| {
            lower[i] + (upper[i] - lower[i]) * rng.next_unit()
        }),
        NoiseModel::GaussianDiag { mean, std } => DVector::from_fn(mean.len(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            mean[i] + std[i] * z
        }),
    }
}

/// Affine state constraint `h(x) = H_x x − offset ≤ 0`.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    pub h_x: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineConstraint {
    pub fn new(h_x: DMatrix<f64>, offset: DVector<f64>) -> Result<Self, PlantError> {
        if h_x.nrows() != offset.len() {
            return Err(PlantError::Dimension(format!(
                "{} constraint rows but {} offsets",
                h_x.nrows(),
                offset.len()
            )));
        }
        if h_x.nrows() == 0 {
            return Err(PlantError::Dimension(
                "constraint must have at least one row".into(),
            ));
        }
        Ok(Self { h_x, offset })
    }

    pub fn num_rows(&self) -> usize {
        self.h_x.nrows()
    }

    /// `h(x)`; nonpositive components mean satisfied.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h_x * x - &self.offset
    }
}

/// The true plant: `x⁺ = A x + B u + w`.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub noise: NoiseModel,
    pub constraint: AffineConstraint,
}

impl LinearPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        noise: NoiseModel,
        constraint: AffineConstraint,
    ) -> Result<Self, PlantError> {
        let d_x = a.nrows();
        if a.ncols() != d_x {
            return Err(PlantError::Dimension("A must be square".into()));
        }
        if b.nrows() != d_x {
            return Err(PlantError::Dimension("B row count must match A".into()));
        }
        noise.validate()?;
        if noise.dim() != d_x {
            return Err(PlantError::Dimension(
                "noise dimension must match the state dimension".into(),
            ));
        }
        if constraint.h_x.ncols() != d_x {
            return Err(PlantError::Dimension(
                "constraint column count must match the state dimension".into(),
            ));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(PlantError::Dimension("non-finite system matrices".into()));
        }
        Ok(Self {
            a,
            b,
            noise,
            constraint,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// One step of the true dynamics with a fresh noise draw.
pub fn step(
    plant: &LinearPlant,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rng: &mut RngStream,
) -> DVector<f64> {
    let w = sample_noise(&plant.noise, rng);
    &plant.a * x + &plant.b * u + w
}

/// Binary constraint-satisfaction label: 1 iff `h(x) ≤ 0` componentwise.
pub fn constraint_label(c: &AffineConstraint, x: &DVector<f64>) -> bool {
    c.residual(x).iter().all(|v| *v <= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dcdc_matrices() -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0075, -0.143, 0.996]),
            DMatrix::from_row_slice(2, 1, &[4.798, 0.115]),
        )
    }

    fn x1_constraint() -> AffineConstraint {
        AffineConstraint::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap()
    }

    fn zero_noise(d: usize) -> NoiseModel {
        NoiseModel::UniformBox {
            lower: DVector::zeros(d),
            upper: DVector::zeros(d),
        }
    }

    #[test]
    fn step_equilibrium() {
        let (a, b) = dcdc_matrices();
        let plant = LinearPlant::new(a, b, zero_noise(2), x1_constraint()).unwrap();
        let mut rng = RngStream::new(7);
        let x = step(&plant, &DVector::zeros(2), &DVector::zeros(1), &mut rng);
        assert_eq!(x, DVector::zeros(2));
    }

    #[test]
    fn step_hand_products() {
        let (a, b) = dcdc_matrices();
        let plant = LinearPlant::new(a, b, zero_noise(2), x1_constraint()).unwrap();
        let mut rng = RngStream::new(7);
        let x = step(
            &plant,
            &DVector::from_row_slice(&[1.0, 0.0]),
            &DVector::zeros(1),
            &mut rng,
        );
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 0.143).abs() < 1e-12);

        let x = step(
            &plant,
            &DVector::zeros(2),
            &DVector::from_row_slice(&[0.1]),
            &mut rng,
        );
        assert!((x[0] - 0.4798).abs() < 1e-12 && (x[1] - 0.0115).abs() < 1e-12);
    }

    #[test]
    fn uniform_draws_stay_in_support() {
        let model = NoiseModel::UniformBox {
            lower: DVector::from_row_slice(&[-0.14, -0.14]),
            upper: DVector::from_row_slice(&[0.14, 0.14]),
        };
        let mut rng = RngStream::new(123);
        for _ in 0..10_000 {
            let w = sample_noise(&model, &mut rng);
            assert!(w.iter().all(|v| (-0.14..=0.14).contains(v)));
        }
    }

    #[test]
    fn degenerate_box_is_exact() {
        let model = zero_noise(2);
        let mut rng = RngStream::new(5);
        let w = sample_noise(&model, &mut rng);
        assert_eq!(w, DVector::zeros(2));
    }

    #[test]
    fn uniform_empirical_moments() {
        let model = NoiseModel::UniformBox {
            lower: DVector::from_row_slice(&[-0.14]),
            upper: DVector::from_row_slice(&[0.14]),
        };
        let mut rng = RngStream::new(42);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let w = sample_noise(&model, &mut rng)[0];
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let expected_var = 0.28_f64.powi(2) / 12.0;
        assert!(mean.abs() <= 1e-3, "mean {mean}");
        assert!(
            (var - expected_var).abs() <= 0.02 * expected_var,
            "var {var} vs {expected_var}"
        );
    }

    #[test]
    fn gaussian_empirical_std() {
        let model = NoiseModel::GaussianDiag {
            mean: DVector::zeros(1),
            std: DVector::from_row_slice(&[0.08]),
        };
        let mut rng = RngStream::new(99);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let w = sample_noise(&model, &mut rng)[0];
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let std = (sumsq / n as f64 - mean * mean).sqrt();
        assert!((std - 0.08).abs() <= 1e-3, "std {std}");
    }

    #[test]
    fn stream_determinism_is_bitwise() {
        let model = NoiseModel::GaussianDiag {
            mean: DVector::zeros(2),
            std: DVector::from_row_slice(&[0.08, 0.08]),
        };
        let (a, b) = dcdc_matrices();
        let plant = LinearPlant::new(a, b, model, x1_constraint()).unwrap();
        let run = |seed: u64| -> Vec<u64> {
            let mut rng = RngStream::new(seed);
            let mut x = DVector::zeros(2);
            let mut bits = Vec::new();
            for _ in 0..200 {
                x = step(&plant, &x, &DVector::from_row_slice(&[0.01]), &mut rng);
                bits.push(x[0].to_bits());
                bits.push(x[1].to_bits());
            }
            bits
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn label_boundary_counts_as_satisfied() {
        let c = x1_constraint();
        assert!(constraint_label(&c, &DVector::from_row_slice(&[-0.5, 3.0])));
        assert!(!constraint_label(&c, &DVector::from_row_slice(&[0.2, 0.0])));
        assert!(constraint_label(&c, &DVector::from_row_slice(&[0.0, 7.0])));
    }

    #[test]
    fn label_monotone_in_constraint_rows() {
        let c = AffineConstraint::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 1.0]),
            DVector::from_row_slice(&[0.3, 0.1]),
        )
        .unwrap();
        let mut rng = RngStream::new(3);
        for _ in 0..500 {
            let x = DVector::from_fn(2, |_, _| rng.next_unit() * 2.0 - 1.0);
            if constraint_label(&c, &x) {
                // shrink the constraint image componentwise
                let r = c.residual(&x);
                let better = r.map(|v| v - 0.1);
                assert!(better.iter().all(|v| *v <= 0.0));
            }
        }
    }

    #[test]
    fn substreams_are_independent_of_parent_consumption() {
        let rng = RngStream::new(77);
        let sub_before = rng.substream(4);
        let mut parent = rng;
        parent.next_unit();
        let sub_after = parent.substream(4);
        assert_eq!(sub_before, sub_after);
    }
}
