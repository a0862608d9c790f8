//! GP binary regression for the long-term constraint-satisfaction
//! probability: squared-exponential kernel, probit sigmoid, Laplace
//! approximation of the latent posterior, closed-form predictive
//! probability, and MAP hyperparameters over a log-grid.
//!
//! Labels collected at the same tightening vector are aggregated into
//! binomial counts; since all labels at an input are exchangeable this is
//! lossless and keeps the latent dimension equal to the number of distinct
//! inputs.

use crate::numerics::{backward_substitute, cholesky, forward_substitute, NumericsError};
use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use std::io::{self, BufRead, Write};
use thiserror::Error;

const NEWTON_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 100;
/// 2/√π, the derivative of erf at 0.
const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const LN_SQRT_PI: f64 = 0.572_364_942_924_700_1;

fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

#[derive(Debug, Error)]
pub enum GpError {
    #[error("Newton iteration did not converge within {0} steps")]
    NonConvergence(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("every hyperparameter candidate was rejected")]
    AllRejected,
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("snapshot format error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Probit sigmoid `s(z) = (1 + erf(z))/2`, evaluated as `erfc(−z)/2` so both
/// tails stay accurate.
pub fn sigmoid(z: f64) -> f64 {
    0.5 * erfc(-z)
}

/// `ln(1/2 · erfc(z))`, with the standard asymptotic expansion once `erfc`
/// approaches the underflow region.
fn ln_half_erfc(z: f64) -> f64 {
    if z > 25.0 {
        -z * z - z.ln() - LN_SQRT_PI - std::f64::consts::LN_2
    } else {
        (0.5 * erfc(z)).ln()
    }
}

/// `s'(z)/s(z)`; tends to `−2z − 1/z` as `z → −∞`.
fn ratio_success(z: f64) -> f64 {
    if z < -25.0 {
        -2.0 * z - 1.0 / z
    } else {
        TWO_OVER_SQRT_PI * (-z * z).exp() / erfc(-z)
    }
}

/// `s'(z)/(1−s(z))` = `ratio_success(−z)`.
fn ratio_failure(z: f64) -> f64 {
    ratio_success(-z)
}

/// Squared-exponential kernel `k(γ, γ') = ψ⁻¹ exp(−λ²/2 ‖γ−γ'‖²)` with
/// reciprocal signal variance `ψ` and reciprocal lengthscale `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernel {
    pub psi: f64,
    pub lambda: f64,
}

impl SeKernel {
    pub fn new(psi: f64, lambda: f64) -> Result<Self, GpError> {
        if !positive_finite(psi) || !positive_finite(lambda) {
            return Err(GpError::InvalidKernel(format!(
                "psi = {psi}, lambda = {lambda}"
            )));
        }
        Ok(Self { psi, lambda })
    }

    pub fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let d2 = (a - b).norm_squared();
        (-0.5 * self.lambda * self.lambda * d2).exp() / self.psi
    }

    /// Prior latent variance `ψ⁻¹`.
    pub fn prior_variance(&self) -> f64 {
        1.0 / self.psi
    }
}

/// Independent Gaussian priors on the log hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct HyperPrior {
    pub log_psi_mean: f64,
    pub log_psi_std: f64,
    pub log_lambda_mean: f64,
    pub log_lambda_std: f64,
}

impl Default for HyperPrior {
    fn default() -> Self {
        Self {
            log_psi_mean: -1.0,
            log_psi_std: 1.0,
            log_lambda_mean: 0.0,
            log_lambda_std: 1.0,
        }
    }
}

impl HyperPrior {
    fn validate(&self) -> Result<(), GpError> {
        if !positive_finite(self.log_psi_std) || !positive_finite(self.log_lambda_std) {
            return Err(GpError::InvalidKernel(
                "hyper-prior standard deviations must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn log_normal_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Aggregated binomial observations at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub input: DVector<f64>,
    pub trials: u64,
    pub successes: u64,
}

/// Bernoulli labels grouped by exact input equality, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassificationDataset {
    points: Vec<DataPoint>,
}

impl ClassificationDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_point(&mut self, point: DataPoint) {
        assert!(point.successes <= point.trials && point.trials >= 1);
        self.points.push(point);
    }

    /// Record one label, merging with an existing entry on exact equality.
    pub fn add_label(&mut self, input: &DVector<f64>, label: bool) {
        for p in &mut self.points {
            if p.input.len() == input.len() && p.input == *input {
                p.trials += 1;
                p.successes += u64::from(label);
                return;
            }
        }
        self.points.push(DataPoint {
            input: input.clone(),
            trials: 1,
            successes: u64::from(label),
        });
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_trials(&self) -> u64 {
        self.points.iter().map(|p| p.trials).sum()
    }

    pub fn inputs(&self) -> Vec<DVector<f64>> {
        self.points.iter().map(|p| p.input.clone()).collect()
    }
}

/// Group a stream of `(γ, label)` pairs into a dataset.
pub fn aggregate<I>(raw: I) -> ClassificationDataset
where
    I: IntoIterator<Item = (DVector<f64>, bool)>,
{
    let mut data = ClassificationDataset::new();
    for (input, label) in raw {
        data.add_label(&input, label);
    }
    data
}

/// Kernel Gram matrix of a set of inputs.
pub fn gram(kernel: &SeKernel, inputs: &[DVector<f64>]) -> DMatrix<f64> {
    let m = inputs.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = kernel.prior_variance();
        for j in (i + 1)..m {
            let v = kernel.eval(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Binomial log-likelihood of latent values `f` (binomial coefficients
/// excluded; they cancel in every comparison we make).
pub fn log_likelihood(data: &ClassificationDataset, f: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for (j, p) in data.points().iter().enumerate() {
        let z = f[j];
        let k = p.successes as f64;
        let nk = (p.trials - p.successes) as f64;
        if k > 0.0 {
            total += k * ln_half_erfc(-z);
        }
        if nk > 0.0 {
            total += nk * ln_half_erfc(z);
        }
    }
    total
}

/// Gradient of the binomial log-likelihood.
pub fn likelihood_gradient(data: &ClassificationDataset, f: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(data.len(), |j, _| {
        let p = &data.points()[j];
        let z = f[j];
        let k = p.successes as f64;
        let nk = (p.trials - p.successes) as f64;
        let mut g = 0.0;
        if k > 0.0 {
            g += k * ratio_success(z);
        }
        if nk > 0.0 {
            g -= nk * ratio_failure(z);
        }
        g
    })
}

/// Negative second derivative (curvature `W`) of the log-likelihood; always
/// positive for the probit link, which keeps the Newton system definite.
pub fn likelihood_curvature(data: &ClassificationDataset, f: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(data.len(), |j, _| {
        let p = &data.points()[j];
        let z = f[j];
        let k = p.successes as f64;
        let nk = (p.trials - p.successes) as f64;
        let mut w = 0.0;
        if k > 0.0 {
            let r = ratio_success(z);
            w += k * (r * r + 2.0 * z * r);
        }
        if nk > 0.0 {
            let r = ratio_failure(z);
            w += nk * (r * r - 2.0 * z * r);
        }
        w.max(0.0)
    })
}

/// Latent GP posterior approximated at its mode.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub dataset: ClassificationDataset,
    pub kernel: SeKernel,
    /// Posterior mode of the latent values.
    pub latent_mode: DVector<f64>,
    /// Likelihood gradient at the mode (also `K⁻¹ f̂`).
    pub grad_at_mode: DVector<f64>,
    /// Curvature diagonal `W` at the mode.
    pub curvature: DVector<f64>,
    /// Lower Cholesky factor of `I + W^{1/2} K W^{1/2}`.
    chol_b: DMatrix<f64>,
    sqrt_w: DVector<f64>,
    /// Laplace approximation of the log marginal likelihood.
    pub log_evidence: f64,
    pub newton_iterations: usize,
}

/// Newton iteration for the latent mode (Rasmussen & Williams alg. 3.1 with
/// binomial counts), with a backtracking line search in `a = K⁻¹f` space.
pub fn laplace_fit(data: &ClassificationDataset, kernel: &SeKernel) -> Result<LaplaceFit, GpError> {
    if data.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    let m = data.len();
    let inputs = data.inputs();
    let k = gram(kernel, &inputs);

    let psi_objective = |a: &DVector<f64>| -> (DVector<f64>, f64) {
        let f = &k * a;
        let value = log_likelihood(data, &f) - 0.5 * a.dot(&f);
        (f, value)
    };

    let mut a = DVector::<f64>::zeros(m);
    let mut f = DVector::<f64>::zeros(m);
    let mut psi = log_likelihood(data, &f);
    let mut iterations = 0;
    let mut converged = false;

    // The gradient component at input j scales with its trial count, so the
    // first-order condition is checked per trial; an absolute tolerance is
    // below the evaluation noise floor once counts reach ~1e5.
    let grad_scale = DVector::from_fn(m, |j, _| (data.points()[j].trials as f64).max(1.0));
    let stationary = |grad: &DVector<f64>, a: &DVector<f64>| {
        (0..m).all(|j| (grad[j] - a[j]).abs() <= NEWTON_TOL * grad_scale[j])
    };

    for iter in 0..MAX_NEWTON {
        iterations = iter + 1;
        let grad = likelihood_gradient(data, &f);
        if stationary(&grad, &a) {
            converged = true;
            iterations = iter;
            break;
        }
        let w = likelihood_curvature(data, &f);
        let sw = w.map(f64::sqrt);
        let mut b_mat = DMatrix::<f64>::identity(m, m);
        for i in 0..m {
            for j in 0..m {
                b_mat[(i, j)] += sw[i] * k[(i, j)] * sw[j];
            }
        }
        let l = cholesky(&b_mat)?;
        let b = w.component_mul(&f) + &grad;
        let kb = &k * &b;
        let v = forward_substitute(&l, &sw.component_mul(&kb));
        let t = backward_substitute(&l, &v);
        let a_new = &b - sw.component_mul(&t);

        let mut eta = 1.0;
        let mut advanced = false;
        while eta >= 1e-12 {
            let a_try = &a + (&a_new - &a) * eta;
            let (f_try, psi_try) = psi_objective(&a_try);
            if psi_try >= psi - 1e-12 * psi.abs().max(1.0) {
                a = a_try;
                f = f_try;
                psi = psi_try;
                advanced = true;
                break;
            }
            eta *= 0.5;
        }
        if !advanced {
            break;
        }
    }

    if !converged {
        let grad = likelihood_gradient(data, &f);
        if !stationary(&grad, &a) {
            return Err(GpError::NonConvergence(MAX_NEWTON));
        }
    }

    let grad = likelihood_gradient(data, &f);
    let w = likelihood_curvature(data, &f);
    let sw = w.map(f64::sqrt);
    let mut b_mat = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        for j in 0..m {
            b_mat[(i, j)] += sw[i] * k[(i, j)] * sw[j];
        }
    }
    let l = cholesky(&b_mat)?;
    let mut log_det_half = 0.0;
    for i in 0..m {
        log_det_half += l[(i, i)].ln();
    }
    let log_evidence = log_likelihood(data, &f) - 0.5 * a.dot(&f) - log_det_half;

    Ok(LaplaceFit {
        dataset: data.clone(),
        kernel: *kernel,
        latent_mode: f,
        grad_at_mode: grad,
        curvature: w,
        chol_b: l,
        sqrt_w: sw,
        log_evidence,
        newton_iterations: iterations,
    })
}

/// Predictive latent moments and success probability at a test input.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub latent_mean: f64,
    pub latent_var: f64,
    pub probability: f64,
}

/// Laplace predictive at `γ*`: Gaussian latent moments pushed through the
/// probit in closed form.
pub fn predict(fit: &LaplaceFit, input: &DVector<f64>) -> Prediction {
    let m = fit.dataset.len();
    let k_star = DVector::from_fn(m, |j, _| {
        fit.kernel.eval(input, &fit.dataset.points()[j].input)
    });
    let latent_mean = k_star.dot(&fit.grad_at_mode);
    let v = forward_substitute(&fit.chol_b, &fit.sqrt_w.component_mul(&k_star));
    let latent_var = (fit.kernel.prior_variance() - v.dot(&v)).max(0.0);
    let probability = sigmoid(latent_mean / (1.0 + 2.0 * latent_var).sqrt());
    Prediction {
        latent_mean,
        latent_var,
        probability,
    }
}

/// MAP hyperparameters over a fixed 21×21 log-grid spanning `e^{±4}` around
/// the prior means. Ties are broken toward larger `λ`, then larger `ψ`.
pub fn map_hyperparameters(
    data: &ClassificationDataset,
    prior: &HyperPrior,
) -> Result<SeKernel, GpError> {
    if data.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    prior.validate()?;
    const GRID: usize = 21;
    let offsets: Vec<f64> = (0..GRID)
        .map(|i| -4.0 + 8.0 * i as f64 / (GRID - 1) as f64)
        .collect();

    let mut best: Option<(f64, SeKernel)> = None;
    for psi_off in &offsets {
        let log_psi = prior.log_psi_mean + psi_off;
        for lambda_off in &offsets {
            let log_lambda = prior.log_lambda_mean + lambda_off;
            let kernel = SeKernel::new(log_psi.exp(), log_lambda.exp())?;
            let Ok(fit) = laplace_fit(data, &kernel) else {
                continue;
            };
            let score = fit.log_evidence
                + log_normal_density(log_psi, prior.log_psi_mean, prior.log_psi_std)
                + log_normal_density(log_lambda, prior.log_lambda_mean, prior.log_lambda_std);
            let better = match &best {
                None => true,
                Some((best_score, best_kernel)) => {
                    score > *best_score
                        || (score == *best_score
                            && (kernel.lambda > best_kernel.lambda
                                || (kernel.lambda == best_kernel.lambda
                                    && kernel.psi > best_kernel.psi)))
                }
            };
            if better {
                best = Some((score, kernel));
            }
        }
    }
    best.map(|(_, k)| k).ok_or(GpError::AllRejected)
}

const SNAPSHOT_HEADER: &str = "smpc-tighten-gp-snapshot v1";

/// Serialize a fitted model as decimal text: hyperparameters, the ordered
/// dataset triples, and the latent mode.
pub fn write_snapshot<W: Write>(fit: &LaplaceFit, mut out: W) -> io::Result<()> {
    writeln!(out, "{SNAPSHOT_HEADER}")?;
    writeln!(out, "psi {}", fit.kernel.psi)?;
    writeln!(out, "lambda {}", fit.kernel.lambda)?;
    writeln!(out, "points {}", fit.dataset.len())?;
    for (j, p) in fit.dataset.points().iter().enumerate() {
        let coords: Vec<String> = p.input.iter().map(|v| format!("{v}")).collect();
        writeln!(
            out,
            "{} {} {} {}",
            coords.join(";"),
            p.trials,
            p.successes,
            fit.latent_mode[j]
        )?;
    }
    Ok(())
}

/// Parsed snapshot contents; refit with [`laplace_fit`] to reconstruct a
/// usable model.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub kernel: SeKernel,
    pub dataset: ClassificationDataset,
    pub latent_mode: DVector<f64>,
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<Snapshot, GpError> {
    let mut lines = input.lines();
    let bad = |msg: &str| GpError::Snapshot(msg.to_string());
    let header = lines
        .next()
        .ok_or_else(|| bad("missing header"))?
        .map_err(|e| bad(&e.to_string()))?;
    if header.trim() != SNAPSHOT_HEADER {
        return Err(bad(&format!("unsupported header '{header}'")));
    }
    let mut field = |name: &str| -> Result<f64, GpError> {
        let line = lines
            .next()
            .ok_or_else(|| bad("truncated snapshot"))?
            .map_err(|e| bad(&e.to_string()))?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad(&format!("malformed line '{line}'")))?;
        if key != name {
            return Err(bad(&format!("expected field '{name}', found '{key}'")));
        }
        value
            .trim()
            .parse()
            .map_err(|_| bad(&format!("bad numeric value '{value}'")))
    };
    let psi = field("psi")?;
    let lambda = field("lambda")?;
    let count = field("points")? as usize;
    let kernel = SeKernel::new(psi, lambda)?;

    let mut dataset = ClassificationDataset::new();
    let mut mode = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| bad("truncated point list"))?
            .map_err(|e| bad(&e.to_string()))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(bad(&format!("malformed point line '{line}'")));
        }
        let coords: Result<Vec<f64>, _> = parts[0].split(';').map(str::parse).collect();
        let coords = coords.map_err(|_| bad("bad coordinate"))?;
        let trials: u64 = parts[1].parse().map_err(|_| bad("bad trial count"))?;
        let successes: u64 = parts[2].parse().map_err(|_| bad("bad success count"))?;
        let f: f64 = parts[3].parse().map_err(|_| bad("bad mode value"))?;
        dataset.push_point(DataPoint {
            input: DVector::from_vec(coords),
            trials,
            successes,
        });
        mode.push(f);
    }
    Ok(Snapshot {
        kernel,
        dataset,
        latent_mode: DVector::from_vec(mode),
    })
}
