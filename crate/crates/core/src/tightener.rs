//! The online constraint-tightening loop: waiting/collection schedule, GP
//! refits, constrained selection of the tightening vector, random
//! exploration, and the final selection over all visited candidates. Also
//! houses the waiting/collection-time bound utilities and the quadratic
//! drift certificate.

use crate::gp_classify::{
    laplace_fit, map_hyperparameters, predict, ClassificationDataset, GpError, HyperPrior,
    LaplaceFit, SeKernel,
};
use crate::numerics::NumericsError;
use crate::plant::{constraint_label, step, LinearPlant, PlantError, RngStream};
use crate::smpc::{mpc_control, OcpSpec, SmpcError, TighteningVector};
use nalgebra::{DMatrix, DVector};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TightenerError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("certificate check failed: {0}")]
    Certificate(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Smpc(#[from] SmpcError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Compact search space `Γ = {D γ̃ | γ̃ ∈ [lo, hi]^d̃}` discretized on a
/// per-dimension grid.
#[derive(Debug, Clone)]
pub struct GammaSpace {
    embedding: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    resolution: Vec<usize>,
    block_dim: usize,
}

impl GammaSpace {
    pub fn new(
        embedding: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
        resolution: Vec<usize>,
        block_dim: usize,
    ) -> Result<Self, TightenerError> {
        let d_tilde = embedding.ncols();
        if lower.len() != d_tilde || upper.len() != d_tilde || resolution.len() != d_tilde {
            return Err(TightenerError::InvalidConfig(
                "embedding columns, bounds, and resolutions must agree".into(),
            ));
        }
        if block_dim == 0 || !embedding.nrows().is_multiple_of(block_dim) {
            return Err(TightenerError::InvalidConfig(
                "embedding rows must be a multiple of the constraint dimension".into(),
            ));
        }
        for k in 0..d_tilde {
            if lower[k] > upper[k] || !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(TightenerError::InvalidConfig(format!(
                    "empty box in dimension {k}"
                )));
            }
            if resolution[k] == 0 || (resolution[k] == 1 && lower[k] != upper[k]) {
                return Err(TightenerError::InvalidConfig(format!(
                    "resolution in dimension {k} must be at least 2 on a non-degenerate box"
                )));
            }
        }
        Ok(Self {
            embedding,
            lower,
            upper,
            resolution,
            block_dim,
        })
    }

    /// Uniform embedding `Γ = {γ̃·1}`: one reduced coordinate replicated
    /// across all `N·d_c` entries.
    pub fn uniform_scalar(
        gamma_dim: usize,
        lower: f64,
        upper: f64,
        resolution: usize,
        block_dim: usize,
    ) -> Result<Self, TightenerError> {
        Self::new(
            DMatrix::from_element(gamma_dim, 1, 1.0),
            DVector::from_element(1, lower),
            DVector::from_element(1, upper),
            vec![resolution],
            block_dim,
        )
    }

    pub fn reduced_dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn gamma_dim(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn num_points(&self) -> usize {
        self.resolution.iter().product()
    }

    fn coordinate(&self, dim: usize, idx: usize) -> f64 {
        if self.resolution[dim] == 1 {
            self.lower[dim]
        } else {
            let frac = idx as f64 / (self.resolution[dim] - 1) as f64;
            self.lower[dim] + frac * (self.upper[dim] - self.lower[dim])
        }
    }

    /// Reduced coordinate of grid point `index` (row-major over dimensions).
    pub fn gamma_tilde(&self, index: usize) -> DVector<f64> {
        let mut rem = index;
        let d = self.reduced_dim();
        let mut out = DVector::zeros(d);
        for dim in (0..d).rev() {
            let r = self.resolution[dim];
            out[dim] = self.coordinate(dim, rem % r);
            rem /= r;
        }
        out
    }

    pub fn embed(&self, gamma_tilde: &DVector<f64>) -> TighteningVector {
        let g = &self.embedding * gamma_tilde;
        TighteningVector::new(g, self.block_dim).expect("embedding rows divide into blocks")
    }

    /// Snap a continuous reduced coordinate to the nearest grid point.
    pub fn snap(&self, gamma_tilde: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.reduced_dim(), |k, _| {
            if self.resolution[k] == 1 || self.upper[k] == self.lower[k] {
                self.lower[k]
            } else {
                let step = (self.upper[k] - self.lower[k]) / (self.resolution[k] - 1) as f64;
                let idx = ((gamma_tilde[k] - self.lower[k]) / step).round();
                let idx = idx.clamp(0.0, (self.resolution[k] - 1) as f64) as usize;
                self.coordinate(k, idx)
            }
        })
    }

    /// Grid indices sorted by ascending weighted cost `aᵀDγ̃`, ties broken
    /// lexicographically in `γ̃`.
    pub fn selection_order(&self, weights: &DVector<f64>) -> Vec<usize> {
        let reduced_weights = self.embedding.transpose() * weights;
        let mut keyed: Vec<(f64, DVector<f64>, usize)> = (0..self.num_points())
            .map(|i| {
                let gt = self.gamma_tilde(i);
                (reduced_weights.dot(&gt), gt, i)
            })
            .collect();
        keyed.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then_with(|| lex_cmp(&a.1, &b.1))
        });
        keyed.into_iter().map(|(_, _, i)| i).collect()
    }
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for k in 0..a.len() {
        match a[k].partial_cmp(&b[k]).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Waiting-time rule: a fixed count, or the geometric-ergodicity bound
/// evaluated at the block's starting state with `V(x) = 1 + ½ xᵀPx`.
#[derive(Debug, Clone)]
pub enum TwaitRule {
    Fixed(usize),
    DriftBound {
        vartheta: f64,
        varphi: f64,
        v_quad: DMatrix<f64>,
    },
}

/// Schedule and model parameters of the online update loop.
#[derive(Debug, Clone)]
pub struct TightenerConfig {
    pub delta: f64,
    pub weights: DVector<f64>,
    pub t_wait: TwaitRule,
    pub t_col: usize,
    pub c_rand: usize,
    pub t_final: usize,
    pub gamma0_tilde: DVector<f64>,
    pub eval_horizon: usize,
    pub hyper_prior: HyperPrior,
    /// Rerun the hyperparameter grid search every k-th update (the Laplace
    /// mode itself is refit at every update).
    pub refit_every: usize,
    /// Record every k-th closed-loop step in the trace.
    pub trace_thin: usize,
}

impl TightenerConfig {
    pub fn validate(&self, space: &GammaSpace) -> Result<(), TightenerError> {
        if !(self.delta.is_finite() && self.delta > 0.0 && self.delta < 1.0) {
            return Err(TightenerError::InvalidConfig(
                "delta must lie in (0,1)".into(),
            ));
        }
        if self.weights.len() != space.gamma_dim() {
            return Err(TightenerError::InvalidConfig(
                "weight vector length must equal the tightening dimension".into(),
            ));
        }
        if !self.weights.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(TightenerError::InvalidConfig(
                "weights must be strictly positive".into(),
            ));
        }
        if self.t_col == 0 || self.t_final == 0 || self.c_rand == 0 {
            return Err(TightenerError::InvalidConfig(
                "t_col, t_final, and c_rand must be at least 1".into(),
            ));
        }
        if self.refit_every == 0 || self.trace_thin == 0 {
            return Err(TightenerError::InvalidConfig(
                "refit_every and trace_thin must be at least 1".into(),
            ));
        }
        if let TwaitRule::Fixed(n) = self.t_wait {
            if n == 0 {
                return Err(TightenerError::InvalidConfig(
                    "fixed t_wait must be at least 1".into(),
                ));
            }
        }
        if self.gamma0_tilde.len() != space.reduced_dim() {
            return Err(TightenerError::InvalidConfig(
                "gamma0 must live in the reduced space".into(),
            ));
        }
        Ok(())
    }

    fn t_wait(&self, x: &DVector<f64>, t_final: usize) -> Result<usize, TightenerError> {
        match &self.t_wait {
            TwaitRule::Fixed(n) => Ok(*n),
            TwaitRule::DriftBound {
                vartheta,
                varphi,
                v_quad,
            } => {
                let v = 1.0 + 0.5 * (v_quad * x).dot(x);
                twait_bound(*vartheta, *varphi, v, t_final)
            }
        }
    }
}

fn ceil_snapped(x: f64) -> usize {
    // Guard the printed formulas against float noise right at integers.
    let r = x.round();
    let y = if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    if y <= 0.0 {
        0
    } else {
        y as usize
    }
}

/// Waiting-time lower bound `⌈(log(ϑV(x)) + T_final log 2) / (−log φ)⌉`.
pub fn twait_bound(
    vartheta: f64,
    varphi: f64,
    v_at_x: f64,
    t_final: usize,
) -> Result<usize, TightenerError> {
    if !(varphi > 0.0 && varphi < 1.0) {
        return Err(TightenerError::Domain(format!(
            "varphi must lie in (0,1), got {varphi}"
        )));
    }
    if !(vartheta.is_finite() && vartheta > 0.0) {
        return Err(TightenerError::Domain(format!(
            "vartheta must be positive, got {vartheta}"
        )));
    }
    if !(v_at_x.is_finite() && v_at_x >= 1.0) {
        return Err(TightenerError::Domain(format!(
            "V(x) must be at least 1, got {v_at_x}"
        )));
    }
    let raw = ((vartheta * v_at_x).ln() + t_final as f64 * std::f64::consts::LN_2) / -(varphi.ln());
    Ok(ceil_snapped(raw))
}

/// Collection-time lower bound `⌈c_col · T_final⌉`.
pub fn tcol_bound(c_col: f64, t_final: usize) -> usize {
    assert!(c_col > 0.0, "c_col must be positive");
    ceil_snapped(c_col * t_final as f64)
}

/// Inputs of the quadratic drift certificate: `V(x) = 1 + ½ xᵀPx`, the
/// envelope dynamics `Ã`, the margin matrix `M`, and the symmetric noise
/// covariance factor `Σ` (covariance `Σ²`).
#[derive(Debug, Clone)]
pub struct DriftCertificate {
    pub p: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
}

/// Certified drift constants: contraction factor `μ`, bound `K` inside the
/// sublevel set, and the `P`-norm radius (`level`) of that set.
#[derive(Debug, Clone, Copy)]
pub struct DriftOutputs {
    pub mu: f64,
    pub k: f64,
    pub level: f64,
}

/// Check the certificate conditions and evaluate the drift constants.
pub fn verify_drift_certificate(c: &DriftCertificate) -> Result<DriftOutputs, TightenerError> {
    let n = c.p.nrows();
    for (name, m) in [
        ("P", &c.p),
        ("M", &c.m),
        ("A_tilde", &c.a_tilde),
        ("Sigma_w", &c.sigma_w),
    ] {
        if m.nrows() != n || m.ncols() != n {
            return Err(TightenerError::Certificate(format!(
                "{name} must be {n}x{n}"
            )));
        }
    }
    crate::numerics::check_symmetric(&c.p, 1e-10)
        .map_err(|_| TightenerError::Certificate("P is not symmetric".into()))?;
    crate::numerics::check_symmetric(&c.m, 1e-10)
        .map_err(|_| TightenerError::Certificate("M is not symmetric".into()))?;
    crate::numerics::check_symmetric(&c.sigma_w, 1e-10)
        .map_err(|_| TightenerError::Certificate("Sigma_w is not symmetric".into()))?;

    let p_eig = c.p.clone().symmetric_eigen();
    let p_min = p_eig.eigenvalues.min();
    let p_scale = p_eig.eigenvalues.amax().max(1.0);
    if p_min < 1e-10 * p_scale {
        return Err(TightenerError::Certificate(
            "P is not positive definite".into(),
        ));
    }

    // ÃᵀPÃ − P + M must be negative definite.
    let drift = c.a_tilde.transpose() * &c.p * &c.a_tilde - &c.p + &c.m;
    let drift_eig = drift.symmetric_eigen().eigenvalues;
    let drift_scale = drift_eig.amax().max(1.0);
    if drift_eig.max() > -1e-10 * drift_scale.min(1.0) {
        return Err(TightenerError::Certificate(
            "AᵀPA − P + M is not negative definite".into(),
        ));
    }

    // P − M must be positive definite.
    let pm = &c.p - &c.m;
    let pm_eig = pm.clone().symmetric_eigen().eigenvalues;
    if pm_eig.min() < 1e-10 {
        return Err(TightenerError::Certificate(
            "P − M is not positive definite".into(),
        ));
    }

    // μ = ½ (1 + eig_max(P^{-1/2} (P − M) P^{-1/2}))
    let mut p_inv_sqrt = DMatrix::zeros(n, n);
    for i in 0..n {
        let col = p_eig.eigenvectors.column(i);
        let scale = 1.0 / p_eig.eigenvalues[i].sqrt();
        p_inv_sqrt += col * col.transpose() * scale;
    }
    let middle = &p_inv_sqrt * &pm * &p_inv_sqrt;
    let eig_max = middle.symmetric_eigen().eigenvalues.max();
    let mu = 0.5 * (1.0 + eig_max);
    if !(mu.is_finite() && mu < 1.0) {
        return Err(TightenerError::Certificate(format!(
            "contraction factor mu = {mu} is not below one"
        )));
    }

    let trace_term = (c.sigma_w.transpose() * &c.p * &c.sigma_w).trace();
    let level = trace_term / (1.0 - mu) + 2.0;
    let k = 1.0 + 0.5 * (trace_term / (1.0 - mu) + 1.0);
    Ok(DriftOutputs { mu, k, level })
}

/// Result of [`select_gamma`]: the first feasible grid point in ascending
/// weighted-cost order.
#[derive(Debug, Clone)]
pub struct SelectedGamma {
    pub gamma_tilde: DVector<f64>,
    pub gamma: TighteningVector,
    pub probability: f64,
}

/// Scan the grid in ascending `aᵀγ` order and return the first point the
/// model predicts feasible (`Ĥ ≥ 1 − δ`); `None` when the whole grid fails.
pub fn select_gamma(
    model: &LaplaceFit,
    space: &GammaSpace,
    cfg: &TightenerConfig,
) -> Option<SelectedGamma> {
    let threshold = 1.0 - cfg.delta;
    for idx in space.selection_order(&cfg.weights) {
        let gamma_tilde = space.gamma_tilde(idx);
        let gamma = space.embed(&gamma_tilde);
        let p = predict(model, gamma.as_vector());
        if p.probability >= threshold {
            return Some(SelectedGamma {
                gamma_tilde,
                gamma,
                probability: p.probability,
            });
        }
    }
    None
}

/// Uniform draw on the reduced box, snapped to the grid so that binomial
/// aggregation can reuse the input.
pub fn random_gamma(space: &GammaSpace, rng: &mut RngStream) -> (DVector<f64>, TighteningVector) {
    let cont = DVector::from_fn(space.reduced_dim(), |k, _| {
        space.lower[k] + (space.upper[k] - space.lower[k]) * rng.next_unit()
    });
    let snapped = space.snap(&cont);
    let gamma = space.embed(&snapped);
    (snapped, gamma)
}

/// One recorded closed-loop step: the state at time `t`, the input applied
/// at `t`, whether the state satisfied the constraint, and the stage cost.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub label: bool,
    pub stage_cost: f64,
}

/// One γ-update event.
#[derive(Debug, Clone)]
pub struct UpdateRecord {
    pub index: usize,
    pub t: usize,
    pub x: DVector<f64>,
    pub gamma_tilde: DVector<f64>,
    pub feasible: bool,
    pub random: bool,
    pub psi: f64,
    pub lambda: f64,
    pub dataset_trials: u64,
}

/// Final choice over all visited tightening vectors.
#[derive(Debug, Clone)]
pub struct FinalSelection {
    pub gamma_tilde: DVector<f64>,
    pub gamma: TighteningVector,
    pub probability: f64,
}

/// Complete audit trail of one run of the online update loop.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub updates: Vec<UpdateRecord>,
    pub steps: Vec<StepRecord>,
    pub final_gamma: Option<FinalSelection>,
    pub final_infeasible: bool,
    pub final_model: Option<LaplaceFit>,
    pub dataset: ClassificationDataset,
}

/// Execute the online constraint-tightening loop.
pub fn run(
    plant: &LinearPlant,
    spec: &OcpSpec,
    space: &GammaSpace,
    cfg: &TightenerConfig,
    rng: RngStream,
) -> Result<RunTrace, TightenerError> {
    cfg.validate(space)?;
    if space.gamma_dim() != spec.tightening_dim() || space.block_dim() != spec.constraint_dim() {
        return Err(TightenerError::InvalidConfig(
            "gamma space does not match the OCP dimensions".into(),
        ));
    }
    if plant.state_dim() != spec.state_dim() || plant.input_dim() != spec.input_dim() {
        return Err(TightenerError::InvalidConfig(
            "plant and OCP dimensions differ".into(),
        ));
    }

    let mut noise_rng = rng.substream(1);
    let mut gamma_rng = rng.substream(2);

    let mut x = DVector::<f64>::zeros(plant.state_dim());
    let mut t: usize = 0;
    let mut i: usize = 0;
    let mut t_i: usize = 0;
    let mut t_wait_i = cfg.t_wait(&x, cfg.t_final)?;

    let gamma0_tilde = space.snap(&cfg.gamma0_tilde);
    let mut gamma_tilde = gamma0_tilde.clone();
    let mut gamma = space.embed(&gamma_tilde);

    let mut dataset = ClassificationDataset::new();
    let mut kernel: Option<SeKernel> = None;
    let mut last_fit: Option<LaplaceFit> = None;
    let mut visited: Vec<(DVector<f64>, TighteningVector)> =
        vec![(gamma_tilde.clone(), gamma.clone())];

    let mut updates = vec![UpdateRecord {
        index: 0,
        t: 0,
        x: x.clone(),
        gamma_tilde: gamma_tilde.clone(),
        feasible: false,
        random: false,
        psi: f64::NAN,
        lambda: f64::NAN,
        dataset_trials: 0,
    }];
    let mut steps = Vec::new();

    while i < cfg.t_final {
        let control = mpc_control(spec, &x, &gamma)?;
        if t.is_multiple_of(cfg.trace_thin) {
            steps.push(StepRecord {
                t,
                x: x.clone(),
                u: control.u0.clone(),
                label: constraint_label(&plant.constraint, &x),
                stage_cost: spec.stage_cost(&x, &control.u0),
            });
        }
        x = step(plant, &x, &control.u0, &mut noise_rng);
        t += 1;

        let collect_from = t_i + t_wait_i;
        let block_end = collect_from + cfg.t_col;
        if t >= collect_from && t < block_end {
            dataset.add_label(gamma.as_vector(), constraint_label(&plant.constraint, &x));
        } else if t == block_end {
            i += 1;
            t_i = t;
            t_wait_i = cfg.t_wait(&x, cfg.t_final)?;

            let refresh = kernel.is_none() || i.is_multiple_of(cfg.refit_every) || i == cfg.t_final;
            if refresh {
                kernel = Some(map_hyperparameters(&dataset, &cfg.hyper_prior)?);
            }
            let k = kernel.expect("kernel set above");
            let fit = laplace_fit(&dataset, &k)?;

            let selection = select_gamma(&fit, space, cfg);
            let feasible = selection.is_some();
            let scheduled_random = i.is_multiple_of(cfg.c_rand);
            let random = scheduled_random || !feasible;
            if random {
                let (gt, gv) = random_gamma(space, &mut gamma_rng);
                gamma_tilde = gt;
                gamma = gv;
            } else {
                let sel = selection.expect("feasible selection");
                gamma_tilde = sel.gamma_tilde;
                gamma = sel.gamma;
            }

            updates.push(UpdateRecord {
                index: i,
                t: t_i,
                x: x.clone(),
                gamma_tilde: gamma_tilde.clone(),
                feasible,
                random,
                psi: k.psi,
                lambda: k.lambda,
                dataset_trials: dataset.total_trials(),
            });
            visited.push((gamma_tilde.clone(), gamma.clone()));
            last_fit = Some(fit);
        }
    }

    // Final selection over every visited candidate under the last model.
    let fit = last_fit.as_ref().expect("t_final >= 1 guarantees one fit");
    let threshold = 1.0 - cfg.delta;
    let mut seen: Vec<Vec<u64>> = Vec::new();
    let mut best: Option<(f64, DVector<f64>, TighteningVector, f64)> = None;
    for (gt, gv) in &visited {
        let key: Vec<u64> = gt.iter().map(|v| v.to_bits()).collect();
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let p = predict(fit, gv.as_vector());
        if p.probability < threshold {
            continue;
        }
        let cost = cfg.weights.dot(gv.as_vector());
        let better = match &best {
            None => true,
            Some((bc, bgt, _, _)) => {
                cost < *bc || (cost == *bc && lex_cmp(gt, bgt) == std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some((cost, gt.clone(), gv.clone(), p.probability));
        }
    }
    let final_gamma = best.map(|(_, gt, gv, p)| FinalSelection {
        gamma_tilde: gt,
        gamma: gv,
        probability: p,
    });
    let final_infeasible = final_gamma.is_none();

    Ok(RunTrace {
        updates,
        steps,
        final_gamma,
        final_infeasible,
        final_model: last_fit,
        dataset,
    })
}

/// Closed-loop evaluation summary under a fixed tightening vector.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub steps: Vec<StepRecord>,
    pub satisfaction_rate: f64,
    pub avg_cost: f64,
    pub counted_steps: usize,
}

/// Roll the closed loop forward for `burn_in + horizon` steps from the
/// origin; satisfaction rate and average stage cost are taken over the
/// `horizon` steps after burn-in. Set `record` to keep the whole rollout.
pub fn evaluate_closed_loop(
    plant: &LinearPlant,
    spec: &OcpSpec,
    gamma: &TighteningVector,
    horizon: usize,
    burn_in: usize,
    rng: &mut RngStream,
    record: bool,
) -> Result<EvalResult, TightenerError> {
    if horizon == 0 {
        return Err(TightenerError::Domain("horizon must be at least 1".into()));
    }
    let mut x = DVector::<f64>::zeros(plant.state_dim());
    let mut steps = Vec::new();
    let mut satisfied: u64 = 0;
    let mut cost_sum = 0.0;
    for t in 0..burn_in + horizon {
        let control = mpc_control(spec, &x, gamma)?;
        let label = constraint_label(&plant.constraint, &x);
        let stage_cost = spec.stage_cost(&x, &control.u0);
        if t >= burn_in {
            satisfied += u64::from(label);
            cost_sum += stage_cost;
        }
        if record {
            steps.push(StepRecord {
                t,
                x: x.clone(),
                u: control.u0.clone(),
                label,
                stage_cost,
            });
        }
        x = step(plant, &x, &control.u0, rng);
    }
    Ok(EvalResult {
        steps,
        satisfaction_rate: satisfied as f64 / horizon as f64,
        avg_cost: cost_sum / horizon as f64,
        counted_steps: horizon,
    })
}

/// Average constraint-satisfaction rate over a closed-loop simulation.
pub fn estimate_h(
    plant: &LinearPlant,
    spec: &OcpSpec,
    gamma: &TighteningVector,
    horizon: usize,
    burn_in: usize,
    rng: &mut RngStream,
) -> Result<f64, TightenerError> {
    Ok(evaluate_closed_loop(plant, spec, gamma, horizon, burn_in, rng, false)?.satisfaction_rate)
}

fn join_tilde(gt: &DVector<f64>) -> String {
    gt.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Write the per-update trace as CSV.
pub fn write_updates_csv<W: Write>(updates: &[UpdateRecord], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "i,t_i,gamma_tilde,feasible,random,psi,lambda,dataset_size"
    )?;
    for u in updates {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            u.index,
            u.t,
            join_tilde(&u.gamma_tilde),
            u8::from(u.feasible),
            u8::from(u.random),
            u.psi,
            u.lambda,
            u.dataset_trials
        )?;
    }
    Ok(())
}

/// Write a per-step log as CSV with one column per state/input component.
pub fn write_steps_csv<W: Write>(steps: &[StepRecord], mut out: W) -> io::Result<()> {
    let (d_x, d_u) = steps
        .first()
        .map(|s| (s.x.len(), s.u.len()))
        .unwrap_or((0, 0));
    let mut header = String::from("t");
    for i in 0..d_x {
        header.push_str(&format!(",x{}", i + 1));
    }
    if d_u == 1 {
        header.push_str(",u");
    } else {
        for i in 0..d_u {
            header.push_str(&format!(",u{}", i + 1));
        }
    }
    header.push_str(",label,stage_cost");
    writeln!(out, "{header}")?;
    for s in steps {
        let mut line = format!("{}", s.t);
        for v in s.x.iter() {
            line.push_str(&format!(",{v}"));
        }
        for v in s.u.iter() {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{},{}", u8::from(s.label), s.stage_cost));
        writeln!(out, "{line}")?;
    }
    Ok(())
}
