//! Experiment configuration: TOML schema, validation, and construction of
//! the core model objects. Unknown keys are rejected with the parser's
//! line/column information.

use serde::Deserialize;
use smpc_tighten::gp_classify::HyperPrior;
use smpc_tighten::numerics::{solve_discrete_lyapunov, solve_discrete_lyapunov_transposed};
use smpc_tighten::plant::{AffineConstraint, LinearPlant, NoiseModel};
use smpc_tighten::smpc::OcpSpec;
use smpc_tighten::tightener::{GammaSpace, TightenerConfig, TwaitRule};
use smpc_tighten::{DMatrix, DVector};
use std::fmt;
use std::path::{Path, PathBuf};

/// Configuration failure: either a parse error (with location info from the
/// TOML parser) or a validation error naming the offending field.
#[derive(Debug)]
pub enum ConfigError {
    Parse(String),
    Validation { field: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Validation { field, message } => {
                write!(f, "invalid config field `{field}`: {message}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RootToml {
    plant: PlantToml,
    ocp: OcpToml,
    gamma: GammaToml,
    tightener: TightenerToml,
    experiment: ExperimentToml,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantToml {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    noise: NoiseToml,
    constraint: ConstraintToml,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseToml {
    kind: String,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    mean: Option<Vec<f64>>,
    std: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintToml {
    h: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OcpToml {
    horizon: usize,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    terminal: Option<String>,
    p: Option<Vec<Vec<f64>>>,
    input_lower: Vec<f64>,
    input_upper: Vec<f64>,
    slack_weight: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaToml {
    embedding: Option<Vec<Vec<f64>>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    gamma0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TightenerToml {
    t_wait: Option<usize>,
    t_wait_bound: Option<TwaitBoundToml>,
    t_col: Option<usize>,
    t_final: Option<usize>,
    c_rand: Option<usize>,
    refit_every: Option<usize>,
    trace_thin: Option<usize>,
    weights: Option<Vec<f64>>,
    log_psi_mean: Option<f64>,
    log_psi_std: Option<f64>,
    log_lambda_mean: Option<f64>,
    log_lambda_std: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwaitBoundToml {
    vartheta: f64,
    varphi: f64,
    v_quad: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentToml {
    methods: Vec<String>,
    deltas: Option<Vec<f64>>,
    satisfaction_targets: Option<Vec<f64>>,
    seeds: Vec<u64>,
    eval_horizon: Option<usize>,
    eval_burn_in: Option<usize>,
    scenario_samples: Option<usize>,
    out_dir: Option<String>,
}

/// Tightening method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Learned,
    Chebyshev,
    Gaussian,
    Scenario,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Learned => "learned",
            Method::Chebyshev => "chebyshev",
            Method::Gaussian => "gaussian",
            Method::Scenario => "scenario",
        }
    }

    fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "learned" => Ok(Method::Learned),
            "chebyshev" => Ok(Method::Chebyshev),
            "gaussian" => Ok(Method::Gaussian),
            "scenario" => Ok(Method::Scenario),
            other => Err(invalid(
                "experiment.methods",
                format!("unknown method '{other}'"),
            )),
        }
    }
}

/// Schedule profile overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

/// A fully validated experiment: core objects ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub plant: LinearPlant,
    pub spec: OcpSpec,
    pub space: GammaSpace,
    /// Template tightener configuration; the per-cell risk is substituted in.
    pub tightener: TightenerConfig,
    pub methods: Vec<Method>,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub eval_horizon: usize,
    pub eval_burn_in: usize,
    pub scenario_samples: usize,
    pub out_dir: Option<PathBuf>,
}

impl Experiment {
    pub fn apply_profile(&mut self, profile: Profile) {
        match profile {
            Profile::Desk => {
                self.tightener.t_wait = TwaitRule::Fixed(200);
                self.tightener.t_col = 1000;
                self.tightener.t_final = 100;
                self.eval_horizon = 10_000;
            }
            Profile::Paper => {
                self.tightener.t_wait = TwaitRule::Fixed(500);
                self.tightener.t_col = 5000;
                self.tightener.t_final = 150;
                self.eval_horizon = 20_000;
            }
        }
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    if rows.is_empty() {
        return Err(invalid(field, "matrix must have at least one row"));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(invalid(
            field,
            "matrix rows must be nonempty and equal-length",
        ));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(invalid(field, "matrix entries must be finite"));
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn vector(field: &str, values: &[f64]) -> Result<DVector<f64>, ConfigError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(DVector::from_row_slice(values))
}

fn build_noise(toml: &NoiseToml, d_x: usize) -> Result<NoiseModel, ConfigError> {
    let model = match toml.kind.as_str() {
        "uniform" => {
            let lower = toml
                .lower
                .as_ref()
                .ok_or_else(|| invalid("plant.noise.lower", "required for uniform noise"))?;
            let upper = toml
                .upper
                .as_ref()
                .ok_or_else(|| invalid("plant.noise.upper", "required for uniform noise"))?;
            if toml.mean.is_some() || toml.std.is_some() {
                return Err(invalid(
                    "plant.noise",
                    "mean/std are not valid for uniform noise",
                ));
            }
            NoiseModel::UniformBox {
                lower: vector("plant.noise.lower", lower)?,
                upper: vector("plant.noise.upper", upper)?,
            }
        }
        "gaussian" => {
            let mean = toml
                .mean
                .as_ref()
                .ok_or_else(|| invalid("plant.noise.mean", "required for gaussian noise"))?;
            let std = toml
                .std
                .as_ref()
                .ok_or_else(|| invalid("plant.noise.std", "required for gaussian noise"))?;
            if toml.lower.is_some() || toml.upper.is_some() {
                return Err(invalid(
                    "plant.noise",
                    "lower/upper are not valid for gaussian noise",
                ));
            }
            NoiseModel::GaussianDiag {
                mean: vector("plant.noise.mean", mean)?,
                std: vector("plant.noise.std", std)?,
            }
        }
        other => {
            return Err(invalid(
                "plant.noise.kind",
                format!("expected 'uniform' or 'gaussian', got '{other}'"),
            ))
        }
    };
    model
        .validate()
        .map_err(|e| invalid("plant.noise", e.to_string()))?;
    if model.dim() != d_x {
        return Err(invalid(
            "plant.noise",
            format!("noise dimension {} must equal d_x = {d_x}", model.dim()),
        ));
    }
    Ok(model)
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    load_config_str(&text)
}

/// Parse and validate config text.
pub fn load_config_str(text: &str) -> Result<Experiment, ConfigError> {
    let root: RootToml = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;

    let a = matrix("plant.a", &root.plant.a)?;
    let d_x = a.nrows();
    if a.ncols() != d_x {
        return Err(invalid("plant.a", "must be square"));
    }
    let b = matrix("plant.b", &root.plant.b)?;
    if b.nrows() != d_x {
        return Err(invalid("plant.b", "row count must match plant.a"));
    }
    let h = matrix("plant.constraint.h", &root.plant.constraint.h)?;
    let offset = vector("plant.constraint.offset", &root.plant.constraint.offset)?;
    let constraint =
        AffineConstraint::new(h, offset).map_err(|e| invalid("plant.constraint", e.to_string()))?;
    let noise = build_noise(&root.plant.noise, d_x)?;
    let plant = LinearPlant::new(a.clone(), b.clone(), noise, constraint.clone())
        .map_err(|e| invalid("plant", e.to_string()))?;

    let q = matrix("ocp.q", &root.ocp.q)?;
    let r = matrix("ocp.r", &root.ocp.r)?;
    let p = match (&root.ocp.terminal, &root.ocp.p) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "ocp.terminal",
                "give either `terminal` or `p`, not both",
            ))
        }
        (None, Some(rows)) => matrix("ocp.p", rows)?,
        (rule, None) => {
            let rule = rule.as_deref().unwrap_or("lyapunov-printed");
            match rule {
                "lyapunov-printed" => solve_discrete_lyapunov(&a, &q)
                    .map_err(|e| invalid("ocp.terminal", e.to_string()))?,
                "lyapunov-transposed" => solve_discrete_lyapunov_transposed(&a, &q)
                    .map_err(|e| invalid("ocp.terminal", e.to_string()))?,
                other => {
                    return Err(invalid(
                        "ocp.terminal",
                        format!(
                            "expected 'lyapunov-printed' or 'lyapunov-transposed', got '{other}'"
                        ),
                    ))
                }
            }
        }
    };
    let spec = OcpSpec::new(
        root.ocp.horizon,
        a.clone(),
        b,
        q,
        r,
        p.clone(),
        vector("ocp.input_lower", &root.ocp.input_lower)?,
        vector("ocp.input_upper", &root.ocp.input_upper)?,
        constraint,
        root.ocp.slack_weight.unwrap_or(1e8),
    )
    .map_err(|e| invalid("ocp", e.to_string()))?;

    let d_gamma = spec.tightening_dim();
    let embedding = match &root.gamma.embedding {
        Some(rows) => {
            let m = matrix("gamma.embedding", rows)?;
            if m.nrows() != d_gamma {
                return Err(invalid(
                    "gamma.embedding",
                    format!("must have {d_gamma} rows (N · d_c)"),
                ));
            }
            m
        }
        None => DMatrix::from_element(d_gamma, 1, 1.0),
    };
    let space = GammaSpace::new(
        embedding,
        vector("gamma.lower", &root.gamma.lower)?,
        vector("gamma.upper", &root.gamma.upper)?,
        root.gamma.resolution.clone(),
        spec.constraint_dim(),
    )
    .map_err(|e| invalid("gamma", e.to_string()))?;

    let gamma0 = match &root.gamma.gamma0 {
        Some(v) => vector("gamma.gamma0", v)?,
        None => DVector::zeros(space.reduced_dim()),
    };
    if gamma0.len() != space.reduced_dim() {
        return Err(invalid(
            "gamma.gamma0",
            "length must equal the reduced dimension",
        ));
    }

    let t = &root.tightener;
    let t_wait = match (&t.t_wait, &t.t_wait_bound) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "tightener.t_wait",
                "give either `t_wait` or `t_wait_bound`, not both",
            ))
        }
        (Some(n), None) => TwaitRule::Fixed(*n),
        (None, Some(bound)) => {
            if !(bound.varphi.is_finite() && bound.varphi > 0.0 && bound.varphi < 1.0) {
                return Err(invalid(
                    "tightener.t_wait_bound.varphi",
                    "must lie in (0,1)",
                ));
            }
            if !(bound.vartheta.is_finite() && bound.vartheta > 0.0) {
                return Err(invalid(
                    "tightener.t_wait_bound.vartheta",
                    "must be positive",
                ));
            }
            let v_quad = match &bound.v_quad {
                Some(rows) => matrix("tightener.t_wait_bound.v_quad", rows)?,
                None => p.clone(),
            };
            TwaitRule::DriftBound {
                vartheta: bound.vartheta,
                varphi: bound.varphi,
                v_quad,
            }
        }
        (None, None) => TwaitRule::Fixed(500),
    };
    let weights = match &t.weights {
        Some(w) => {
            let w = vector("tightener.weights", w)?;
            if w.len() != d_gamma || !w.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(invalid(
                    "tightener.weights",
                    format!("must be {d_gamma} strictly positive entries"),
                ));
            }
            w
        }
        None => DVector::from_element(d_gamma, 1.0),
    };
    let defaults = HyperPrior::default();
    let hyper_prior = HyperPrior {
        log_psi_mean: t.log_psi_mean.unwrap_or(defaults.log_psi_mean),
        log_psi_std: t.log_psi_std.unwrap_or(defaults.log_psi_std),
        log_lambda_mean: t.log_lambda_mean.unwrap_or(defaults.log_lambda_mean),
        log_lambda_std: t.log_lambda_std.unwrap_or(defaults.log_lambda_std),
    };
    if !(hyper_prior.log_psi_std > 0.0 && hyper_prior.log_lambda_std > 0.0) {
        return Err(invalid("tightener", "hyper-prior stds must be positive"));
    }

    let e = &root.experiment;
    if e.methods.is_empty() {
        return Err(invalid(
            "experiment.methods",
            "must list at least one method",
        ));
    }
    let methods: Vec<Method> = e
        .methods
        .iter()
        .map(|s| Method::parse(s))
        .collect::<Result<_, _>>()?;
    let deltas = match (&e.deltas, &e.satisfaction_targets) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "experiment.deltas",
                "give either `deltas` or `satisfaction_targets`, not both",
            ))
        }
        (Some(d), None) => d.clone(),
        (None, Some(targets)) => targets.iter().map(|t| 1.0 - t).collect(),
        (None, None) => {
            return Err(invalid(
                "experiment.deltas",
                "one of `deltas` or `satisfaction_targets` is required",
            ))
        }
    };
    if deltas.is_empty() {
        return Err(invalid("experiment.deltas", "risk list must be nonempty"));
    }
    for d in &deltas {
        if !(d.is_finite() && *d > 0.0 && *d < 1.0) {
            return Err(invalid(
                "experiment.deltas",
                format!("risk {d} outside (0,1)"),
            ));
        }
    }
    if e.seeds.is_empty() {
        return Err(invalid("experiment.seeds", "must list at least one seed"));
    }
    let eval_horizon = e.eval_horizon.unwrap_or(10_000);
    if eval_horizon == 0 {
        return Err(invalid("experiment.eval_horizon", "must be at least 1"));
    }

    let tightener = TightenerConfig {
        delta: deltas[0],
        weights,
        t_wait,
        t_col: t.t_col.unwrap_or(5000),
        c_rand: t.c_rand.unwrap_or(100),
        t_final: t.t_final.unwrap_or(150),
        gamma0_tilde: gamma0,
        eval_horizon,
        hyper_prior,
        refit_every: t.refit_every.unwrap_or(1),
        trace_thin: t.trace_thin.unwrap_or(1),
    };
    tightener
        .validate(&space)
        .map_err(|err| invalid("tightener", err.to_string()))?;

    Ok(Experiment {
        plant,
        spec,
        space,
        tightener,
        methods,
        deltas,
        seeds: e.seeds.clone(),
        eval_horizon,
        eval_burn_in: e.eval_burn_in.unwrap_or(500),
        scenario_samples: e.scenario_samples.unwrap_or(10_000),
        out_dir: e.out_dir.as_ref().map(PathBuf::from),
    })
}
