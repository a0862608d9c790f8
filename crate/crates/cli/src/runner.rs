//! Experiment orchestration: one cell per (method, risk, seed), each with
//! its own RNG streams and output directory, plus the summary table and the
//! replay path that re-derives metrics from stored traces.

use crate::config::{Experiment, Method};
use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use smpc_tighten::baselines::{chebyshev_tightening, gaussian_tightening, scenario_tightening};
use smpc_tighten::gp_classify::write_snapshot;
use smpc_tighten::plant::RngStream;
use smpc_tighten::smpc::TighteningVector;
use smpc_tighten::tightener::{
    evaluate_closed_loop, run, write_steps_csv, write_updates_csv, StepRecord,
};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Substream tags: the training loop consumes the cell stream itself (with
/// its own internal tags), evaluation and scenario sampling get their own.
const EVAL_STREAM: u64 = 11;
const SCENARIO_STREAM: u64 = 12;

#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub delta: f64,
    pub seed: u64,
    pub gamma_desc: String,
    pub empirical_h: f64,
    pub avg_cost: f64,
    pub runtime_s: f64,
    pub dir: PathBuf,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub cells: Vec<CellResult>,
    pub failures: Vec<String>,
    pub summary_path: PathBuf,
}

fn cell_dir_name(method: Method, delta: f64, seed: u64) -> String {
    format!("{}_d{}_s{}", method.as_str(), delta, seed)
}

fn write_tightening_csv(path: &Path, gamma: &TighteningVector) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "tau,row,g")?;
    for tau in 0..gamma.num_steps() {
        let block = gamma.block(tau);
        for r in 0..gamma.block_dim() {
            writeln!(out, "{tau},{r},{}", block[r])?;
        }
    }
    Ok(())
}

fn run_cell(
    exp: &Experiment,
    method: Method,
    delta: f64,
    seed: u64,
    dir: &Path,
) -> Result<CellResult> {
    fs::create_dir_all(dir)?;
    let started = Instant::now();
    let base = RngStream::new(seed);

    let mut cfg = exp.tightener.clone();
    cfg.delta = delta;

    let (gamma, gamma_desc) = match method {
        Method::Learned => {
            let trace = run(&exp.plant, &exp.spec, &exp.space, &cfg, base)
                .map_err(|e| anyhow!("training run failed: {e}"))?;
            write_updates_csv(
                &trace.updates,
                BufWriter::new(File::create(dir.join("updates.csv"))?),
            )?;
            write_steps_csv(
                &trace.steps,
                BufWriter::new(File::create(dir.join("train_steps.csv"))?),
            )?;
            if let Some(model) = &trace.final_model {
                write_snapshot(
                    model,
                    BufWriter::new(File::create(dir.join("model.snapshot"))?),
                )?;
            }
            let f = trace.final_gamma.as_ref().ok_or_else(|| {
                anyhow!("final selection infeasible: no visited candidate met the risk target")
            })?;
            let desc = f
                .gamma_tilde
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(";");
            (f.gamma.clone(), desc)
        }
        Method::Chebyshev => {
            let g = chebyshev_tightening(
                &exp.plant.a,
                &exp.plant.noise.covariance(),
                &exp.plant.constraint,
                delta,
                exp.spec.horizon,
            )?;
            let desc = format!("{}", cfg.weights.dot(g.as_vector()));
            (g, desc)
        }
        Method::Gaussian => {
            // Probabilistic-reachable-set style: exact Gaussian quantiles
            // when the noise is Gaussian, Chebyshev bound otherwise.
            let g = if exp.plant.noise.is_gaussian() {
                gaussian_tightening(
                    &exp.plant.a,
                    &exp.plant.noise.covariance(),
                    &exp.plant.constraint,
                    delta,
                    exp.spec.horizon,
                )?
            } else {
                chebyshev_tightening(
                    &exp.plant.a,
                    &exp.plant.noise.covariance(),
                    &exp.plant.constraint,
                    delta,
                    exp.spec.horizon,
                )?
            };
            let desc = format!("{}", cfg.weights.dot(g.as_vector()));
            (g, desc)
        }
        Method::Scenario => {
            let mut rng = base.substream(SCENARIO_STREAM);
            let g = scenario_tightening(
                &exp.plant.a,
                &exp.plant.noise,
                &exp.plant.constraint,
                delta,
                exp.spec.horizon,
                exp.scenario_samples,
                &mut rng,
            )?;
            let desc = format!("{}", cfg.weights.dot(g.as_vector()));
            (g, desc)
        }
    };

    write_tightening_csv(&dir.join("tightening.csv"), &gamma)?;

    let mut eval_rng = base.substream(EVAL_STREAM);
    let eval = evaluate_closed_loop(
        &exp.plant,
        &exp.spec,
        &gamma,
        exp.eval_horizon,
        exp.eval_burn_in,
        &mut eval_rng,
        true,
    )
    .map_err(|e| anyhow!("evaluation failed: {e}"))?;
    write_steps_csv(
        &eval.steps,
        BufWriter::new(File::create(dir.join("steps.csv"))?),
    )?;

    let runtime_s = started.elapsed().as_secs_f64();
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut meta = BufWriter::new(File::create(dir.join("meta.toml"))?);
    writeln!(meta, "schema = \"smpc-tighten cell v1\"")?;
    writeln!(meta, "method = \"{}\"", method.as_str())?;
    writeln!(meta, "delta = {delta}")?;
    writeln!(meta, "seed = {seed}")?;
    writeln!(meta, "gamma = \"{gamma_desc}\"")?;
    writeln!(meta, "empirical_h = {}", eval.satisfaction_rate)?;
    writeln!(meta, "avg_cost = {}", eval.avg_cost)?;
    writeln!(meta, "eval_horizon = {}", exp.eval_horizon)?;
    writeln!(meta, "eval_burn_in = {}", exp.eval_burn_in)?;
    writeln!(meta, "runtime_s = {runtime_s}")?;
    writeln!(meta, "timestamp_unix = {timestamp}")?;

    Ok(CellResult {
        method,
        delta,
        seed,
        gamma_desc,
        empirical_h: eval.satisfaction_rate,
        avg_cost: eval.avg_cost,
        runtime_s,
        dir: dir.to_path_buf(),
    })
}

/// Run every (method, δ, seed) cell, write per-cell traces and the summary
/// table. Cells run in a worker pool of `jobs` threads; the summary order is
/// the deterministic (method, δ, seed) product order regardless of timing.
pub fn run_experiment(
    exp: &Experiment,
    out_dir: &Path,
    jobs: usize,
    seed_offset: u64,
) -> Result<ExperimentOutcome> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let mut cells: Vec<(Method, f64, u64)> = Vec::new();
    for &method in &exp.methods {
        for &delta in &exp.deltas {
            for &seed in &exp.seeds {
                cells.push((method, delta, seed + seed_offset));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building worker pool")?;
    let results: Vec<Result<CellResult>> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|&(method, delta, seed)| {
                let dir = out_dir.join(cell_dir_name(method, delta, seed));
                run_cell(exp, method, delta, seed, &dir).with_context(|| {
                    format!("cell method={} delta={delta} seed={seed}", method.as_str())
                })
            })
            .collect()
    });

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(c) => ok.push(c),
            Err(e) => failures.push(format!("{e:#}")),
        }
    }

    let summary_path = out_dir.join("summary.csv");
    let mut out = BufWriter::new(File::create(&summary_path)?);
    writeln!(
        out,
        "method,delta,seed,gamma,empirical_H,avg_cost,runtime_s"
    )?;
    for c in &ok {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.method.as_str(),
            c.delta,
            c.seed,
            c.gamma_desc,
            c.empirical_h,
            c.avg_cost,
            c.runtime_s
        )?;
    }
    drop(out);

    Ok(ExperimentOutcome {
        cells: ok,
        failures,
        summary_path,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellMeta {
    schema: String,
    method: String,
    delta: f64,
    seed: u64,
    gamma: String,
    empirical_h: f64,
    avg_cost: f64,
    eval_horizon: usize,
    eval_burn_in: usize,
    runtime_s: f64,
    timestamp_unix: u64,
}

/// Metrics re-derived from a stored trace.
#[derive(Debug)]
pub struct ReplaySummary {
    pub method: String,
    pub delta: f64,
    pub seed: u64,
    pub empirical_h: f64,
    pub avg_cost: f64,
    pub stored_empirical_h: f64,
    pub stored_avg_cost: f64,
}

impl ReplaySummary {
    pub fn matches(&self, tol: f64) -> bool {
        (self.empirical_h - self.stored_empirical_h).abs() <= tol
            && (self.avg_cost - self.stored_avg_cost).abs() <= tol
    }
}

/// Recompute the summary metrics of one cell from its `steps.csv`.
pub fn replay(dir: &Path) -> Result<ReplaySummary> {
    let meta_text = fs::read_to_string(dir.join("meta.toml"))
        .with_context(|| format!("reading {}/meta.toml", dir.display()))?;
    let meta: CellMeta = toml::from_str(&meta_text).context("parsing meta.toml")?;
    if !meta.schema.starts_with("smpc-tighten cell") {
        bail!("unrecognized trace schema '{}'", meta.schema);
    }
    let _ = (meta.runtime_s, meta.timestamp_unix, &meta.gamma);

    let steps_text = fs::read_to_string(dir.join("steps.csv"))
        .with_context(|| format!("reading {}/steps.csv", dir.display()))?;
    let mut lines = steps_text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty steps.csv"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let t_col = columns
        .iter()
        .position(|c| *c == "t")
        .ok_or_else(|| anyhow!("steps.csv missing column 't'"))?;
    let label_col = columns
        .iter()
        .position(|c| *c == "label")
        .ok_or_else(|| anyhow!("steps.csv missing column 'label'"))?;
    let cost_col = columns
        .iter()
        .position(|c| *c == "stage_cost")
        .ok_or_else(|| anyhow!("steps.csv missing column 'stage_cost'"))?;

    let mut satisfied: u64 = 0;
    let mut cost_sum = 0.0;
    let mut counted: usize = 0;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let t: usize = fields[t_col].parse().context("bad t field")?;
        if t < meta.eval_burn_in {
            continue;
        }
        let label: u8 = fields[label_col].parse().context("bad label field")?;
        let cost: f64 = fields[cost_col].parse().context("bad stage_cost field")?;
        satisfied += u64::from(label == 1);
        cost_sum += cost;
        counted += 1;
    }
    if counted != meta.eval_horizon {
        bail!(
            "steps.csv holds {counted} evaluation rows, meta declares {}",
            meta.eval_horizon
        );
    }
    Ok(ReplaySummary {
        method: meta.method,
        delta: meta.delta,
        seed: meta.seed,
        empirical_h: satisfied as f64 / counted as f64,
        avg_cost: cost_sum / counted as f64,
        stored_empirical_h: meta.empirical_h,
        stored_avg_cost: meta.avg_cost,
    })
}

/// Deterministic per-step record access for tests.
pub fn read_step_labels(path: &Path) -> Result<Vec<StepRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty steps file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let d_x = columns.iter().filter(|c| c.starts_with('x')).count();
    let d_u = columns
        .iter()
        .filter(|c| **c == "u" || (c.starts_with('u') && c.len() > 1))
        .count();
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let t: usize = f[0].parse()?;
        let x = smpc_tighten::DVector::from_iterator(
            d_x,
            (0..d_x).map(|i| f[1 + i].parse::<f64>().unwrap()),
        );
        let u = smpc_tighten::DVector::from_iterator(
            d_u,
            (0..d_u).map(|i| f[1 + d_x + i].parse::<f64>().unwrap()),
        );
        let label: u8 = f[1 + d_x + d_u].parse()?;
        let stage_cost: f64 = f[2 + d_x + d_u].parse()?;
        out.push(StepRecord {
            t,
            x,
            u,
            label: label == 1,
            stage_cost,
        });
    }
    Ok(out)
}
