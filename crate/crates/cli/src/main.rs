use clap::{Parser, Subcommand, ValueEnum};
use smpc_tighten_cli::{load_config, replay, run_experiment, ConfigError, Profile};
use std::path::PathBuf;
use std::process::ExitCode;

const OUT_DIR_ENV: &str = "SMPC_TIGHTEN_OUT";

#[derive(Parser)]
#[command(
    name = "smpc-tighten",
    about = "Closed-loop learning of constraint-tightening parameters for stochastic MPC",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, risk, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Output directory (default: $SMPC_TIGHTEN_OUT, the config's
        /// out_dir, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the schedule with a named profile.
        #[arg(long, value_enum)]
        profile: Option<ProfileArg>,
        /// Offset added to every seed in the config.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        /// Worker threads for independent cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Parse and validate a config, reporting the first problem found.
    Validate { config: PathBuf },
    /// Re-derive summary metrics from a stored cell trace directory.
    Replay { trace: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            profile,
            seed_offset,
            jobs,
        } => {
            let mut exp = match load_config(&config) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(p) = profile {
                exp.apply_profile(match p {
                    ProfileArg::Desk => Profile::Desk,
                    ProfileArg::Paper => Profile::Paper,
                });
            }
            let out_dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .or_else(|| exp.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            match run_experiment(&exp, &out_dir, jobs, seed_offset) {
                Ok(outcome) => {
                    for c in &outcome.cells {
                        println!(
                            "{} delta={} seed={}: H={:.4} cost={:.4} ({:.1}s) -> {}",
                            c.method.as_str(),
                            c.delta,
                            c.seed,
                            c.empirical_h,
                            c.avg_cost,
                            c.runtime_s,
                            c.dir.display()
                        );
                    }
                    if outcome.failures.is_empty() {
                        println!("summary: {}", outcome.summary_path.display());
                        ExitCode::SUCCESS
                    } else {
                        for f in &outcome.failures {
                            eprintln!("cell failed: {f}");
                        }
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(exp) => {
                println!(
                    "ok: {} method(s) x {} risk value(s) x {} seed(s)",
                    exp.methods.len(),
                    exp.deltas.len(),
                    exp.seeds.len()
                );
                ExitCode::SUCCESS
            }
            Err(e @ ConfigError::Parse(_)) | Err(e @ ConfigError::Validation { .. }) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Command::Replay { trace } => match replay(&trace) {
            Ok(r) => {
                println!(
                    "{} delta={} seed={}: H={} cost={}",
                    r.method, r.delta, r.seed, r.empirical_h, r.avg_cost
                );
                if r.matches(1e-9) {
                    println!("matches stored summary");
                    ExitCode::SUCCESS
                } else {
                    eprintln!(
                        "mismatch: stored H={} cost={}",
                        r.stored_empirical_h, r.stored_avg_cost
                    );
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("replay failed: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
