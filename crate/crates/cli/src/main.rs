use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reward_mcts::harness::{
    ablate, parse_seed_list, run, runtime_profile, solve, sweep_noise, ConfigError,
    ExperimentConfig, ExperimentOutput, HarnessError,
};

/// Environment variable whose seed list replaces the configured seeds.
const SEED_ENV: &str = "REWARD_MCTS_SEED";

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "reward-mcts", version, about = "Reward-centered MCTS experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (flat `key = value` lines); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory that receives the result files.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Added to every seed before running.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,

    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured methods at the configured noise level.
    Run,
    /// Run the full model against each single-component ablation.
    Ablate,
    /// Run the configured methods at every configured noise level.
    SweepNoise,
    /// Per-search runtime per method plus per-node reward cost scaling.
    RuntimeProfile,
    /// Solve the configured environment exactly by value iteration.
    Solve,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Ablate => "ablate",
            Command::SweepNoise => "sweep-noise",
            Command::RuntimeProfile => "runtime-profile",
            Command::Solve => "solve",
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("{SEED_ENV}: {0}")]
    SeedEnv(String),
    #[error("seed offset overflows seed {0}")]
    SeedOverflow(u64),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::ReadConfig { .. }
            | CliError::SeedEnv(_)
            | CliError::SeedOverflow(_)
            | CliError::Config(_) => EXIT_CONFIG,
            CliError::Harness(e) if e.is_config_error() => EXIT_CONFIG,
            CliError::Pool(_) | CliError::Harness(_) => EXIT_RUNTIME,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.clone(),
            source,
        })?,
        None => String::new(),
    };
    let mut config = ExperimentConfig::parse(&text)?;
    if let Ok(seeds) = std::env::var(SEED_ENV) {
        config.seeds = parse_seed_list(&seeds).map_err(CliError::SeedEnv)?;
    }
    config.seeds = config
        .seeds
        .iter()
        .map(|s| s.checked_add(cli.seed_offset).ok_or(CliError::SeedOverflow(*s)))
        .collect::<Result<_, _>>()?;
    config.validate()?;
    Ok(config)
}

fn report(out: &ExperimentOutput) {
    for s in &out.summaries {
        println!(
            "{:<28} p_slip={:<4} success {:.3} ± {:.3}  return {:.3}  nodes {:.1}  search {:.4} ms",
            s.method, s.noise_level, s.success_mean, s.success_std, s.return_mean, s.nodes_expanded_mean, s.search_ms_mean
        );
    }
    for c in &out.comparisons {
        println!(
            "{} - {} at p_slip={}: {:+.3} [{:+.3}, {:+.3}]",
            c.method, c.baseline, c.noise_level, c.delta.mean_delta, c.delta.ci_low, c.delta.ci_high
        );
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build()?;
    let name = cli.command.name();
    let dir: &Path = &cli.out;
    pool.install(|| -> Result<(), CliError> {
        match cli.command {
            Command::Run => write(&run(&config)?, dir, "results", name),
            Command::Ablate => write(&ablate(&config)?, dir, "ablation", name),
            Command::SweepNoise => write(&sweep_noise(&config)?, dir, "noise_sweep", name),
            Command::RuntimeProfile => {
                let profile = runtime_profile(&config)?;
                // the experiment files, with the sidecar extended by the profile tables
                profile.experiment.write_files(dir, "runtime_profile", name)?;
                let json = serde_json::to_string_pretty(&profile.sidecar()).map_err(HarnessError::from)?;
                fs::write(dir.join("runtime_profile.json"), json + "\n").map_err(HarnessError::from)?;
                report(&profile.experiment);
                for p in &profile.scaling {
                    println!("T={:<5} reward cost {:.0} ns/node", p.t, p.reward_eval_ns_per_node);
                }
                Ok(())
            }
            Command::Solve => {
                let solution = solve(&config)?;
                fs::create_dir_all(dir).map_err(HarnessError::from)?;
                fs::write(dir.join("solution.tsv"), solution.to_table()).map_err(HarnessError::from)?;
                println!("converged in {} sweeps, residual {:e}", solution.iterations, solution.residual);
                Ok(())
            }
        }
    })
}

fn write(out: &ExperimentOutput, dir: &Path, stem: &str, command: &str) -> Result<(), CliError> {
    out.write_files(dir, stem, command)?;
    report(out);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
