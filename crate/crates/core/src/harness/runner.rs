use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, EnvSpec, ExperimentConfig, Method};
use super::record::{write_csv, RunRecord, COLUMNS, SCHEMA_VERSION};
use super::stats::{mean, paired_bootstrap, sample_std, PairedDelta};
use crate::engine::{act_episode, search, EpisodeOptions, SearchConfig, SearchError};
use crate::mdp::{Environment, SimRng};
use crate::oracle::{self, OracleError, OracleSolution};
use crate::reward::{RewardError, RewardingCenter};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Whether the failure stems from the configuration rather than from
    /// running it.
    pub fn is_config_error(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}

/// Offset between the episode stream and the estimator's training stream.
const TRAIN_STREAM: u64 = 0x5eed_0000_0000_0001;
const BOOTSTRAP_SEED: u64 = 0xb007;

/// Everything one (noise, method, seed) unit produced.
#[derive(Debug, Clone)]
struct UnitResult {
    records: Vec<RunRecord>,
    training: Duration,
    reward_eval_time: Duration,
    reward_evaluations: usize,
    searches: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub method: String,
    pub noise_level: f64,
    pub episodes: usize,
    pub success_mean: f64,
    pub success_std: f64,
    pub return_mean: f64,
    pub return_std: f64,
    pub nodes_expanded_mean: f64,
    pub runtime_ms_mean: f64,
    /// Search time divided by the number of searches (one per executed
    /// action).
    pub search_ms_mean: f64,
    /// Estimator training time, reported apart from search runtime.
    pub training_ms_total: f64,
    pub reward_eval_ns_per_node: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub noise_level: f64,
    pub baseline: String,
    pub method: String,
    /// Over per-seed mean success, `method - baseline`.
    #[serde(flatten)]
    pub delta: PairedDelta,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub methods: Vec<Method>,
    pub noise_levels: Vec<f64>,
    /// Sorted by `run_id`.
    pub records: Vec<RunRecord>,
    pub summaries: Vec<GroupSummary>,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentOutput {
    pub fn summary(&self, method: Method, noise_level: f64) -> Option<&GroupSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method.as_str() && s.noise_level == noise_level)
    }

    pub fn comparison(&self, baseline: Method, method: Method, noise_level: f64) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| {
            c.baseline == baseline.as_str() && c.method == method.as_str() && c.noise_level == noise_level
        })
    }

    /// Per-seed mean success of one group, in config seed order.
    pub fn per_seed_success(&self, method: Method, noise_level: f64) -> Vec<f64> {
        per_seed(&self.records, &self.config.seeds, method.as_str(), noise_level)
    }

    pub fn write_csv<W: io::Write>(&self, out: &mut W) -> io::Result<()> {
        write_csv(out, &self.records)
    }

    pub fn sidecar(&self, command: &str) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "columns": COLUMNS,
            "config": self.config.resolved(),
            "seeds": self.config.seeds,
            "methods": self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "noise_levels": self.noise_levels,
            "summaries": self.summaries,
            "comparisons": self.comparisons,
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str, command: &str) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        self.write_csv(&mut csv)?;
        fs::write(dir.join(format!("{stem}.csv")), csv)?;
        let json = serde_json::to_string_pretty(&self.sidecar(command))?;
        fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(())
    }
}

fn per_seed(records: &[RunRecord], seeds: &[u64], method: &str, noise_level: f64) -> Vec<f64> {
    seeds
        .iter()
        .map(|seed| {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.noise_level == noise_level && r.seed == *seed)
                .map(|r| f64::from(r.success))
                .collect();
            mean(&xs)
        })
        .collect()
}

/// Builds the rewarding center a method needs.
pub fn center_for(
    env: &EnvSpec,
    method: Method,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RewardingCenter, HarnessError> {
    let weights = method.weights(config.search.weights);
    if method == Method::VanillaMcts {
        return Ok(RewardingCenter::disabled());
    }
    let center = RewardingCenter::new(env.domain())?;
    if method.uses_estimator(config.search.weights) {
        Ok(center.with_estimator(config.estimator.learning_rate, seed)?)
    } else if weights.is_zero() {
        Ok(RewardingCenter::disabled())
    } else {
        Ok(center)
    }
}

/// Search settings a method runs with.
pub fn search_config_for(method: Method, config: &ExperimentConfig) -> SearchConfig {
    SearchConfig {
        weights: method.weights(config.search.weights),
        leaf_evaluation: method.leaf_evaluation(),
        record_experience: method.uses_estimator(config.search.weights),
        ..config.search
    }
}

fn run_unit(
    config: &ExperimentConfig,
    env_spec: &EnvSpec,
    method: Method,
    seed: u64,
    noise_level: f64,
    first_run_id: u64,
) -> Result<UnitResult, HarnessError> {
    let env = env_spec.build().map_err(ConfigError::from)?;
    let mut center = center_for(env_spec, method, config, seed)?;
    let search_config = search_config_for(method, config);
    let options = EpisodeOptions {
        max_steps: config.max_steps(),
    };
    let mut rng = SimRng::seed_from_u64(seed);
    let mut train_rng = SimRng::seed_from_u64(seed ^ TRAIN_STREAM);
    let mut records = Vec::with_capacity(config.episodes);
    let mut training = Duration::ZERO;
    let mut reward_eval_time = Duration::ZERO;
    let mut reward_evaluations = 0;
    let mut searches = 0;
    for episode in 0..config.episodes {
        let outcome = act_episode(&env, &mut center, &search_config, options, &mut rng)?;
        reward_eval_time += outcome.reward_eval_time;
        reward_evaluations += outcome.reward_evaluations;
        searches += outcome.searches;
        records.push(RunRecord {
            run_id: first_run_id + episode as u64,
            environment: env.name().to_string(),
            method: method.as_str().to_string(),
            seed,
            noise_level,
            t: search_config.simulations,
            d: search_config.depth_limit,
            c: search_config.exploration,
            alpha: search_config.weights.alpha,
            beta: search_config.weights.beta,
            gamma_n: search_config.weights.gamma_n,
            success: u8::from(outcome.success),
            episode_return: outcome.trajectory.discounted_return,
            nodes_expanded: outcome.nodes_expanded,
            runtime_ms: outcome.wall_time.as_secs_f64() * 1e3,
        });
        let trained_due = (episode + 1) % config.retrain_every == 0;
        if trained_due && center.buffer().is_some_and(|b| !b.is_empty()) {
            let started = Instant::now();
            center.train(config.estimator.epochs, config.estimator.batch_size, &mut train_rng)?;
            training += started.elapsed();
        }
    }
    Ok(UnitResult {
        records,
        training,
        reward_eval_time,
        reward_evaluations,
        searches,
    })
}

/// Runs every (noise level, method, seed) unit, `episodes` episodes each,
/// in parallel on the current rayon pool. Records come back in canonical
/// `run_id` order: noise level, then method, then seed, then episode.
pub fn run_experiment(
    config: &ExperimentConfig,
    methods: &[Method],
    noise_levels: &[f64],
) -> Result<ExperimentOutput, HarnessError> {
    config.validate()?;
    let n_seeds = config.seeds.len() as u64;
    let episodes = config.episodes as u64;
    let mut units = Vec::new();
    for (ni, &noise) in noise_levels.iter().enumerate() {
        for (mi, &method) in methods.iter().enumerate() {
            for (si, &seed) in config.seeds.iter().enumerate() {
                let unit_index = (ni as u64 * methods.len() as u64 + mi as u64) * n_seeds + si as u64;
                units.push((noise, method, seed, unit_index * episodes));
            }
        }
    }
    let specs: Vec<EnvSpec> = noise_levels.iter().map(|p| config.env.with_noise(*p)).collect();
    let results: Vec<Result<(Method, f64, UnitResult), HarnessError>> = units
        .par_iter()
        .map(|&(noise, method, seed, first)| {
            let ni = noise_levels.iter().position(|p| *p == noise).unwrap_or(0);
            run_unit(config, &specs[ni], method, seed, noise, first).map(|u| (method, noise, u))
        })
        .collect();

    let mut records = Vec::new();
    let mut groups: BTreeMap<(usize, usize), (Duration, Duration, usize, usize)> = BTreeMap::new();
    for result in results {
        let (method, noise, unit) = result?;
        let key = (
            noise_levels.iter().position(|p| *p == noise).unwrap_or(0),
            methods.iter().position(|m| *m == method).unwrap_or(0),
        );
        let g = groups.entry(key).or_default();
        g.0 += unit.training;
        g.1 += unit.reward_eval_time;
        g.2 += unit.reward_evaluations;
        g.3 += unit.searches;
        records.extend(unit.records);
    }
    records.sort_by_key(|r| r.run_id);

    let mut summaries = Vec::new();
    let mut comparisons = Vec::new();
    for (ni, &noise) in noise_levels.iter().enumerate() {
        for (mi, &method) in methods.iter().enumerate() {
            let rows: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.method == method.as_str() && r.noise_level == noise)
                .collect();
            let success: Vec<f64> = rows.iter().map(|r| f64::from(r.success)).collect();
            let returns: Vec<f64> = rows.iter().map(|r| r.episode_return).collect();
            let nodes: Vec<f64> = rows.iter().map(|r| r.nodes_expanded as f64).collect();
            let runtime: Vec<f64> = rows.iter().map(|r| r.runtime_ms).collect();
            let (training, eval_time, evals, searches) = groups.get(&(ni, mi)).copied().unwrap_or_default();
            summaries.push(GroupSummary {
                method: method.as_str().to_string(),
                noise_level: noise,
                episodes: rows.len(),
                success_mean: mean(&success),
                success_std: sample_std(&success),
                return_mean: mean(&returns),
                return_std: sample_std(&returns),
                nodes_expanded_mean: mean(&nodes),
                runtime_ms_mean: mean(&runtime),
                search_ms_mean: runtime.iter().sum::<f64>() / searches.max(1) as f64,
                training_ms_total: training.as_secs_f64() * 1e3,
                reward_eval_ns_per_node: if evals == 0 {
                    0.0
                } else {
                    eval_time.as_secs_f64() * 1e9 / evals as f64
                },
            });
        }
        let baseline = methods[0];
        let base = per_seed(&records, &config.seeds, baseline.as_str(), noise);
        for &method in &methods[1..] {
            let treat = per_seed(&records, &config.seeds, method.as_str(), noise);
            comparisons.push(Comparison {
                noise_level: noise,
                baseline: baseline.as_str().to_string(),
                method: method.as_str().to_string(),
                delta: paired_bootstrap(&base, &treat, config.bootstrap_samples, BOOTSTRAP_SEED),
            });
        }
    }

    Ok(ExperimentOutput {
        config: config.clone(),
        methods: methods.to_vec(),
        noise_levels: noise_levels.to_vec(),
        records,
        summaries,
        comparisons,
    })
}

/// The configured methods at the environment's own slip probability.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    run_experiment(config, &config.methods, &[config.env.p_slip()])
}

/// The full model and each single-component ablation under identical seeds.
/// Comparisons use `full` as the baseline.
pub fn ablate(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    run_experiment(config, &Method::ABLATIONS, &[config.env.p_slip()])
}

/// The configured methods at every configured noise level.
pub fn sweep_noise(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    run_experiment(config, &config.methods, &config.effective_noise_levels())
}

#[derive(Debug, Clone, Serialize)]
pub struct RuntimePoint {
    pub method: String,
    pub runtime_ms_mean: f64,
    pub search_ms_mean: f64,
    pub success_mean: f64,
    pub reward_eval_ns_per_node: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingPoint {
    #[serde(rename = "T")]
    pub t: usize,
    pub searches: usize,
    pub reward_evaluations: usize,
    pub reward_eval_ns_per_node: f64,
    pub search_ms_mean: f64,
}

#[derive(Debug, Clone)]
pub struct RuntimeProfile {
    pub experiment: ExperimentOutput,
    pub points: Vec<RuntimePoint>,
    pub scaling: Vec<ScalingPoint>,
}

impl RuntimeProfile {
    pub fn sidecar(&self) -> serde_json::Value {
        let mut v = self.experiment.sidecar("runtime-profile");
        v["runtime_accuracy"] = serde_json::to_value(&self.points).unwrap_or_default();
        v["per_node_scaling"] = serde_json::to_value(&self.scaling).unwrap_or_default();
        v
    }
}

/// Budgets whose per-node rewarding-center cost is compared.
pub const SCALING_BUDGETS: [usize; 2] = [50, 500];

/// Per-node rewarding-center cost of single searches from the initial
/// state with the full model, at each budget in `budgets`.
pub fn per_node_scaling(config: &ExperimentConfig, budgets: &[usize]) -> Result<Vec<ScalingPoint>, HarnessError> {
    let env = config.env.build().map_err(ConfigError::from)?;
    let mut points = Vec::new();
    for &t in budgets {
        let mut evals = 0;
        let mut eval_time = Duration::ZERO;
        let mut wall = Duration::ZERO;
        for &seed in &config.seeds {
            let mut center = center_for(&config.env, Method::RewardCentered, config, seed)?;
            let search_config = SearchConfig {
                simulations: t,
                rng_seed: seed,
                ..search_config_for(Method::RewardCentered, config)
            };
            let result = search(&env.initial_state(), &env, &mut center, &search_config)?;
            evals += result.reward_evaluations;
            eval_time += result.reward_eval_time;
            wall += result.wall_time;
        }
        points.push(ScalingPoint {
            t,
            searches: config.seeds.len(),
            reward_evaluations: evals,
            reward_eval_ns_per_node: eval_time.as_secs_f64() * 1e9 / evals.max(1) as f64,
            search_ms_mean: wall.as_secs_f64() * 1e3 / config.seeds.len() as f64,
        });
    }
    Ok(points)
}

/// Runtime and success per configured method, plus the per-node cost of
/// the rewarding center as the search budget grows.
pub fn runtime_profile(config: &ExperimentConfig) -> Result<RuntimeProfile, HarnessError> {
    let experiment = run(config)?;
    let points = experiment
        .summaries
        .iter()
        .map(|s| RuntimePoint {
            method: s.method.clone(),
            runtime_ms_mean: s.runtime_ms_mean,
            search_ms_mean: s.search_ms_mean,
            success_mean: s.success_mean,
            reward_eval_ns_per_node: s.reward_eval_ns_per_node,
        })
        .collect();
    let scaling = per_node_scaling(config, &SCALING_BUDGETS)?;
    Ok(RuntimeProfile {
        experiment,
        points,
        scaling,
    })
}

/// Exact solution of the configured (noise-free or noisy) environment.
pub fn solve(config: &ExperimentConfig) -> Result<OracleSolution, HarnessError> {
    let env = config.env.build().map_err(ConfigError::from)?;
    Ok(oracle::solve(&env)?)
}
