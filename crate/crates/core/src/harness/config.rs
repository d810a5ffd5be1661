//! Flat `key = value` experiment configuration with dotted sections.
//!
//! ```text
//! # comments start with '#'
//! env.kind = grid
//! env.layout = obstacle_course
//! env.p_slip = 0.1
//! search.T = 50
//! weights.alpha = 0.5
//! experiment.methods = vanilla_mcts, reward_centered
//! experiment.seeds = 0..100
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{LeafEvaluation, SearchConfig, SelectionMode};
use crate::env::{
    chain_domain, grid_domain, make_chain, make_grid, GridGraspSpec, SpecError, StochChainSpec,
};
use crate::reward::{Domain, RewardWeights};
use crate::tabular::TabularEnv;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Search variants the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain MCTS: no intermediate rewards, random rollouts.
    VanillaMcts,
    /// Learned value estimate at the leaves instead of rollouts, no
    /// intermediate rewards.
    RestMctsNoIntermediate,
    /// All three rewarding-center components.
    RewardCentered,
    /// Same as `RewardCentered`, named for ablation output.
    Full,
    NoRules,
    NoHeuristic,
    NoNeural,
}

impl Method {
    pub const ABLATIONS: [Method; 4] = [
        Method::Full,
        Method::NoRules,
        Method::NoHeuristic,
        Method::NoNeural,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::VanillaMcts => "vanilla_mcts",
            Method::RestMctsNoIntermediate => "rest_mcts_no_intermediate",
            Method::RewardCentered => "reward_centered",
            Method::Full => "full",
            Method::NoRules => "no_rules",
            Method::NoHeuristic => "no_heuristic",
            Method::NoNeural => "no_neural",
        }
    }

    /// Weights actually used by this method given the configured ones.
    pub fn weights(self, base: RewardWeights) -> RewardWeights {
        match self {
            Method::VanillaMcts | Method::RestMctsNoIntermediate => RewardWeights::ZERO,
            Method::RewardCentered | Method::Full => base,
            Method::NoRules => RewardWeights { alpha: 0.0, ..base },
            Method::NoHeuristic => RewardWeights { beta: 0.0, ..base },
            Method::NoNeural => RewardWeights {
                gamma_n: 0.0,
                ..base
            },
        }
    }

    pub fn leaf_evaluation(self) -> LeafEvaluation {
        match self {
            Method::RestMctsNoIntermediate => LeafEvaluation::Estimator,
            _ => LeafEvaluation::Rollout,
        }
    }

    /// Whether the method trains and consults a value estimator.
    pub fn uses_estimator(self, base: RewardWeights) -> bool {
        match self {
            Method::VanillaMcts => false,
            Method::RestMctsNoIntermediate => true,
            _ => self.weights(base).gamma_n > 0.0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "vanilla_mcts" | "vanilla" => Method::VanillaMcts,
            "rest_mcts_no_intermediate" | "rest" => Method::RestMctsNoIntermediate,
            "reward_centered" => Method::RewardCentered,
            "full" => Method::Full,
            "no_rules" => Method::NoRules,
            "no_heuristic" => Method::NoHeuristic,
            "no_neural" => Method::NoNeural,
            other => return Err(ConfigError::UnknownMethod(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Chain(StochChainSpec),
    Grid(GridGraspSpec),
}

impl EnvSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::Chain(_) => "chain",
            EnvSpec::Grid(_) => "grid",
        }
    }

    pub fn p_slip(&self) -> f64 {
        match self {
            EnvSpec::Chain(s) => s.p_slip,
            EnvSpec::Grid(s) => s.p_slip,
        }
    }

    pub fn with_noise(&self, p_slip: f64) -> EnvSpec {
        match self {
            EnvSpec::Chain(s) => EnvSpec::Chain(StochChainSpec {
                p_slip,
                ..s.clone()
            }),
            EnvSpec::Grid(s) => EnvSpec::Grid(s.clone().with_slip(p_slip)),
        }
    }

    pub fn build(&self) -> Result<TabularEnv, SpecError> {
        match self {
            EnvSpec::Chain(s) => make_chain(s),
            EnvSpec::Grid(s) => make_grid(s),
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            EnvSpec::Chain(s) => chain_domain(s),
            EnvSpec::Grid(s) => grid_domain(s),
        }
    }

    /// Default cap on executed actions per episode.
    pub fn episode_limit(&self) -> usize {
        match self {
            EnvSpec::Chain(s) => 4 * s.n_states,
            EnvSpec::Grid(s) => s.episode_limit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 5,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    /// Layout name for grid environments, kept for the resolved-config dump.
    pub layout: String,
    pub methods: Vec<Method>,
    pub search: SearchConfig,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub noise_levels: Vec<f64>,
    pub retrain_every: usize,
    /// Executed-action cap per episode; `None` uses the environment default.
    pub max_steps: Option<usize>,
    pub estimator: EstimatorSettings,
    pub bootstrap_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::Grid(GridGraspSpec::obstacle_course()),
            layout: "obstacle_course".into(),
            methods: vec![Method::VanillaMcts, Method::RewardCentered],
            search: SearchConfig::default(),
            episodes: 1,
            seeds: vec![0],
            noise_levels: Vec::new(),
            retrain_every: 10,
            max_steps: None,
            estimator: EstimatorSettings::default(),
            bootstrap_samples: 10_000,
        }
    }
}

/// Parses `a..b` (half-open) or a comma list of integers.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
        let hi: u64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
        if hi <= lo {
            return Err(format!("empty seed range {lo}..{hi}"));
        }
        return Ok((lo..hi).collect());
    }
    let seeds: Result<Vec<u64>, _> = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| format!("`{}`: {e}", s.trim())))
        .collect();
    let seeds = seeds?;
    if seeds.is_empty() {
        return Err("no seeds".into());
    }
    Ok(seeds)
}

fn list<T: FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

fn cell(text: &str) -> Result<crate::env::Cell, String> {
    let (x, y) = text
        .split_once(',')
        .ok_or_else(|| format!("expected `x,y`, got `{text}`"))?;
    let x = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(crate::env::Cell::new(x, y))
}

const KEYS: &[&str] = &[
    "env.kind",
    "env.layout",
    "env.width",
    "env.height",
    "env.n_states",
    "env.p_slip",
    "env.discount",
    "env.obstacles",
    "search.T",
    "search.D",
    "search.c",
    "search.H",
    "search.selection",
    "weights.alpha",
    "weights.beta",
    "weights.gamma_n",
    "experiment.methods",
    "experiment.episodes",
    "experiment.seeds",
    "experiment.noise_levels",
    "experiment.retrain_every",
    "experiment.max_steps",
    "experiment.bootstrap_samples",
    "estimator.learning_rate",
    "estimator.epochs",
    "estimator.batch_size",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if entries.insert(key, (line, value.trim())).is_some() {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
        }

        fn get<T: FromStr>(
            entries: &BTreeMap<&str, (usize, &str)>,
            key: &str,
        ) -> Result<Option<T>, ConfigError>
        where
            T::Err: fmt::Display,
        {
            entries
                .get(key)
                .map(|(line, v)| {
                    v.parse::<T>().map_err(|e| ConfigError::BadValue {
                        line: *line,
                        key: key.to_string(),
                        msg: format!("`{v}`: {e}"),
                    })
                })
                .transpose()
        }
        fn with<T>(
            entries: &BTreeMap<&str, (usize, &str)>,
            key: &str,
            f: impl Fn(&str) -> Result<T, String>,
        ) -> Result<Option<T>, ConfigError> {
            entries
                .get(key)
                .map(|(line, v)| {
                    f(v).map_err(|msg| ConfigError::BadValue {
                        line: *line,
                        key: key.to_string(),
                        msg,
                    })
                })
                .transpose()
        }
        let line_of = |key: &str| entries.get(key).map_or(0, |(l, _)| *l);

        let mut cfg = ExperimentConfig::default();
        let kind: String = get(&entries, "env.kind")?.unwrap_or_else(|| "grid".into());
        let p_slip: f64 = get(&entries, "env.p_slip")?.unwrap_or(0.0);
        match kind.as_str() {
            "chain" => {
                for key in ["env.layout", "env.width", "env.height", "env.obstacles"] {
                    if entries.contains_key(key) {
                        return Err(ConfigError::BadValue {
                            line: line_of(key),
                            key: key.into(),
                            msg: "not a chain parameter".into(),
                        });
                    }
                }
                let mut spec = StochChainSpec::new(get(&entries, "env.n_states")?.unwrap_or(8), p_slip);
                if let Some(d) = get(&entries, "env.discount")? {
                    spec.discount = d;
                }
                cfg.layout = String::new();
                cfg.env = EnvSpec::Chain(spec);
            }
            "grid" => {
                if entries.contains_key("env.n_states") {
                    return Err(ConfigError::BadValue {
                        line: line_of("env.n_states"),
                        key: "env.n_states".into(),
                        msg: "not a grid parameter".into(),
                    });
                }
                let layout: String =
                    get(&entries, "env.layout")?.unwrap_or_else(|| "obstacle_course".into());
                let mut spec = match layout.as_str() {
                    "obstacle_course" => GridGraspSpec::obstacle_course(),
                    "open" => GridGraspSpec::open(
                        get(&entries, "env.width")?.unwrap_or(8),
                        get(&entries, "env.height")?.unwrap_or(8),
                    ),
                    other => {
                        return Err(ConfigError::BadValue {
                            line: line_of("env.layout"),
                            key: "env.layout".into(),
                            msg: format!("unknown layout `{other}` (obstacle_course, open)"),
                        })
                    }
                };
                if layout == "obstacle_course"
                    && (entries.contains_key("env.width") || entries.contains_key("env.height"))
                {
                    return Err(ConfigError::Invalid(
                        "env.width/env.height only apply to the open layout".into(),
                    ));
                }
                if let Some(obstacles) = with(&entries, "env.obstacles", |v| {
                    v.split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(cell)
                        .collect::<Result<Vec<_>, _>>()
                })? {
                    spec.obstacles = obstacles.into_iter().collect();
                }
                spec.p_slip = p_slip;
                if let Some(d) = get(&entries, "env.discount")? {
                    spec.discount = d;
                }
                cfg.layout = layout;
                cfg.env = EnvSpec::Grid(spec);
            }
            other => {
                return Err(ConfigError::BadValue {
                    line: line_of("env.kind"),
                    key: "env.kind".into(),
                    msg: format!("unknown environment `{other}` (chain, grid)"),
                })
            }
        }

        let s = &mut cfg.search;
        if let Some(v) = get(&entries, "search.T")? {
            s.simulations = v;
        }
        if let Some(v) = get(&entries, "search.D")? {
            s.depth_limit = v;
        }
        if let Some(v) = get(&entries, "search.c")? {
            s.exploration = v;
        }
        if let Some(v) = get(&entries, "search.H")? {
            s.rollout_horizon = v;
        }
        if let Some(v) = with(&entries, "search.selection", |v| match v {
            "sample" => Ok(SelectionMode::Sample),
            "greedy" => Ok(SelectionMode::Greedy),
            other => Err(format!("unknown selection `{other}` (sample, greedy)")),
        })? {
            s.selection_mode = v;
        }
        let w = &mut s.weights;
        if let Some(v) = get(&entries, "weights.alpha")? {
            w.alpha = v;
        }
        if let Some(v) = get(&entries, "weights.beta")? {
            w.beta = v;
        }
        if let Some(v) = get(&entries, "weights.gamma_n")? {
            w.gamma_n = v;
        }

        if let Some((line, v)) = entries.get("experiment.methods") {
            let methods: Result<Vec<Method>, _> = v
                .split(',')
                .map(str::trim)
                .filter(|m| !m.is_empty())
                .map(str::parse)
                .collect();
            cfg.methods = methods?;
            if cfg.methods.is_empty() {
                return Err(ConfigError::BadValue {
                    line: *line,
                    key: "experiment.methods".into(),
                    msg: "no methods".into(),
                });
            }
        }
        if let Some(v) = get(&entries, "experiment.episodes")? {
            cfg.episodes = v;
        }
        if let Some(v) = with(&entries, "experiment.seeds", parse_seed_list)? {
            cfg.seeds = v;
        }
        if let Some(v) = with(&entries, "experiment.noise_levels", list::<f64>)? {
            cfg.noise_levels = v;
        }
        if let Some(v) = get(&entries, "experiment.retrain_every")? {
            cfg.retrain_every = v;
        }
        cfg.max_steps = get(&entries, "experiment.max_steps")?;
        if let Some(v) = get(&entries, "experiment.bootstrap_samples")? {
            cfg.bootstrap_samples = v;
        }
        let e = &mut cfg.estimator;
        if let Some(v) = get(&entries, "estimator.learning_rate")? {
            e.learning_rate = v;
        }
        if let Some(v) = get(&entries, "estimator.epochs")? {
            e.epochs = v;
        }
        if let Some(v) = get(&entries, "estimator.batch_size")? {
            e.batch_size = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.build()?;
        self.search
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.episodes == 0 {
            return Err(ConfigError::Invalid("experiment.episodes must be > 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("no seeds".into()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::Invalid("no methods".into()));
        }
        if self.retrain_every == 0 {
            return Err(ConfigError::Invalid("experiment.retrain_every must be > 0".into()));
        }
        if self.max_steps == Some(0) {
            return Err(ConfigError::Invalid("experiment.max_steps must be > 0".into()));
        }
        for p in &self.noise_levels {
            self.env.with_noise(*p).build()?;
        }
        let e = &self.estimator;
        if !(e.learning_rate.is_finite() && e.learning_rate >= 0.0) {
            return Err(ConfigError::Invalid("estimator.learning_rate must be >= 0".into()));
        }
        if e.batch_size == 0 {
            return Err(ConfigError::Invalid("estimator.batch_size must be > 0".into()));
        }
        Ok(())
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps.unwrap_or_else(|| self.env.episode_limit())
    }

    /// Noise levels to run: the configured list, or the env's own slip.
    pub fn effective_noise_levels(&self) -> Vec<f64> {
        if self.noise_levels.is_empty() {
            vec![self.env.p_slip()]
        } else {
            self.noise_levels.clone()
        }
    }

    /// Every setting after defaults are applied, as the key/value pairs of
    /// the config format.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("env.kind", self.env.kind().into());
        put("env.p_slip", self.env.p_slip().to_string());
        match &self.env {
            EnvSpec::Chain(s) => {
                put("env.n_states", s.n_states.to_string());
                put("env.discount", s.discount.to_string());
            }
            EnvSpec::Grid(s) => {
                put("env.layout", self.layout.clone());
                if self.layout == "open" {
                    put("env.width", s.width.to_string());
                    put("env.height", s.height.to_string());
                }
                put("env.discount", s.discount.to_string());
                let obstacles: Vec<String> =
                    s.obstacles.iter().map(|c| format!("{},{}", c.x, c.y)).collect();
                put("env.obstacles", obstacles.join(";"));
            }
        }
        let s = &self.search;
        put("search.T", s.simulations.to_string());
        put("search.D", s.depth_limit.to_string());
        put("search.c", s.exploration.to_string());
        put("search.H", s.rollout_horizon.to_string());
        put(
            "search.selection",
            match s.selection_mode {
                SelectionMode::Sample => "sample",
                SelectionMode::Greedy => "greedy",
            }
            .into(),
        );
        put("weights.alpha", s.weights.alpha.to_string());
        put("weights.beta", s.weights.beta.to_string());
        put("weights.gamma_n", s.weights.gamma_n.to_string());
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        put("experiment.methods", methods.join(","));
        put("experiment.episodes", self.episodes.to_string());
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        put("experiment.seeds", seeds.join(","));
        let noise: Vec<String> = self.effective_noise_levels().iter().map(f64::to_string).collect();
        put("experiment.noise_levels", noise.join(","));
        put("experiment.retrain_every", self.retrain_every.to_string());
        put("experiment.max_steps", self.max_steps().to_string());
        put("experiment.bootstrap_samples", self.bootstrap_samples.to_string());
        put("estimator.learning_rate", self.estimator.learning_rate.to_string());
        put("estimator.epochs", self.estimator.epochs.to_string());
        put("estimator.batch_size", self.estimator.batch_size.to_string());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys() {
        let cfg = ExperimentConfig::parse(
            "# grid run\nenv.kind = grid\nenv.p_slip = 0.1\nsearch.T=80\nweights.alpha = 0.4\n\
             experiment.methods = vanilla_mcts, reward_centered\nexperiment.seeds = 3..6\n",
        )
        .unwrap();
        assert_eq!(cfg.search.simulations, 80);
        assert_eq!(cfg.search.weights.alpha, 0.4);
        assert_eq!(cfg.search.weights.beta, 0.3);
        assert_eq!(cfg.seeds, vec![3, 4, 5]);
        assert_eq!(cfg.env.p_slip(), 0.1);
        assert_eq!(cfg.methods, vec![Method::VanillaMcts, Method::RewardCentered]);
    }

    #[test]
    fn reports_line_and_key() {
        let err = ExperimentConfig::parse("env.kind = grid\n\nsearch.T = fifty\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 3, ref key, .. } if key == "search.T"));
        let err = ExperimentConfig::parse("search.X = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
        let err = ExperimentConfig::parse("search.T = 1\nsearch.T = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Duplicate { line: 2, .. }));
        let err = ExperimentConfig::parse("just words\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn unknown_method() {
        let err = ExperimentConfig::parse("experiment.methods = vanilla_mcts, alphago\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownMethod("alphago".into()));
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(ExperimentConfig::parse("env.p_slip = 1.5\n").is_err());
        assert!(ExperimentConfig::parse("search.T = 0\n").is_err());
        assert!(ExperimentConfig::parse("weights.alpha = -1\n").is_err());
        assert!(ExperimentConfig::parse("env.kind = chain\nenv.width = 3\n").is_err());
    }

    #[test]
    fn method_weights() {
        let base = RewardWeights::default();
        assert!(Method::VanillaMcts.weights(base).is_zero());
        assert!(!Method::VanillaMcts.uses_estimator(base));
        assert!(Method::RestMctsNoIntermediate.weights(base).is_zero());
        assert_eq!(
            Method::RestMctsNoIntermediate.leaf_evaluation(),
            LeafEvaluation::Estimator
        );
        assert_eq!(Method::NoRules.weights(base).alpha, 0.0);
        assert_eq!(Method::NoHeuristic.weights(base).beta, 0.0);
        assert_eq!(Method::NoNeural.weights(base).gamma_n, 0.0);
        assert!(!Method::NoNeural.uses_estimator(base));
        for m in Method::ABLATIONS {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn resolved_round_trips() {
        let cfg = ExperimentConfig::parse("env.kind = chain\nenv.p_slip = 0.2\nexperiment.seeds = 1,5\n").unwrap();
        let text: String = cfg
            .resolved()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        assert_eq!(ExperimentConfig::parse(&text).unwrap().resolved(), cfg.resolved());
    }
}
