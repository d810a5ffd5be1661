//! Tree search with intermediate rewards: softmax selection over
//! `Q + R_c + U`, single-node expansion, rollout (or estimator) leaf
//! evaluation, and incremental-mean backpropagation of shaped returns.

mod episode;
mod search;
mod select;
mod tree;
pub mod vanilla;

use thiserror::Error;

pub use episode::{act_episode, EpisodeOptions, EpisodeOutcome};
pub use search::{search, EdgeStats, Mcts, PathStep, SearchResult, Selection};
pub use select::{
    argmax_allowed, exploration_bonus, masked_softmax, sample_index, selection_distribution,
    selection_scores,
};
pub use tree::{Edge, NodeId, NodeSnapshot, SearchTree, TreeNode, TreeSnapshot};

use crate::mdp::MdpError;
use crate::reward::{RewardError, RewardWeights};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("root state is terminal")]
    TerminalRoot,
    #[error("every action at the node is pruned")]
    AllPruned,
    #[error("node has no untried action")]
    NoUntriedAction,
    #[error("node is at the depth limit")]
    DepthLimit,
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionMode {
    /// Draw from the softmax distribution.
    #[default]
    Sample,
    /// Take its argmax.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafEvaluation {
    /// Uniform-random rollout of `rollout_horizon` steps.
    #[default]
    Rollout,
    /// Clamped value-estimator output; zero without an estimator.
    Estimator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// T
    pub simulations: usize,
    /// D
    pub depth_limit: usize,
    /// c
    pub exploration: f64,
    /// H
    pub rollout_horizon: usize,
    pub weights: RewardWeights,
    pub selection_mode: SelectionMode,
    pub leaf_evaluation: LeafEvaluation,
    /// Log (features, G) pairs into the rewarding center's buffer.
    pub record_experience: bool,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            simulations: 50,
            depth_limit: 10,
            exploration: 1.4,
            rollout_horizon: 50,
            weights: RewardWeights::default(),
            selection_mode: SelectionMode::Sample,
            leaf_evaluation: LeafEvaluation::Rollout,
            record_experience: true,
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    /// Defaults with the rewarding center switched off.
    pub fn vanilla() -> Self {
        Self {
            weights: RewardWeights::ZERO,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.simulations == 0 {
            return Err(SearchError::InvalidConfig("simulations must be > 0".into()));
        }
        if self.depth_limit == 0 {
            return Err(SearchError::InvalidConfig("depth limit must be > 0".into()));
        }
        if !(self.exploration.is_finite() && self.exploration > 0.0) {
            return Err(SearchError::InvalidConfig(
                "exploration coefficient must be finite and > 0".into(),
            ));
        }
        self.weights.validate()?;
        Ok(())
    }
}
