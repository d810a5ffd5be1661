//! Desk-scale stochastic environments and their domain knowledge.

mod chain;
mod grid;

use thiserror::Error;

pub use chain::{chain_domain, make_chain, ChainFeatures, StochChainSpec, LEFT, RIGHT};
pub use grid::{
    grid_domain, grid_features, grid_heuristic, grid_rule_validator, make_grid, Cell, Direction,
    GridFeatures, GridGraspSpec, GridHeuristic, GridRules,
};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid environment spec: {0}")]
pub struct SpecError(pub String);

impl SpecError {
    pub(crate) fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}
