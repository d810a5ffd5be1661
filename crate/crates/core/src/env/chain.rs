//! One-dimensional slippery chain: walk right to reach the goal at the far end.

use std::sync::Arc;

use crate::mdp::StateHandle;
use crate::reward::{Domain, FeatureMap};
use crate::tabular::{Outcome, TabularEnv, TabularMdp};

use super::SpecError;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StochChainSpec {
    pub n_states: usize,
    /// Probability the move goes opposite to the chosen direction.
    pub p_slip: f64,
    pub discount: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
}

impl StochChainSpec {
    pub fn new(n_states: usize, p_slip: f64) -> Self {
        Self {
            n_states,
            p_slip,
            ..Self::default()
        }
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.n_states < 2 {
            return Err(SpecError::new(format!(
                "chain needs at least 2 states, got {}",
                self.n_states
            )));
        }
        if !(0.0..1.0).contains(&self.p_slip) {
            return Err(SpecError::new(format!("p_slip {} outside [0, 1)", self.p_slip)));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(SpecError::new(format!("discount {} outside (0, 1]", self.discount)));
        }
        if !(self.step_reward.is_finite() && self.goal_reward.is_finite()) {
            return Err(SpecError::new("rewards must be finite"));
        }
        Ok(())
    }

    fn goal(&self) -> usize {
        self.n_states - 1
    }
}

impl Default for StochChainSpec {
    fn default() -> Self {
        Self {
            n_states: 8,
            p_slip: 0.0,
            discount: 0.95,
            step_reward: 0.0,
            goal_reward: 1.0,
        }
    }
}

/// Tabular chain. Start is state 0; actions are `[Left, Right]` everywhere
/// except the terminal goal; moves are clamped at both ends.
pub fn make_chain(spec: &StochChainSpec) -> Result<TabularEnv, SpecError> {
    spec.validate()?;
    let n = spec.n_states;
    let goal = spec.goal();
    let reward = |next: usize| {
        if next == goal {
            spec.goal_reward
        } else {
            spec.step_reward
        }
    };
    let step = |s: usize, dir: usize| -> usize {
        if dir == RIGHT {
            (s + 1).min(n - 1)
        } else {
            s.saturating_sub(1)
        }
    };
    let mut transitions = Vec::with_capacity(n);
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    for s in 0..n {
        if s == goal {
            transitions.push(Vec::new());
            continue;
        }
        let mut actions = Vec::with_capacity(2);
        for dir in [LEFT, RIGHT] {
            let intended = step(s, dir);
            let slipped = step(s, 1 - dir);
            let mut outcomes = vec![Outcome {
                next: intended,
                prob: 1.0 - spec.p_slip,
                reward: reward(intended),
            }];
            if spec.p_slip > 0.0 {
                outcomes.push(Outcome {
                    next: slipped,
                    prob: spec.p_slip,
                    reward: reward(slipped),
                });
            }
            actions.push(outcomes);
        }
        transitions.push(actions);
    }
    let mdp = TabularMdp::new(spec.discount, 0, terminal, transitions)
        .map_err(|e| SpecError::new(e.to_string()))?;
    Ok(TabularEnv::new(format!("chain{n}"), mdp).with_goals(&[goal]))
}

/// Normalized position `[s / (n-1)]`.
#[derive(Debug, Clone)]
pub struct ChainFeatures {
    n_states: usize,
}

impl ChainFeatures {
    pub fn new(spec: &StochChainSpec) -> Self {
        Self {
            n_states: spec.n_states,
        }
    }
}

impl FeatureMap for ChainFeatures {
    fn dim(&self) -> usize {
        1
    }

    fn write_features(&self, state: &StateHandle, out: &mut [f64]) {
        out[0] = state.index() as f64 / (self.n_states - 1) as f64;
    }
}

/// The chain has no rules and no heuristic; only features for the estimator.
pub fn chain_domain(spec: &StochChainSpec) -> Domain {
    Domain {
        rules: None,
        heuristic: None,
        features: Some(Arc::new(ChainFeatures::new(spec))),
    }
}
