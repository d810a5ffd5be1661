//! The rewarding center: structured intermediate rewards
//! `R_c(s) = alpha * R_rule(s) + beta * R_heuristic(s) + gamma_n * R_neural(s)`.
//!
//! Component ranges are fixed: `R_rule` in {0, -1}, `R_heuristic` in
//! [0, 1], `R_neural` in [-1, 1]. Missing components contribute 0.

mod buffer;
mod estimator;

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

pub use buffer::{ExperienceBuffer, DEFAULT_CAPACITY};
pub use estimator::{ValueEstimator, HIDDEN};

use crate::mdp::{SimRng, StateHandle};

/// Upper bound on feature width; features are evaluated on the stack.
pub const MAX_FEATURES: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("experience buffer is empty")]
    EmptyBuffer,
    #[error("invalid reward weights: {0}")]
    InvalidWeights(String),
    #[error("{0}")]
    Parse(String),
}

pub trait RuleValidator: Send + Sync {
    fn is_valid(&self, state: &StateHandle) -> bool;
}

pub trait Heuristic: Send + Sync {
    /// Score in [0, 1].
    fn score(&self, state: &StateHandle) -> f64;
}

pub trait FeatureMap: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes exactly `dim()` values into `out`.
    fn write_features(&self, state: &StateHandle, out: &mut [f64]);

    fn features(&self, state: &StateHandle) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write_features(state, &mut out);
        out
    }
}

/// Environment-specific knowledge the rewarding center draws on.
#[derive(Clone, Default)]
pub struct Domain {
    pub rules: Option<Arc<dyn RuleValidator>>,
    pub heuristic: Option<Arc<dyn Heuristic>>,
    pub features: Option<Arc<dyn FeatureMap>>,
}

impl std::fmt::Debug for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Domain")
            .field("rules", &self.rules.is_some())
            .field("heuristic", &self.heuristic.is_some())
            .field("features", &self.features.as_ref().map(|m| m.dim()))
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_n: f64,
}

impl RewardWeights {
    pub const ZERO: RewardWeights = RewardWeights {
        alpha: 0.0,
        beta: 0.0,
        gamma_n: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma_n: f64) -> Result<Self, RewardError> {
        let w = Self {
            alpha,
            beta,
            gamma_n,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma_n", self.gamma_n),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RewardError::InvalidWeights(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0 && self.gamma_n == 0.0
    }

    /// Bound on `|R_c|` given the component ranges.
    pub fn bound(&self) -> f64 {
        self.alpha + self.beta + self.gamma_n
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.3,
            gamma_n: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleOutcome {
    pub valid: bool,
    pub reward: f64,
}

impl RuleOutcome {
    pub const VALID: RuleOutcome = RuleOutcome {
        valid: true,
        reward: 0.0,
    };
    pub const INVALID: RuleOutcome = RuleOutcome {
        valid: false,
        reward: -1.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComponentRewards {
    pub rule: f64,
    pub heuristic: f64,
    pub neural: f64,
}

/// Absent validator means every state is valid.
pub fn rule_reward(state: &StateHandle, validator: Option<&dyn RuleValidator>) -> RuleOutcome {
    match validator {
        Some(v) if !v.is_valid(state) => RuleOutcome::INVALID,
        _ => RuleOutcome::VALID,
    }
}

pub fn heuristic_reward(state: &StateHandle, heuristic: Option<&dyn Heuristic>) -> f64 {
    heuristic.map_or(0.0, |h| h.score(state))
}

/// Estimator output on `features`, clamped to [-1, 1].
pub fn neural_reward(estimator: &ValueEstimator, features: &[f64]) -> Result<f64, RewardError> {
    Ok(estimator.forward(features)?.clamp(-1.0, 1.0))
}

pub fn combined_reward(weights: &RewardWeights, c: &ComponentRewards) -> f64 {
    weights.alpha * c.rule + weights.beta * c.heuristic + weights.gamma_n * c.neural
}

/// What the search needs from one evaluation of a freshly expanded node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEvaluation {
    pub rc: f64,
    /// Set only when the rule component is active (alpha > 0) and fails.
    pub pruned: bool,
}

/// Combines the three components and collects training data for the
/// neural one.
#[derive(Debug, Clone)]
pub struct RewardingCenter {
    domain: Domain,
    estimator: Option<ValueEstimator>,
    buffer: Option<ExperienceBuffer>,
    /// Neural outputs of the current estimator, cleared whenever it changes.
    neural_memo: RefCell<HashMap<StateHandle, f64>>,
}

impl RewardingCenter {
    pub fn new(domain: Domain) -> Result<Self, RewardError> {
        if let Some(f) = &domain.features {
            if f.dim() > MAX_FEATURES {
                return Err(RewardError::DimensionMismatch {
                    expected: MAX_FEATURES,
                    got: f.dim(),
                });
            }
        }
        Ok(Self {
            domain,
            estimator: None,
            buffer: None,
            neural_memo: RefCell::default(),
        })
    }

    /// A center that contributes nothing and learns nothing.
    pub fn disabled() -> Self {
        Self {
            domain: Domain::default(),
            estimator: None,
            buffer: None,
            neural_memo: RefCell::default(),
        }
    }

    /// Attaches a fresh estimator and an experience buffer sized for the
    /// domain's features.
    pub fn with_estimator(mut self, learning_rate: f64, seed: u64) -> Result<Self, RewardError> {
        let dim = self
            .domain
            .features
            .as_ref()
            .map(|f| f.dim())
            .ok_or(RewardError::DimensionMismatch {
                expected: 1,
                got: 0,
            })?;
        self.estimator = Some(ValueEstimator::new(dim, learning_rate, seed));
        self.neural_memo.get_mut().clear();
        self.buffer = Some(ExperienceBuffer::with_default_capacity(dim));
        Ok(self)
    }

    pub fn set_estimator(&mut self, estimator: ValueEstimator) -> Result<(), RewardError> {
        let dim = self.feature_dim();
        if dim != Some(estimator.input_dim()) {
            return Err(RewardError::DimensionMismatch {
                expected: dim.unwrap_or(0),
                got: estimator.input_dim(),
            });
        }
        if self.buffer.is_none() {
            self.buffer = Some(ExperienceBuffer::with_default_capacity(estimator.input_dim()));
        }
        self.estimator = Some(estimator);
        self.neural_memo.get_mut().clear();
        Ok(())
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn estimator(&self) -> Option<&ValueEstimator> {
        self.estimator.as_ref()
    }

    pub fn buffer(&self) -> Option<&ExperienceBuffer> {
        self.buffer.as_ref()
    }

    pub fn buffer_mut(&mut self) -> Option<&mut ExperienceBuffer> {
        self.buffer.as_mut()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.domain.features.as_ref().map(|f| f.dim())
    }

    pub fn rule_reward(&self, state: &StateHandle) -> RuleOutcome {
        rule_reward(state, self.domain.rules.as_deref())
    }

    pub fn heuristic_reward(&self, state: &StateHandle) -> f64 {
        heuristic_reward(state, self.domain.heuristic.as_deref())
    }

    /// Zero when no estimator or no feature map is configured.
    pub fn neural_reward(&self, state: &StateHandle) -> Result<f64, RewardError> {
        match (&self.estimator, &self.domain.features) {
            (Some(est), Some(fm)) => {
                if let Some(v) = self.neural_memo.borrow().get(state) {
                    return Ok(*v);
                }
                let mut buf = [0.0; MAX_FEATURES];
                let x = &mut buf[..fm.dim()];
                fm.write_features(state, x);
                let v = neural_reward(est, x)?;
                self.neural_memo.borrow_mut().insert(*state, v);
                Ok(v)
            }
            _ => Ok(0.0),
        }
    }

    pub fn components(&self, state: &StateHandle) -> Result<ComponentRewards, RewardError> {
        Ok(ComponentRewards {
            rule: self.rule_reward(state).reward,
            heuristic: self.heuristic_reward(state),
            neural: self.neural_reward(state)?,
        })
    }

    pub fn combined_reward(
        &self,
        state: &StateHandle,
        weights: &RewardWeights,
    ) -> Result<f64, RewardError> {
        Ok(combined_reward(weights, &self.components(state)?))
    }

    /// Same value as [`Self::combined_reward`]; components with zero weight
    /// are skipped.
    pub fn evaluate(
        &self,
        state: &StateHandle,
        w: &RewardWeights,
    ) -> Result<NodeEvaluation, RewardError> {
        let mut c = ComponentRewards::default();
        let mut pruned = false;
        if w.alpha > 0.0 {
            let rule = self.rule_reward(state);
            c.rule = rule.reward;
            pruned = !rule.valid;
        }
        if w.beta > 0.0 {
            c.heuristic = self.heuristic_reward(state);
        }
        if w.gamma_n > 0.0 {
            c.neural = self.neural_reward(state)?;
        }
        Ok(NodeEvaluation {
            rc: combined_reward(w, &c),
            pruned,
        })
    }

    /// Clamped estimator value, used in place of a rollout by the
    /// leaf-bootstrapping baseline.
    pub fn leaf_value(&self, state: &StateHandle) -> Option<f64> {
        self.estimator.as_ref()?;
        self.neural_reward(state).ok()
    }

    pub fn is_learning(&self) -> bool {
        self.buffer.is_some() && self.domain.features.is_some()
    }

    /// Logs `(features(state), target)` into the buffer if learning is on.
    pub fn record(&mut self, state: &StateHandle, target: f64) -> bool {
        let (Some(buffer), Some(fm)) = (self.buffer.as_mut(), self.domain.features.as_ref()) else {
            return false;
        };
        let mut buf = [0.0; MAX_FEATURES];
        let x = &mut buf[..fm.dim()];
        fm.write_features(state, x);
        buffer.record(x, target)
    }

    /// One training round on the current buffer. Returns the final loss.
    pub fn train(
        &mut self,
        epochs: usize,
        batch_size: usize,
        rng: &mut SimRng,
    ) -> Result<f64, RewardError> {
        let (Some(est), Some(buffer)) = (self.estimator.as_mut(), self.buffer.as_ref()) else {
            return Err(RewardError::EmptyBuffer);
        };
        self.neural_memo.get_mut().clear();
        est.train(buffer, epochs, batch_size, rng)
    }
}
