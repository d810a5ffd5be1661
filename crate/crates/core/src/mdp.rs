//! MDP abstraction shared by every environment and the search engine.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tabular::TabularMdp;

/// Random stream used by every sampling operation in the crate.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("state {0} does not belong to this environment")]
    ForeignState(StateHandle),
    #[error("action {action} is not legal in state {state} ({legal} legal actions)")]
    IllegalAction {
        state: StateHandle,
        action: ActionId,
        legal: usize,
    },
    #[error("state {0} is terminal")]
    TerminalState(StateHandle),
}

/// Opaque state reference. The encoding is the owning environment's
/// fingerprint plus a state index; the terminal flag is derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateHandle {
    env: u64,
    index: u32,
    terminal: bool,
}

impl StateHandle {
    pub(crate) fn new(env: u64, index: usize, terminal: bool) -> Self {
        Self {
            env,
            index: index as u32,
            terminal,
        }
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn env_fingerprint(&self) -> u64 {
        self.env
    }
}

impl fmt::Display for StateHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index)
    }
}

/// Index into the legal-action list of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    pub next_state: StateHandle,
    pub env_reward: f64,
    pub terminal: bool,
}

/// A root-to-leaf chain of (state, action) steps with the environment
/// rewards observed on each transition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<(StateHandle, ActionId)>,
    /// State reached by the last step, when known.
    pub final_state: Option<StateHandle>,
    /// One reward per step whose successor is known.
    pub rewards: Vec<f64>,
    pub discounted_return: f64,
}

impl Trajectory {
    pub fn from_steps(
        steps: Vec<(StateHandle, ActionId)>,
        final_state: Option<StateHandle>,
        rewards: Vec<f64>,
        discount: f64,
    ) -> Self {
        let discounted_return = discounted_sum(&rewards, discount);
        Self {
            steps,
            final_state,
            rewards,
            discounted_return,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Every state visited, including the final one.
    pub fn states(&self) -> impl Iterator<Item = StateHandle> + '_ {
        self.steps
            .iter()
            .map(|(s, _)| *s)
            .chain(self.final_state.iter().copied())
    }
}

pub fn discounted_sum(rewards: &[f64], discount: f64) -> f64 {
    let mut total = 0.0;
    let mut scale = 1.0;
    for r in rewards {
        total += scale * r;
        scale *= discount;
    }
    total
}

/// The ⟨S, A, P, R, γ⟩ tuple as a sampling interface.
///
/// Implementations must be immutable after construction; all randomness
/// comes from the caller's stream.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;

    fn initial_state(&self) -> StateHandle;

    fn discount(&self) -> f64;

    /// Largest absolute per-transition reward.
    fn reward_bound(&self) -> f64;

    /// Number of legal actions; zero exactly for terminal states.
    fn num_actions(&self, state: &StateHandle) -> Result<usize, MdpError>;

    fn sample_transition(
        &self,
        state: &StateHandle,
        action: ActionId,
        rng: &mut SimRng,
    ) -> Result<TransitionSample, MdpError>;

    /// Exact tabular form, when the environment has one.
    fn tabular(&self) -> Option<&TabularMdp> {
        None
    }

    /// Whether reaching `state` counts as accomplishing the task. Defaults
    /// to any terminal state.
    fn is_goal(&self, state: &StateHandle) -> bool {
        state.is_terminal()
    }

    /// Stable per-state label for dumps and result files.
    fn describe_state(&self, state: &StateHandle) -> String {
        state.to_string()
    }

    fn legal_actions(&self, state: &StateHandle) -> Result<Vec<ActionId>, MdpError> {
        Ok((0..self.num_actions(state)?).map(ActionId).collect())
    }
}

/// Discounted return of a uniform-random rollout truncated at `horizon`
/// steps or the first terminal state.
pub fn rollout_return<E: Environment + ?Sized>(
    state: &StateHandle,
    env: &E,
    horizon: usize,
    discount: f64,
    rng: &mut SimRng,
) -> f64 {
    let mut current = *state;
    let mut total = 0.0;
    let mut scale = 1.0;
    for _ in 0..horizon {
        if current.is_terminal() {
            break;
        }
        let n = match env.num_actions(&current) {
            Ok(n) if n > 0 => n,
            _ => break,
        };
        let action = ActionId(rng.gen_range(0..n));
        let Ok(step) = env.sample_transition(&current, action, rng) else {
            break;
        };
        total += scale * step.env_reward;
        scale *= discount;
        current = step.next_state;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_sum_matches_closed_form() {
        let r = [1.0, 1.0, 1.0];
        assert!((discounted_sum(&r, 0.5) - 1.75).abs() < 1e-15);
        assert_eq!(discounted_sum(&[], 0.9), 0.0);
    }

    #[test]
    fn handles_compare_by_encoding() {
        let a = StateHandle::new(7, 3, false);
        let b = StateHandle::new(7, 3, false);
        let c = StateHandle::new(8, 3, false);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
