use std::time::Duration;

use rand::Rng;

use super::search::search;
use super::{SearchConfig, SearchError};
use crate::mdp::{Environment, SimRng, Trajectory};
use crate::reward::RewardingCenter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeOptions {
    /// Maximum number of executed actions.
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Executed (state, action) steps and the observed rewards.
    pub trajectory: Trajectory,
    pub nodes_expanded: usize,
    pub searches: usize,
    pub wall_time: Duration,
    pub reward_eval_time: Duration,
    pub reward_evaluations: usize,
    /// Best trajectories returned by every search of the episode.
    pub planned: Vec<Trajectory>,
}

/// Plans with a fresh search at every step and executes the best action
/// until the episode terminates or `max_steps` actions were taken. Each
/// search is seeded from `rng`; success means ending in a goal state.
pub fn act_episode<E: Environment + ?Sized>(
    env: &E,
    center: &mut RewardingCenter,
    config: &SearchConfig,
    options: EpisodeOptions,
    rng: &mut SimRng,
) -> Result<EpisodeOutcome, SearchError> {
    let mut state = env.initial_state();
    let mut steps = Vec::new();
    let mut rewards = Vec::new();
    let mut planned = Vec::new();
    let mut nodes_expanded = 0;
    let mut wall_time = Duration::ZERO;
    let mut reward_eval_time = Duration::ZERO;
    let mut reward_evaluations = 0;
    for _ in 0..options.max_steps {
        if state.is_terminal() {
            break;
        }
        let step_config = SearchConfig {
            rng_seed: rng.gen(),
            ..*config
        };
        let result = search(&state, env, center, &step_config)?;
        nodes_expanded += result.nodes_expanded;
        wall_time += result.wall_time;
        reward_eval_time += result.reward_eval_time;
        reward_evaluations += result.reward_evaluations;
        let transition = env.sample_transition(&state, result.best_action, rng)?;
        steps.push((state, result.best_action));
        rewards.push(transition.env_reward);
        planned.push(result.best_trajectory);
        state = transition.next_state;
    }
    let searches = planned.len();
    Ok(EpisodeOutcome {
        success: state.is_terminal() && env.is_goal(&state),
        trajectory: Trajectory::from_steps(steps, Some(state), rewards, env.discount()),
        nodes_expanded,
        searches,
        wall_time,
        reward_eval_time,
        reward_evaluations,
        planned,
    })
}
