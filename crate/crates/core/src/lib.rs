//! Monte Carlo tree search with intermediate rewards from a composite
//! rewarding center (rule validation, heuristic scoring, learned value),
//! tabular test environments, exact solvers, and an experiment harness.

pub mod engine;
pub mod env;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod reward;
pub mod tabular;

pub use engine::{act_episode, search, Mcts, SearchConfig, SearchError, SearchResult};
pub use mdp::{ActionId, Environment, SimRng, StateHandle, Trajectory};
pub use reward::{RewardWeights, RewardingCenter};
pub use tabular::{TabularEnv, TabularMdp};
