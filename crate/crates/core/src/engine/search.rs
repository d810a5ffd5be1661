use std::time::{Duration, Instant};

use rand::SeedableRng;

use super::select::{argmax_allowed, masked_softmax, sample_index, selection_scores};
use super::tree::{NodeId, SearchTree};
use super::{LeafEvaluation, SearchConfig, SearchError, SelectionMode};
use crate::mdp::{rollout_return, ActionId, Environment, SimRng, StateHandle, Trajectory, TransitionSample};
use crate::reward::RewardingCenter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub parent: NodeId,
    pub action: ActionId,
    pub child: NodeId,
}

/// Where a descent stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// `node` has an untried action.
    Untried { path: Vec<PathStep>, node: NodeId },
    /// The sampled successor of (`node`, `action`) is not in the tree yet.
    NewOutcome {
        path: Vec<PathStep>,
        node: NodeId,
        action: ActionId,
        sample: TransitionSample,
    },
    /// Existing terminal, pruned, or depth-limited node.
    Leaf { path: Vec<PathStep>, node: NodeId },
    /// Every action of `node` is pruned.
    Dead { path: Vec<PathStep>, node: NodeId },
}

impl Selection {
    pub fn path(&self) -> &[PathStep] {
        match self {
            Selection::Untried { path, .. }
            | Selection::NewOutcome { path, .. }
            | Selection::Leaf { path, .. }
            | Selection::Dead { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeStats {
    pub visits: u32,
    pub q: f64,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_action: ActionId,
    pub best_trajectory: Trajectory,
    pub nodes_expanded: usize,
    pub wall_time: Duration,
    pub root_edge_stats: Vec<EdgeStats>,
    /// Time spent evaluating R_c for new nodes.
    pub reward_eval_time: Duration,
    pub reward_evaluations: usize,
    pub max_depth: usize,
}

impl SearchResult {
    /// Equality ignoring the timing fields.
    pub fn same_outcome(&self, other: &SearchResult) -> bool {
        self.best_action == other.best_action
            && self.best_trajectory == other.best_trajectory
            && self.nodes_expanded == other.nodes_expanded
            && self.root_edge_stats == other.root_edge_stats
            && self.reward_evaluations == other.reward_evaluations
            && self.max_depth == other.max_depth
    }
}

/// One search: owns its tree and random stream.
pub struct Mcts<'e, E: Environment + ?Sized> {
    env: &'e E,
    config: SearchConfig,
    tree: SearchTree,
    rng: SimRng,
    nodes_expanded: usize,
    reward_eval_time: Duration,
    reward_evaluations: usize,
    scores: Vec<f64>,
    probs: Vec<f64>,
    backup_log: Option<Vec<(NodeId, ActionId, f64)>>,
}

impl<'e, E: Environment + ?Sized> Mcts<'e, E> {
    pub fn new(env: &'e E, root: StateHandle, config: SearchConfig) -> Result<Self, SearchError> {
        config.validate()?;
        if root.is_terminal() {
            return Err(SearchError::TerminalRoot);
        }
        let n_actions = env.num_actions(&root)?;
        if n_actions == 0 {
            return Err(SearchError::TerminalRoot);
        }
        Ok(Self {
            env,
            config,
            tree: SearchTree::with_root(root, n_actions),
            rng: SimRng::seed_from_u64(config.rng_seed),
            nodes_expanded: 0,
            reward_eval_time: Duration::ZERO,
            reward_evaluations: 0,
            scores: Vec::new(),
            probs: Vec::new(),
            backup_log: None,
        })
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn nodes_expanded(&self) -> usize {
        self.nodes_expanded
    }

    /// Keep every backed-up (node, action, return) triple.
    pub fn enable_backup_log(&mut self) {
        self.backup_log = Some(Vec::new());
    }

    pub fn backup_log(&self) -> &[(NodeId, ActionId, f64)] {
        self.backup_log.as_deref().unwrap_or(&[])
    }

    /// Descends from the root, sampling (or taking the argmax of) the
    /// selection distribution at each fully expanded node and following the
    /// sampled successor.
    pub fn select_path(&mut self) -> Result<Selection, SearchError> {
        let mut path = Vec::new();
        let mut id = NodeId::ROOT;
        loop {
            let node = self.tree.node(id);
            if node.is_terminal() || node.pruned || node.depth >= self.config.depth_limit {
                return Ok(Selection::Leaf { path, node: id });
            }
            if node.first_untried().is_some() {
                return Ok(Selection::Untried { path, node: id });
            }
            selection_scores(node, self.config.exploration, &mut self.scores);
            let edges = &node.edges;
            let action = match self.config.selection_mode {
                SelectionMode::Sample => {
                    match masked_softmax(&self.scores, |i| !edges[i].pruned, &mut self.probs) {
                        Ok(()) => sample_index(&self.probs, &mut self.rng),
                        Err(SearchError::AllPruned) => return Ok(Selection::Dead { path, node: id }),
                        Err(e) => return Err(e),
                    }
                }
                SelectionMode::Greedy => match argmax_allowed(&self.scores, |i| !edges[i].pruned) {
                    Some(a) => a,
                    None => return Ok(Selection::Dead { path, node: id }),
                },
            };
            let action = ActionId(action);
            let state = node.state;
            let sample = self.env.sample_transition(&state, action, &mut self.rng)?;
            match self.tree.find_child(id, action, &sample.next_state) {
                Some(child) => {
                    path.push(PathStep {
                        parent: id,
                        action,
                        child,
                    });
                    id = child;
                }
                None => {
                    return Ok(Selection::NewOutcome {
                        path,
                        node: id,
                        action,
                        sample,
                    })
                }
            }
        }
    }

    fn add_outcome(
        &mut self,
        parent: NodeId,
        action: ActionId,
        sample: TransitionSample,
        center: &RewardingCenter,
    ) -> Result<NodeId, SearchError> {
        let started = Instant::now();
        let eval = center.evaluate(&sample.next_state, &self.config.weights)?;
        self.reward_eval_time += started.elapsed();
        self.reward_evaluations += 1;
        let n_actions = self.env.num_actions(&sample.next_state)?;
        let id = self.tree.add_child(
            parent,
            action,
            sample.next_state,
            n_actions,
            sample.env_reward,
            eval.rc,
            eval.pruned,
        );
        self.nodes_expanded += 1;
        Ok(id)
    }

    /// Expands the lowest-index untried action of `node`: samples one
    /// transition and creates the child with its R_c evaluated once.
    pub fn expand(&mut self, node: NodeId, center: &RewardingCenter) -> Result<NodeId, SearchError> {
        let n = self.tree.node(node);
        if n.depth >= self.config.depth_limit {
            return Err(SearchError::DepthLimit);
        }
        let action = n.first_untried().ok_or(SearchError::NoUntriedAction)?;
        let state = n.state;
        let sample = self.env.sample_transition(&state, action, &mut self.rng)?;
        self.add_outcome(node, action, sample, center)
    }

    /// Value of the continuation below `leaf`.
    fn evaluate_leaf(&mut self, leaf: NodeId, center: &RewardingCenter) -> f64 {
        let node = self.tree.node(leaf);
        if node.is_terminal() || node.pruned {
            return 0.0;
        }
        let state = node.state;
        match self.config.leaf_evaluation {
            LeafEvaluation::Rollout => rollout_return(
                &state,
                self.env,
                self.config.rollout_horizon,
                self.env.discount(),
                &mut self.rng,
            ),
            LeafEvaluation::Estimator => center.leaf_value(&state).unwrap_or(0.0),
        }
    }

    /// Walks leaf to root. Each edge receives
    /// `G_i = r_i + R_c(child_i) + discount * G_{i+1}` with `G` below the
    /// leaf equal to `leaf_value`; `N(s,a)` is incremented before the mean
    /// update so `Q` stays an exact running mean.
    pub fn backpropagate(
        &mut self,
        path: &[PathStep],
        leaf: NodeId,
        leaf_value: f64,
        center: &mut RewardingCenter,
    ) {
        let discount = self.env.discount();
        let record = self.config.record_experience && center.is_learning();
        self.tree.node_mut(leaf).visits += 1;
        let mut g = leaf_value;
        for step in path.iter().rev() {
            let child = self.tree.node(step.child);
            let (reward, rc, child_state) = (child.inbound_reward, child.cached_rc, child.state);
            g = reward + rc + discount * g;
            let parent = self.tree.node_mut(step.parent);
            parent.visits += 1;
            let edge = &mut parent.edges[step.action.0];
            edge.visits += 1;
            let n = f64::from(edge.visits);
            edge.q += (g - edge.q) / n;
            edge.rc_mean += (rc - edge.rc_mean) / n;
            if let Some(log) = self.backup_log.as_mut() {
                log.push((step.parent, step.action, g));
            }
            if record {
                center.record(&child_state, g);
            }
        }
    }

    /// One select / expand / evaluate / simulate / backpropagate cycle.
    pub fn iterate(&mut self, center: &mut RewardingCenter) -> Result<(), SearchError> {
        let selection = self.select_path()?;
        let (mut path, leaf, leaf_value) = match selection {
            Selection::Untried { mut path, node } => {
                let action = self.tree.node(node).first_untried().ok_or(SearchError::NoUntriedAction)?;
                let child = self.expand(node, center)?;
                path.push(PathStep {
                    parent: node,
                    action,
                    child,
                });
                let v = self.evaluate_leaf(child, center);
                (path, child, v)
            }
            Selection::NewOutcome {
                mut path,
                node,
                action,
                sample,
            } => {
                let child = self.add_outcome(node, action, sample, center)?;
                path.push(PathStep {
                    parent: node,
                    action,
                    child,
                });
                let v = self.evaluate_leaf(child, center);
                (path, child, v)
            }
            Selection::Leaf { path, node } => {
                let v = self.evaluate_leaf(node, center);
                (path, node, v)
            }
            // every continuation is infeasible: back up the rule penalty
            Selection::Dead { path, node } => (path, node, -self.config.weights.alpha),
        };
        self.backpropagate(&path, leaf, leaf_value, center);
        path.clear();
        Ok(())
    }

    /// Runs exactly T iterations and summarizes the tree.
    pub fn run(&mut self, center: &mut RewardingCenter) -> Result<SearchResult, SearchError> {
        let started = Instant::now();
        for _ in 0..self.config.simulations {
            self.iterate(center)?;
        }
        let mut result = self.result();
        result.wall_time = started.elapsed();
        Ok(result)
    }

    /// Root action with the most visits among unpruned actions (lowest
    /// index on ties); falls back to all actions when every one is pruned.
    pub fn best_action(&self) -> ActionId {
        let root = self.tree.root();
        let visits: Vec<f64> = root.edges.iter().map(|e| f64::from(e.visits)).collect();
        argmax_allowed(&visits, |i| !root.edges[i].pruned)
            .or_else(|| argmax_allowed(&visits, |_| true))
            .map(ActionId)
            .unwrap_or(ActionId(0))
    }

    /// Most-visited chain from the root. Pruned nodes are never entered.
    pub fn best_trajectory(&self) -> Trajectory {
        let mut steps = Vec::new();
        let mut rewards = Vec::new();
        let mut id = NodeId::ROOT;
        let mut action = Some(self.best_action());
        let mut final_state = None;
        while let Some(a) = action {
            let node = self.tree.node(id);
            let edge = &node.edges[a.0];
            steps.push((node.state, a));
            let child = edge
                .children
                .iter()
                .copied()
                .filter(|c| !self.tree.node(*c).pruned)
                .fold(None, |best: Option<NodeId>, c| match best {
                    Some(b) if self.tree.node(b).visits >= self.tree.node(c).visits => Some(b),
                    _ => Some(c),
                });
            let Some(child) = child else {
                break;
            };
            let child_node = self.tree.node(child);
            rewards.push(child_node.inbound_reward);
            id = child;
            let visits: Vec<f64> = child_node.edges.iter().map(|e| f64::from(e.visits)).collect();
            action = argmax_allowed(&visits, |i| {
                !child_node.edges[i].pruned && child_node.edges[i].visits > 0
            })
            .map(ActionId);
            if action.is_none() {
                final_state = Some(child_node.state);
            }
        }
        Trajectory::from_steps(steps, final_state, rewards, self.env.discount())
    }

    pub fn result(&self) -> SearchResult {
        SearchResult {
            best_action: self.best_action(),
            best_trajectory: self.best_trajectory(),
            nodes_expanded: self.nodes_expanded,
            wall_time: Duration::ZERO,
            root_edge_stats: self
                .tree
                .root()
                .edges
                .iter()
                .map(|e| EdgeStats {
                    visits: e.visits,
                    q: e.q,
                    pruned: e.pruned,
                })
                .collect(),
            reward_eval_time: self.reward_eval_time,
            reward_evaluations: self.reward_evaluations,
            max_depth: self.tree.max_depth(),
        }
    }
}

/// Runs one search from `root` with `config` and returns its summary.
pub fn search<E: Environment + ?Sized>(
    root: &StateHandle,
    env: &E,
    center: &mut RewardingCenter,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    Mcts::new(env, *root, *config)?.run(center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{grid_domain, make_chain, make_grid, Cell, GridGraspSpec, StochChainSpec, RIGHT};
    use crate::reward::RewardWeights;

    fn chain3() -> crate::tabular::TabularEnv {
        make_chain(&StochChainSpec::new(3, 0.0)).unwrap()
    }

    #[test]
    fn terminal_root_is_rejected() {
        let env = chain3();
        let goal = env.state(2).unwrap();
        assert_eq!(
            Mcts::new(&env, goal, SearchConfig::vanilla()).err(),
            Some(SearchError::TerminalRoot)
        );
    }

    #[test]
    fn deterministic_chain_prefers_right() {
        let env = chain3();
        let mut center = RewardingCenter::disabled();
        for seed in 0..20 {
            let greedy = SearchConfig {
                selection_mode: SelectionMode::Greedy,
                rng_seed: seed,
                ..SearchConfig::vanilla()
            };
            let r = search(&env.initial_state(), &env, &mut center, &greedy).unwrap();
            assert_eq!(r.best_action, ActionId(RIGHT));
            // sampled descent splits visits almost evenly, but the value ordering holds
            let sampled = SearchConfig {
                rng_seed: seed,
                ..SearchConfig::vanilla()
            };
            let r = search(&env.initial_state(), &env, &mut center, &sampled).unwrap();
            assert!(r.root_edge_stats[RIGHT].q > r.root_edge_stats[0].q);
        }
    }

    #[test]
    fn single_simulation_expands_once() {
        let env = chain3();
        let config = SearchConfig {
            simulations: 1,
            ..SearchConfig::vanilla()
        };
        let mut center = RewardingCenter::disabled();
        let mut mcts = Mcts::new(&env, env.initial_state(), config).unwrap();
        let r = mcts.run(&mut center).unwrap();
        assert_eq!(r.nodes_expanded, 1);
        assert_eq!(mcts.tree().len(), 2);
        assert_eq!(r.best_action, ActionId(0));
        assert_eq!(r.root_edge_stats[0].visits, 1);
        assert_eq!(r.root_edge_stats[1].visits, 0);
        assert_eq!(r.best_trajectory.len(), 1);
        assert_eq!(mcts.tree().root().visits, 1);
    }

    #[test]
    fn same_seed_same_result() {
        let env = make_grid(&GridGraspSpec::obstacle_course().with_slip(0.1)).unwrap();
        let spec = GridGraspSpec::obstacle_course();
        let config = SearchConfig {
            rng_seed: 99,
            ..SearchConfig::default()
        };
        let run = || {
            let mut center = RewardingCenter::new(grid_domain(&spec)).unwrap();
            let mut mcts = Mcts::new(&env, env.initial_state(), config).unwrap();
            let r = mcts.run(&mut center).unwrap();
            (r, mcts.tree().snapshot())
        };
        let (a, ta) = run();
        let (b, tb) = run();
        assert!(a.same_outcome(&b));
        assert!(ta.bit_identical(&tb));
    }

    #[test]
    fn incremental_mean_update() {
        let env = chain3();
        let mut center = RewardingCenter::disabled();
        let mut mcts = Mcts::new(&env, env.initial_state(), SearchConfig::vanilla()).unwrap();
        let child = mcts.expand(NodeId::ROOT, &center).unwrap();
        {
            let edge = &mut mcts.tree.node_mut(NodeId::ROOT).edges[0];
            edge.visits = 1;
            edge.q = 0.5;
        }
        let path = [PathStep {
            parent: NodeId::ROOT,
            action: ActionId(0),
            child,
        }];
        // child reward is 0 and discount 0.95, so a leaf value of 1/0.95 gives G = 1
        mcts.backpropagate(&path, child, 1.0 / 0.95, &mut center);
        let edge = &mcts.tree().root().edges[0];
        assert_eq!(edge.visits, 2);
        assert!((edge.q - 0.75).abs() < 1e-15);
    }

    #[test]
    fn q_is_mean_of_logged_returns() {
        let env = make_grid(&GridGraspSpec::obstacle_course().with_slip(0.2)).unwrap();
        let spec = GridGraspSpec::obstacle_course();
        let mut center = RewardingCenter::new(grid_domain(&spec)).unwrap();
        let config = SearchConfig {
            simulations: 300,
            rng_seed: 5,
            ..SearchConfig::default()
        };
        let mut mcts = Mcts::new(&env, env.initial_state(), config).unwrap();
        mcts.enable_backup_log();
        mcts.run(&mut center).unwrap();
        let mut sums: std::collections::HashMap<(NodeId, ActionId), (f64, u32)> = Default::default();
        for (node, action, g) in mcts.backup_log() {
            let e = sums.entry((*node, *action)).or_default();
            e.0 += g;
            e.1 += 1;
        }
        for ((node, action), (sum, n)) in sums {
            let edge = &mcts.tree().node(node).edges[action.0];
            assert_eq!(edge.visits, n);
            assert!((edge.q - sum / f64::from(n)).abs() < 1e-9);
        }
    }

    #[test]
    fn expansion_caches_combined_reward() {
        let spec = GridGraspSpec::obstacle_course();
        let env = make_grid(&spec).unwrap();
        let center = RewardingCenter::new(grid_domain(&spec)).unwrap();
        let config = SearchConfig::default();
        let mut mcts = Mcts::new(&env, env.initial_state(), config).unwrap();
        let child = mcts.expand(NodeId::ROOT, &center).unwrap();
        let node = mcts.tree().node(child);
        let direct = center.combined_reward(&node.state, &config.weights).unwrap();
        assert_eq!(node.cached_rc, direct);
        assert_eq!(mcts.nodes_expanded(), 1);
    }

    #[test]
    fn obstacle_child_is_pruned() {
        let mut spec = GridGraspSpec::open(4, 4);
        spec.obstacles.insert(Cell::new(0, 1));
        let env = make_grid(&spec).unwrap();
        let center = RewardingCenter::new(grid_domain(&spec)).unwrap();
        let mut mcts = Mcts::new(&env, env.initial_state(), SearchConfig::default()).unwrap();
        // action 0 is north, into the obstacle
        let child = mcts.expand(NodeId::ROOT, &center).unwrap();
        assert!(mcts.tree().node(child).pruned);
        assert!(mcts.tree().root().edges[0].pruned);
        let vanilla_center = RewardingCenter::disabled();
        let mut plain = Mcts::new(&env, env.initial_state(), SearchConfig::vanilla()).unwrap();
        let child = plain.expand(NodeId::ROOT, &vanilla_center).unwrap();
        assert!(!plain.tree().node(child).pruned);
    }

    #[test]
    fn pruned_actions_are_never_selected() {
        let mut spec = GridGraspSpec::open(4, 4);
        spec.obstacles.insert(Cell::new(0, 1));
        let env = make_grid(&spec).unwrap();
        let mut center = RewardingCenter::new(grid_domain(&spec)).unwrap();
        let config = SearchConfig {
            simulations: 200,
            ..SearchConfig::default()
        };
        let r = search(&env.initial_state(), &env, &mut center, &config).unwrap();
        assert!(r.root_edge_stats[0].pruned);
        assert_eq!(r.root_edge_stats[0].visits, 1);
        assert_ne!(r.best_action, ActionId(0));
    }

    #[test]
    fn greedy_selection_takes_argmax() {
        let env = chain3();
        let config = SearchConfig {
            selection_mode: SelectionMode::Greedy,
            ..SearchConfig::vanilla()
        };
        let mut center = RewardingCenter::disabled();
        let mut mcts = Mcts::new(&env, env.initial_state(), config).unwrap();
        mcts.iterate(&mut center).unwrap();
        mcts.iterate(&mut center).unwrap();
        {
            let root = mcts.tree.node_mut(NodeId::ROOT);
            root.edges[0].q = 0.9;
            root.edges[1].q = 0.1;
        }
        let selection = mcts.select_path().unwrap();
        assert_eq!(selection.path()[0].action, ActionId(0));
    }

    #[test]
    fn forced_move_root() {
        use crate::tabular::{Outcome, TabularEnv, TabularMdp};
        let step = |next| Outcome {
            next,
            prob: 1.0,
            reward: 0.0,
        };
        let mdp = TabularMdp::new(
            0.9,
            0,
            vec![false, false, true],
            vec![vec![vec![step(1)]], vec![vec![step(0)], vec![step(2)]], vec![]],
        )
        .unwrap();
        let env = TabularEnv::new("forced", mdp);
        let mut center = RewardingCenter::disabled();
        let config = SearchConfig {
            simulations: 1,
            ..SearchConfig::vanilla()
        };
        let mut mcts = Mcts::new(&env, env.initial_state(), config).unwrap();
        let r = mcts.run(&mut center).unwrap();
        assert_eq!(r.best_action, ActionId(0));
        let second = mcts.select_path().unwrap();
        assert_eq!(second.path().len(), 1);
        assert_eq!(second.path()[0].action, ActionId(0));
    }

    #[test]
    fn budget_and_depth_limits_hold() {
        let env = make_grid(&GridGraspSpec::obstacle_course().with_slip(0.3)).unwrap();
        for seed in 0..10 {
            let config = SearchConfig {
                simulations: 120,
                depth_limit: 4,
                rng_seed: seed,
                ..SearchConfig::vanilla()
            };
            let mut center = RewardingCenter::disabled();
            let r = search(&env.initial_state(), &env, &mut center, &config).unwrap();
            assert!(r.nodes_expanded <= 120);
            assert!(r.max_depth <= 4);
        }
    }

    #[test]
    fn boxed_in_root_backs_up_rule_penalty() {
        let mut spec = GridGraspSpec::open(3, 3);
        spec.obstacles.insert(Cell::new(1, 0));
        spec.obstacles.insert(Cell::new(0, 1));
        let env = make_grid(&spec).unwrap();
        let mut center = RewardingCenter::new(grid_domain(&spec)).unwrap();
        let config = SearchConfig {
            weights: RewardWeights::new(0.5, 0.0, 0.0).unwrap(),
            ..SearchConfig::default()
        };
        let mut mcts = Mcts::new(&env, env.initial_state(), config).unwrap();
        let r = mcts.run(&mut center).unwrap();
        assert!(r.root_edge_stats.iter().all(|e| e.pruned));
        assert_eq!(mcts.tree().root().visits, 50);
        // best action falls back to all actions
        assert_eq!(r.best_action, ActionId(0));
    }
}
