//! Plain MCTS with the same selection rule minus the intermediate-reward
//! term: `P(a) ∝ exp(Q + U)`, random rollouts, discounted environment
//! returns. Kept as a self-contained reference for the reward-centered
//! engine; with all reward weights at zero the two must agree bit for bit.

use rand::{Rng, SeedableRng};

use super::tree::{NodeSnapshot, TreeSnapshot};
use super::{SearchConfig, SearchError, SelectionMode};
use crate::mdp::{ActionId, Environment, SimRng, StateHandle, Trajectory};

struct Node {
    state: StateHandle,
    parent: Option<(u32, usize)>,
    depth: usize,
    visits: u32,
    reward: f64,
    // per action: (visits, q, children)
    edges: Vec<(u32, f64, Vec<u32>)>,
}

pub struct VanillaOutput {
    pub best_action: ActionId,
    pub best_trajectory: Trajectory,
    pub nodes_expanded: usize,
    pub tree: TreeSnapshot,
}

fn new_node<E: Environment + ?Sized>(
    env: &E,
    state: StateHandle,
    parent: Option<(u32, usize)>,
    depth: usize,
    reward: f64,
) -> Result<Node, SearchError> {
    let n = env.num_actions(&state)?;
    Ok(Node {
        state,
        parent,
        depth,
        visits: 0,
        reward,
        edges: vec![(0, 0.0, Vec::new()); n],
    })
}

fn choose(node: &Node, config: &SearchConfig, rng: &mut SimRng) -> usize {
    let n = f64::from(node.visits);
    let scores: Vec<f64> = node
        .edges
        .iter()
        .map(|(v, q, _)| q + config.exploration * ((n + 1.0).ln() / (f64::from(*v) + 1.0)).sqrt())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if config.selection_mode == SelectionMode::Greedy {
        return scores.iter().position(|s| *s == max).unwrap_or(0);
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, e) in exps.iter().enumerate() {
        let p = e / total;
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn rollout<E: Environment + ?Sized>(
    env: &E,
    start: StateHandle,
    config: &SearchConfig,
    rng: &mut SimRng,
) -> Result<f64, SearchError> {
    let mut s = start;
    let mut total = 0.0;
    let mut scale = 1.0;
    for _ in 0..config.rollout_horizon {
        if s.is_terminal() {
            break;
        }
        let a = rng.gen_range(0..env.num_actions(&s)?);
        let t = env.sample_transition(&s, ActionId(a), rng)?;
        total += scale * t.env_reward;
        scale *= env.discount();
        s = t.next_state;
    }
    Ok(total)
}

fn most_visited(counts: impl Iterator<Item = u32>) -> Option<usize> {
    let mut best: Option<(usize, u32)> = None;
    for (i, c) in counts.enumerate() {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| i)
}

pub fn vanilla_search<E: Environment + ?Sized>(
    root: &StateHandle,
    env: &E,
    config: &SearchConfig,
) -> Result<VanillaOutput, SearchError> {
    config.validate()?;
    if root.is_terminal() {
        return Err(SearchError::TerminalRoot);
    }
    let mut rng = SimRng::seed_from_u64(config.rng_seed);
    let mut nodes = vec![new_node(env, *root, None, 0, 0.0)?];
    if nodes[0].edges.is_empty() {
        return Err(SearchError::TerminalRoot);
    }
    let gamma = env.discount();

    for _ in 0..config.simulations {
        let mut path: Vec<(usize, usize, usize)> = Vec::new();
        let mut cur = 0usize;
        let leaf = loop {
            let node = &nodes[cur];
            if node.state.is_terminal() || node.depth >= config.depth_limit {
                break cur;
            }
            if let Some(a) = node.edges.iter().position(|e| e.2.is_empty()) {
                let t = env.sample_transition(&node.state, ActionId(a), &mut rng)?;
                let child = new_node(env, t.next_state, Some((cur as u32, a)), node.depth + 1, t.env_reward)?;
                let id = nodes.len();
                nodes.push(child);
                nodes[cur].edges[a].2.push(id as u32);
                path.push((cur, a, id));
                break id;
            }
            let a = choose(node, config, &mut rng);
            let t = env.sample_transition(&node.state, ActionId(a), &mut rng)?;
            let existing = node.edges[a]
                .2
                .iter()
                .map(|&c| c as usize)
                .find(|&c| nodes[c].state == t.next_state);
            match existing {
                Some(c) => {
                    path.push((cur, a, c));
                    cur = c;
                }
                None => {
                    let child = new_node(env, t.next_state, Some((cur as u32, a)), node.depth + 1, t.env_reward)?;
                    let id = nodes.len();
                    nodes.push(child);
                    nodes[cur].edges[a].2.push(id as u32);
                    path.push((cur, a, id));
                    break id;
                }
            }
        };
        let mut g = if nodes[leaf].state.is_terminal() {
            0.0
        } else {
            rollout(env, nodes[leaf].state, config, &mut rng)?
        };
        nodes[leaf].visits += 1;
        for &(parent, a, child) in path.iter().rev() {
            g = nodes[child].reward + gamma * g;
            let p = &mut nodes[parent];
            p.visits += 1;
            let e = &mut p.edges[a];
            e.0 += 1;
            e.1 += (g - e.1) / f64::from(e.0);
        }
    }

    let best = most_visited(nodes[0].edges.iter().map(|e| e.0)).unwrap_or(0);
    let mut steps = Vec::new();
    let mut rewards = Vec::new();
    let mut final_state = None;
    let mut cur = 0usize;
    let mut action = Some(best);
    while let Some(a) = action {
        steps.push((nodes[cur].state, ActionId(a)));
        let children = &nodes[cur].edges[a].2;
        let Some(k) = most_visited(children.iter().map(|&c| nodes[c as usize].visits)) else {
            break;
        };
        cur = children[k] as usize;
        rewards.push(nodes[cur].reward);
        action = most_visited(nodes[cur].edges.iter().map(|e| e.0))
            .filter(|&b| nodes[cur].edges[b].0 > 0);
        if action.is_none() {
            final_state = Some(nodes[cur].state);
        }
    }

    let tree = TreeSnapshot {
        nodes: nodes
            .iter()
            .map(|n| NodeSnapshot {
                state: n.state,
                parent: n.parent,
                depth: n.depth,
                visits: n.visits,
                edges: n.edges.iter().map(|e| (e.0, e.1)).collect(),
            })
            .collect(),
    };
    Ok(VanillaOutput {
        best_action: ActionId(best),
        best_trajectory: Trajectory::from_steps(steps, final_state, rewards, gamma),
        nodes_expanded: nodes.len() - 1,
        tree,
    })
}
