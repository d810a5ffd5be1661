use std::io::{self, Write};

use crate::mdp::{ActionId, Environment, StateHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Statistics of one (state, action) pair. Each distinct sampled
/// successor of the action gets its own child node.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// N(s, a)
    pub visits: u32,
    /// Running mean of the returns backed up through this edge.
    pub q: f64,
    /// Running mean of the cached R_c of the successors reached.
    pub rc_mean: f64,
    /// Every successor observed so far failed the rule check.
    pub pruned: bool,
    pub(crate) children: Vec<NodeId>,
}

impl Edge {
    fn new() -> Self {
        Self {
            visits: 0,
            q: 0.0,
            rc_mean: 0.0,
            pruned: false,
            children: Vec::new(),
        }
    }

    pub fn is_untried(&self) -> bool {
        self.children.is_empty()
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub state: StateHandle,
    pub parent: Option<(NodeId, ActionId)>,
    pub depth: usize,
    /// N(s)
    pub visits: u32,
    pub edges: Vec<Edge>,
    /// R_c of this node's state, computed once at creation.
    pub cached_rc: f64,
    /// Environment reward of the transition that produced this node.
    pub inbound_reward: f64,
    pub pruned: bool,
}

impl TreeNode {
    pub fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    pub fn first_untried(&self) -> Option<ActionId> {
        self.edges.iter().position(Edge::is_untried).map(ActionId)
    }

    /// V(s) = max_a Q(s, a) over visited, unpruned actions.
    pub fn value(&self) -> Option<f64> {
        self.edges
            .iter()
            .filter(|e| e.visits > 0 && !e.pruned)
            .map(|e| e.q)
            .reduce(f64::max)
    }
}

/// Arena-backed search tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchTree {
    nodes: Vec<TreeNode>,
}

impl SearchTree {
    pub(crate) fn with_root(state: StateHandle, n_actions: usize) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.nodes.push(TreeNode {
            state,
            parent: None,
            depth: 0,
            visits: 0,
            edges: (0..n_actions).map(|_| Edge::new()).collect(),
            cached_rc: 0.0,
            inbound_reward: 0.0,
            pruned: false,
        });
        tree
    }

    pub(crate) fn add_child(
        &mut self,
        parent: NodeId,
        action: ActionId,
        state: StateHandle,
        n_actions: usize,
        inbound_reward: f64,
        cached_rc: f64,
        pruned: bool,
    ) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let depth = self.nodes[parent.index()].depth + 1;
        self.nodes.push(TreeNode {
            state,
            parent: Some((parent, action)),
            depth,
            visits: 0,
            edges: (0..n_actions).map(|_| Edge::new()).collect(),
            cached_rc,
            inbound_reward,
            pruned,
        });
        self.nodes[parent.index()].edges[action.0].children.push(id);
        let all_pruned = pruned
            && self.nodes[parent.index()].edges[action.0]
                .children
                .iter()
                .all(|c| self.nodes[c.index()].pruned);
        self.nodes[parent.index()].edges[action.0].pruned = all_pruned;
        id
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.index()]
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        &mut self.nodes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &TreeNode)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Child of `action` at `node` whose state equals `state`, if any.
    pub fn find_child(&self, node: NodeId, action: ActionId, state: &StateHandle) -> Option<NodeId> {
        self.nodes[node.index()].edges[action.0]
            .children
            .iter()
            .copied()
            .find(|c| self.nodes[c.index()].state == *state)
    }

    /// Node statistics in creation order, for comparing trees across
    /// implementations.
    pub fn snapshot(&self) -> TreeSnapshot {
        TreeSnapshot {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSnapshot {
                    state: n.state,
                    parent: n.parent.map(|(p, a)| (p.0, a.0)),
                    depth: n.depth,
                    visits: n.visits,
                    edges: n.edges.iter().map(|e| (e.visits, e.q)).collect(),
                })
                .collect(),
        }
    }

    /// Depth-first text dump, one node per line:
    /// `depth<TAB>state<TAB>N<TAB>a:N:Q;...<TAB>rc<TAB>pruned`.
    pub fn dump<E: Environment + ?Sized, W: Write>(&self, env: &E, out: &mut W) -> io::Result<()> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let mut stack = vec![NodeId::ROOT];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id.index()];
            let edges: Vec<String> = n
                .edges
                .iter()
                .enumerate()
                .map(|(a, e)| format!("{a}:{}:{}", e.visits, e.q))
                .collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                n.depth,
                env.describe_state(&n.state),
                n.visits,
                edges.join(";"),
                n.cached_rc,
                u8::from(n.pruned)
            )?;
            for e in n.edges.iter().rev() {
                stack.extend(e.children.iter().rev());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSnapshot {
    pub state: StateHandle,
    pub parent: Option<(u32, usize)>,
    pub depth: usize,
    pub visits: u32,
    pub edges: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSnapshot {
    pub nodes: Vec<NodeSnapshot>,
}

impl TreeSnapshot {
    /// Exact equality, comparing floats by bit pattern.
    pub fn bit_identical(&self, other: &TreeSnapshot) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| {
                a.state == b.state
                    && a.parent == b.parent
                    && a.depth == b.depth
                    && a.visits == b.visits
                    && a.edges.len() == b.edges.len()
                    && a
                        .edges
                        .iter()
                        .zip(&b.edges)
                        .all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits())
            })
    }
}
