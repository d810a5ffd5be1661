//! Exploration bonus and the softmax selection rule
//! `P(a) ∝ exp(Q(s,a) + R_c(s'_a) + U(s,a))` over unpruned actions.

use rand::Rng;

use super::tree::TreeNode;
use super::SearchError;
use crate::mdp::SimRng;

/// `c * sqrt(ln(N(s) + 1) / (N(s,a) + 1))`.
#[inline]
pub fn exploration_bonus(node_visits: f64, edge_visits: f64, c: f64) -> f64 {
    c * ((node_visits + 1.0).ln() / (edge_visits + 1.0)).sqrt()
}

/// Softmax of `scores` restricted to entries where `allowed` is true,
/// written into `out`. Disallowed entries get exactly 0.
pub fn masked_softmax(
    scores: &[f64],
    allowed: impl Fn(usize) -> bool,
    out: &mut Vec<f64>,
) -> Result<(), SearchError> {
    out.clear();
    out.resize(scores.len(), 0.0);
    let max = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(SearchError::AllPruned);
    }
    let mut total = 0.0;
    for (i, s) in scores.iter().enumerate() {
        if allowed(i) {
            let e = (s - max).exp();
            out[i] = e;
            total += e;
        }
    }
    for p in out.iter_mut() {
        *p /= total;
    }
    Ok(())
}

/// Per-action selection scores `Q + R_c(successor) + U`.
pub fn selection_scores(node: &TreeNode, c: f64, out: &mut Vec<f64>) {
    out.clear();
    let n = f64::from(node.visits);
    out.extend(
        node.edges
            .iter()
            .map(|e| e.q + e.rc_mean + exploration_bonus(n, f64::from(e.visits), c)),
    );
}

/// Probability vector over the node's actions; pruned actions get 0.
pub fn selection_distribution(node: &TreeNode, c: f64) -> Result<Vec<f64>, SearchError> {
    let mut scores = Vec::with_capacity(node.edges.len());
    selection_scores(node, c, &mut scores);
    let mut probs = Vec::with_capacity(scores.len());
    masked_softmax(&scores, |i| !node.edges[i].pruned, &mut probs)?;
    Ok(probs)
}

/// Inverse-CDF draw; consumes exactly one uniform.
pub fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Index of the largest allowed score, lowest index on ties.
pub fn argmax_allowed(scores: &[f64], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if allowed(i) && best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}
