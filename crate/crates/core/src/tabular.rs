//! Exact tabular MDPs, their line-oriented text format, and the sampling
//! environment built on top of them.
//!
//! Text format (one directive per line, `#` starts a comment):
//!
//! ```text
//! tabular-mdp 1
//! states 3
//! discount 0.95
//! start 0
//! terminal 2
//! t 0 0 0 1 0        # t <state> <action> <next> <prob> <reward>
//! t 0 1 1 1 0
//! ```
//!
//! Actions of a state are numbered densely from 0. Floats are written in
//! shortest round-trip form, so export followed by parse is bit-exact.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::mdp::{ActionId, Environment, MdpError, SimRng, StateHandle, TransitionSample};

pub const FORMAT_HEADER: &str = "tabular-mdp 1";

const PROB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TabularError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mdp: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// ⟨S, A, P, R, γ⟩ in explicit form. `P[s][a]` is stored sparsely as the
/// list of outcomes with nonzero probability, in ascending `next` order.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    discount: f64,
    start: usize,
    terminal: Vec<bool>,
    transitions: Vec<Vec<Vec<Outcome>>>,
}

impl TabularMdp {
    /// Builds and validates. Outcomes with the same successor are merged.
    pub fn new(
        discount: f64,
        start: usize,
        terminal: Vec<bool>,
        transitions: Vec<Vec<Vec<Outcome>>>,
    ) -> Result<Self, TabularError> {
        let transitions = transitions
            .into_iter()
            .map(|acts| acts.into_iter().map(merge_outcomes).collect())
            .collect();
        let mdp = Self {
            discount,
            start,
            terminal,
            transitions,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<(), TabularError> {
        let n = self.terminal.len();
        let bad = |m: String| Err(TabularError::Invalid(m));
        if n == 0 {
            return bad("no states".into());
        }
        if self.transitions.len() != n {
            return bad(format!(
                "{} transition rows for {} states",
                self.transitions.len(),
                n
            ));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount {} outside (0, 1]", self.discount));
        }
        if self.start >= n {
            return bad(format!("start state {} out of range", self.start));
        }
        for (s, actions) in self.transitions.iter().enumerate() {
            if self.terminal[s] && !actions.is_empty() {
                return bad(format!("terminal state {s} has actions"));
            }
            if !self.terminal[s] && actions.is_empty() {
                return bad(format!("non-terminal state {s} has no actions"));
            }
            for (a, outcomes) in actions.iter().enumerate() {
                let mut total = 0.0;
                for o in outcomes {
                    if o.next >= n {
                        return bad(format!("state {s} action {a}: successor {} out of range", o.next));
                    }
                    if !(o.prob.is_finite() && o.prob > 0.0) {
                        return bad(format!("state {s} action {a}: probability {}", o.prob));
                    }
                    if !o.reward.is_finite() {
                        return bad(format!("state {s} action {a}: non-finite reward"));
                    }
                    total += o.prob;
                }
                if (total - 1.0).abs() > PROB_TOLERANCE {
                    return bad(format!(
                        "state {s} action {a}: probabilities sum to {total}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.terminal.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn n_actions(&self, s: usize) -> usize {
        self.transitions[s].len()
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.transitions[s][a]
    }

    /// Probability of `next` under (s, a); zero when unlisted.
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.outcomes(s, a)
            .iter()
            .find(|o| o.next == next)
            .map_or(0.0, |o| o.prob)
    }

    pub fn reward_bound(&self) -> f64 {
        self.transitions
            .iter()
            .flatten()
            .flatten()
            .map(|o| o.reward.abs())
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "states {}", self.n_states());
        let _ = writeln!(out, "discount {}", self.discount);
        let _ = writeln!(out, "start {}", self.start);
        let terminals: Vec<String> = (0..self.n_states())
            .filter(|&s| self.terminal[s])
            .map(|s| s.to_string())
            .collect();
        if !terminals.is_empty() {
            let _ = writeln!(out, "terminal {}", terminals.join(" "));
        }
        for (s, actions) in self.transitions.iter().enumerate() {
            for (a, outcomes) in actions.iter().enumerate() {
                for o in outcomes {
                    let _ = writeln!(out, "t {s} {a} {} {} {}", o.next, o.prob, o.reward);
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TabularError> {
        let mut states: Option<usize> = None;
        let mut discount: Option<f64> = None;
        let mut start = 0usize;
        let mut terminal_list: Vec<(usize, usize)> = Vec::new();
        let mut rows: Vec<(usize, usize, usize, usize, f64, f64)> = Vec::new();
        let mut seen_header = false;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TabularError::Parse { line: line_no, msg };
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            if !seen_header {
                if line != FORMAT_HEADER {
                    return Err(err(format!("expected header `{FORMAT_HEADER}`")));
                }
                seen_header = true;
                continue;
            }
            match key {
                "states" => states = Some(parse_one(&rest, line_no)?),
                "discount" => discount = Some(parse_one(&rest, line_no)?),
                "start" => start = parse_one(&rest, line_no)?,
                "terminal" => {
                    for tok in &rest {
                        terminal_list.push((parse_tok(tok, line_no)?, line_no));
                    }
                }
                "t" => {
                    if rest.len() != 5 {
                        return Err(err(format!("transition needs 5 fields, got {}", rest.len())));
                    }
                    rows.push((
                        line_no,
                        parse_tok(rest[0], line_no)?,
                        parse_tok(rest[1], line_no)?,
                        parse_tok(rest[2], line_no)?,
                        parse_tok(rest[3], line_no)?,
                        parse_tok(rest[4], line_no)?,
                    ));
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        if !seen_header {
            return Err(TabularError::Parse {
                line: 1,
                msg: "empty description".into(),
            });
        }
        let n = states.ok_or_else(|| TabularError::Invalid("missing `states`".into()))?;
        let discount = discount.ok_or_else(|| TabularError::Invalid("missing `discount`".into()))?;
        let mut terminal = vec![false; n];
        for (s, line) in terminal_list {
            if s >= n {
                return Err(TabularError::Parse {
                    line,
                    msg: format!("terminal state {s} out of range"),
                });
            }
            terminal[s] = true;
        }
        let mut transitions: Vec<Vec<Vec<Outcome>>> = vec![Vec::new(); n];
        for (line, s, a, next, prob, reward) in rows {
            if s >= n {
                return Err(TabularError::Parse {
                    line,
                    msg: format!("state {s} out of range"),
                });
            }
            let acts = &mut transitions[s];
            if a > acts.len() {
                return Err(TabularError::Parse {
                    line,
                    msg: format!("action {a} of state {s} skips action {}", acts.len()),
                });
            }
            if a == acts.len() {
                acts.push(Vec::new());
            }
            acts[a].push(Outcome { next, prob, reward });
        }
        Self::new(discount, start, terminal, transitions)
    }
}

fn parse_tok<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, TabularError> {
    tok.parse().map_err(|_| TabularError::Parse {
        line,
        msg: format!("cannot parse `{tok}`"),
    })
}

fn parse_one<T: std::str::FromStr>(rest: &[&str], line: usize) -> Result<T, TabularError> {
    match rest {
        [tok] => parse_tok(tok, line),
        _ => Err(TabularError::Parse {
            line,
            msg: format!("expected exactly one value, got {}", rest.len()),
        }),
    }
}

fn merge_outcomes(mut outcomes: Vec<Outcome>) -> Vec<Outcome> {
    outcomes.retain(|o| o.prob != 0.0);
    outcomes.sort_by_key(|o| o.next);
    let mut merged: Vec<Outcome> = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match merged.last_mut() {
            Some(last) if last.next == o.next && last.reward == o.reward => last.prob += o.prob,
            _ => merged.push(o),
        }
    }
    merged
}

fn fingerprint(text: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Sampling environment over a [`TabularMdp`].
#[derive(Debug, Clone)]
pub struct TabularEnv {
    name: String,
    mdp: TabularMdp,
    tag: u64,
    reward_bound: f64,
    state_labels: Option<Vec<String>>,
    goals: Option<Vec<bool>>,
}

impl TabularEnv {
    pub fn new(name: impl Into<String>, mdp: TabularMdp) -> Self {
        let tag = fingerprint(&mdp.to_text());
        let reward_bound = mdp.reward_bound();
        Self {
            name: name.into(),
            mdp,
            tag,
            reward_bound,
            state_labels: None,
            goals: None,
        }
    }

    pub(crate) fn with_labels(mut self, labels: Vec<String>) -> Self {
        debug_assert_eq!(labels.len(), self.mdp.n_states());
        self.state_labels = Some(labels);
        self
    }

    /// Restricts success to the listed states.
    pub fn with_goals(mut self, goals: &[usize]) -> Self {
        let mut mask = vec![false; self.mdp.n_states()];
        for &g in goals {
            mask[g] = true;
        }
        self.goals = Some(mask);
        self
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    /// Handle for a state index of this environment.
    pub fn state(&self, index: usize) -> Option<StateHandle> {
        (index < self.mdp.n_states())
            .then(|| StateHandle::new(self.tag, index, self.mdp.is_terminal(index)))
    }

    fn check(&self, state: &StateHandle) -> Result<usize, MdpError> {
        if state.env_fingerprint() != self.tag || state.index() >= self.mdp.n_states() {
            return Err(MdpError::ForeignState(*state));
        }
        Ok(state.index())
    }
}

impl Environment for TabularEnv {
    fn name(&self) -> &str {
        &self.name
    }

    fn initial_state(&self) -> StateHandle {
        StateHandle::new(self.tag, self.mdp.start, self.mdp.is_terminal(self.mdp.start))
    }

    fn discount(&self) -> f64 {
        self.mdp.discount
    }

    fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    fn num_actions(&self, state: &StateHandle) -> Result<usize, MdpError> {
        let s = self.check(state)?;
        Ok(self.mdp.n_actions(s))
    }

    fn sample_transition(
        &self,
        state: &StateHandle,
        action: ActionId,
        rng: &mut SimRng,
    ) -> Result<TransitionSample, MdpError> {
        let s = self.check(state)?;
        if self.mdp.is_terminal(s) {
            return Err(MdpError::TerminalState(*state));
        }
        let legal = self.mdp.n_actions(s);
        if action.0 >= legal {
            return Err(MdpError::IllegalAction {
                state: *state,
                action,
                legal,
            });
        }
        let outcomes = self.mdp.outcomes(s, action.0);
        let chosen = if outcomes.len() == 1 {
            &outcomes[0]
        } else {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            outcomes
                .iter()
                .find(|o| {
                    acc += o.prob;
                    u < acc
                })
                .unwrap_or(&outcomes[outcomes.len() - 1])
        };
        let terminal = self.mdp.is_terminal(chosen.next);
        Ok(TransitionSample {
            next_state: StateHandle::new(self.tag, chosen.next, terminal),
            env_reward: chosen.reward,
            terminal,
        })
    }

    fn tabular(&self) -> Option<&TabularMdp> {
        Some(&self.mdp)
    }

    fn is_goal(&self, state: &StateHandle) -> bool {
        match &self.goals {
            Some(mask) => state.env_fingerprint() == self.tag && mask.get(state.index()) == Some(&true),
            None => state.is_terminal(),
        }
    }

    fn describe_state(&self, state: &StateHandle) -> String {
        match &self.state_labels {
            Some(labels) if state.index() < labels.len() => labels[state.index()].clone(),
            _ => state.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> TabularMdp {
        TabularMdp::new(
            0.9,
            0,
            vec![false, true],
            vec![
                vec![vec![
                    Outcome { next: 0, prob: 0.25, reward: 0.0 },
                    Outcome { next: 1, prob: 0.75, reward: 1.0 },
                ]],
                vec![],
            ],
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mdp = two_state();
        let back = TabularMdp::parse(&mdp.to_text()).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let text = "tabular-mdp 1\nstates 1\ndiscount 0.5\nt 0 0 0 0.5 1\n";
        assert!(matches!(TabularMdp::parse(text), Err(TabularError::Invalid(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "tabular-mdp 1\nstates 2\nbogus 3\n";
        match TabularMdp::parse(text) {
            Err(TabularError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "tabular-mdp 1\nstates 2\ndiscount 0.5\nt 0 1 1 1 0\n";
        assert!(matches!(
            TabularMdp::parse(text),
            Err(TabularError::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn foreign_and_illegal_inputs_are_rejected() {
        let env = TabularEnv::new("a", two_state());
        let mut other_mdp = two_state();
        other_mdp.discount = 0.5;
        let other = TabularEnv::new("b", other_mdp);
        let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(0);
        let foreign = other.initial_state();
        assert!(matches!(
            env.num_actions(&foreign),
            Err(MdpError::ForeignState(_))
        ));
        let s0 = env.initial_state();
        assert!(matches!(
            env.sample_transition(&s0, ActionId(1), &mut rng),
            Err(MdpError::IllegalAction { .. })
        ));
        let s1 = env.state(1).unwrap();
        assert!(matches!(
            env.sample_transition(&s1, ActionId(0), &mut rng),
            Err(MdpError::TerminalState(_))
        ));
        assert!(env.legal_actions(&s1).unwrap().is_empty());
    }
}
