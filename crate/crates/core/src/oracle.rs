//! Exact solvers for tabular MDPs, used as ground truth by the tests and
//! the `solve` command.

use thiserror::Error;

use crate::mdp::{ActionId, Environment};
use crate::tabular::TabularMdp;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Enumeration refuses to walk more paths than this.
pub const MAX_ENUMERATED_PATHS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("tolerance must be finite and > 0, got {0}")]
    InvalidTolerance(f64),
    #[error("value iteration did not converge in {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("shaping table has {got} entries, expected {expected}")]
    ShapingLength { expected: usize, got: usize },
    #[error("state {0} out of range")]
    BadState(usize),
    #[error("enumeration would exceed {limit} paths")]
    TooManyPaths { limit: u64 },
    #[error("environment {0} has no tabular form")]
    NotTabular(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Indexed `[state][action]`; empty rows for terminal states.
    pub q_star: Vec<Vec<f64>>,
    pub v_star: Vec<f64>,
    /// `None` for terminal states.
    pub optimal_action: Vec<Option<ActionId>>,
    pub iterations: usize,
    pub residual: f64,
}

impl OracleSolution {
    /// Tab-separated `state V* action Q*(s,0) Q*(s,1) ...` rows.
    pub fn to_table(&self) -> String {
        let mut out = String::from("state\tv_star\toptimal_action\tq_star\n");
        for (s, v) in self.v_star.iter().enumerate() {
            let action = self.optimal_action[s].map_or_else(|| "-".to_string(), |a| a.to_string());
            let qs: Vec<String> = self.q_star[s].iter().map(|q| format!("{q:.17e}")).collect();
            out.push_str(&format!("{s}\t{v:.17e}\t{action}\t{}\n", qs.join(",")));
        }
        out
    }
}

/// Jacobi value iteration on the unshaped MDP:
/// `Q(s,a) = Σ P(s'|s,a) (R(s,a,s') + γ V(s'))`, `V = 0` on terminals.
pub fn value_iteration(
    mdp: &TabularMdp,
    tolerance: f64,
    max_iter: usize,
) -> Result<OracleSolution, OracleError> {
    solve_kernel(mdp, None, tolerance, max_iter)
}

/// Value iteration with a per-state bonus added to every action value:
/// `Q(s,a) = R_c(s) + Σ P(s'|s,a) (R(s,a,s') + γ V(s'))`.
pub fn shaped_value_iteration(
    mdp: &TabularMdp,
    rc_table: &[f64],
    tolerance: f64,
    max_iter: usize,
) -> Result<OracleSolution, OracleError> {
    if rc_table.len() != mdp.n_states() {
        return Err(OracleError::ShapingLength {
            expected: mdp.n_states(),
            got: rc_table.len(),
        });
    }
    solve_kernel(mdp, Some(rc_table), tolerance, max_iter)
}

fn backup(mdp: &TabularMdp, rc: Option<&[f64]>, v: &[f64], s: usize, a: usize) -> f64 {
    let gamma = mdp.discount();
    let expected: f64 = mdp
        .outcomes(s, a)
        .iter()
        .map(|o| o.prob * (o.reward + gamma * v[o.next]))
        .sum();
    match rc {
        Some(rc) => rc[s] + expected,
        None => expected,
    }
}

fn solve_kernel(
    mdp: &TabularMdp,
    rc: Option<&[f64]>,
    tolerance: f64,
    max_iter: usize,
) -> Result<OracleSolution, OracleError> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(OracleError::InvalidTolerance(tolerance));
    }
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        residual = 0.0;
        for s in 0..n {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                (0..mdp.n_actions(s))
                    .map(|a| backup(mdp, rc, &v, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            residual = f64::max(residual, (next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= tolerance {
            break;
        }
    }
    if !(residual <= tolerance) {
        return Err(OracleError::NonConvergence {
            iterations,
            residual,
        });
    }
    let q_star: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            if mdp.is_terminal(s) {
                Vec::new()
            } else {
                (0..mdp.n_actions(s)).map(|a| backup(mdp, rc, &v, s, a)).collect()
            }
        })
        .collect();
    let v_star: Vec<f64> = q_star
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .map(|m| if m == f64::NEG_INFINITY { 0.0 } else { m })
        .collect();
    let optimal_action = q_star
        .iter()
        .map(|row| {
            let mut best: Option<usize> = None;
            for (a, q) in row.iter().enumerate() {
                if best.is_none_or(|b| *q > row[b]) {
                    best = Some(a);
                }
            }
            best.map(ActionId)
        })
        .collect();
    Ok(OracleSolution {
        q_star,
        v_star,
        optimal_action,
        iterations,
        residual,
    })
}

/// Exact expected discounted return of the uniform random policy from
/// `start` over at most `horizon` steps (stopping early at terminals).
pub fn enumerate_rollout_mean(mdp: &TabularMdp, start: usize, horizon: usize) -> Result<f64, OracleError> {
    if start >= mdp.n_states() {
        return Err(OracleError::BadState(start));
    }
    let mut paths = 0u64;
    walk(mdp, start, horizon, &mut paths)
}

fn walk(mdp: &TabularMdp, s: usize, remaining: usize, paths: &mut u64) -> Result<f64, OracleError> {
    if remaining == 0 || mdp.is_terminal(s) {
        *paths += 1;
        if *paths > MAX_ENUMERATED_PATHS {
            return Err(OracleError::TooManyPaths {
                limit: MAX_ENUMERATED_PATHS,
            });
        }
        return Ok(0.0);
    }
    let n_actions = mdp.n_actions(s);
    let gamma = mdp.discount();
    let mut total = 0.0;
    for a in 0..n_actions {
        for o in mdp.outcomes(s, a) {
            let tail = walk(mdp, o.next, remaining - 1, paths)?;
            total += o.prob * (o.reward + gamma * tail);
        }
    }
    Ok(total / n_actions as f64)
}

/// Solves the environment's tabular form with default tolerances.
pub fn solve<E: Environment + ?Sized>(env: &E) -> Result<OracleSolution, OracleError> {
    let mdp = env
        .tabular()
        .ok_or_else(|| OracleError::NotTabular(env.name().to_string()))?;
    value_iteration(mdp, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_chain, StochChainSpec, RIGHT};
    use crate::tabular::Outcome;

    fn single_loop(reward: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(
            gamma,
            0,
            vec![false],
            vec![vec![vec![Outcome {
                next: 0,
                prob: 1.0,
                reward,
            }]]],
        )
        .unwrap()
    }

    #[test]
    fn geometric_series() {
        let sol = value_iteration(&single_loop(1.0, 0.5), 1e-12, 1000).unwrap();
        assert!((sol.v_star[0] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn deterministic_chain_values() {
        let env = make_chain(&StochChainSpec::new(3, 0.0)).unwrap();
        let sol = value_iteration(env.mdp(), 1e-9, DEFAULT_MAX_ITER).unwrap();
        assert!((sol.q_star[1][RIGHT] - 1.0).abs() < 1e-9);
        assert!((sol.q_star[0][RIGHT] - 0.95).abs() < 1e-9);
        assert_eq!(sol.optimal_action[0], Some(ActionId(RIGHT)));
        assert_eq!(sol.optimal_action[2], None);
        assert_eq!(sol.v_star[2], 0.0);
    }

    #[test]
    fn undiscounted_episodic_converges_but_loop_does_not() {
        let env = make_chain(&StochChainSpec::new(4, 0.1).with_discount(1.0)).unwrap();
        let sol = value_iteration(env.mdp(), 1e-9, DEFAULT_MAX_ITER).unwrap();
        assert!((sol.v_star[0] - 1.0).abs() < 1e-6);
        assert!(matches!(
            value_iteration(&single_loop(1.0, 1.0), 1e-9, 1000),
            Err(OracleError::NonConvergence { iterations: 1000, .. })
        ));
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(matches!(
            value_iteration(&single_loop(1.0, 0.5), 0.0, 10),
            Err(OracleError::InvalidTolerance(_))
        ));
    }

    #[test]
    fn fixed_point_and_v_is_max_q() {
        let env = make_chain(&StochChainSpec::new(8, 0.2)).unwrap();
        let mdp = env.mdp();
        let sol = value_iteration(mdp, 1e-10, DEFAULT_MAX_ITER).unwrap();
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            let max = sol.q_star[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(sol.v_star[s], max);
            for a in 0..mdp.n_actions(s) {
                let again = backup(mdp, None, &sol.v_star, s, a);
                assert!((again - sol.q_star[s][a]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn enumeration_trivial_cases() {
        let env = make_chain(&StochChainSpec::new(3, 0.0)).unwrap();
        assert_eq!(enumerate_rollout_mean(env.mdp(), 1, 0).unwrap(), 0.0);
        // left gives 0, right gives 1
        assert_eq!(enumerate_rollout_mean(env.mdp(), 1, 1).unwrap(), 0.5);
        assert!(matches!(
            enumerate_rollout_mean(env.mdp(), 9, 1),
            Err(OracleError::BadState(9))
        ));
    }

    #[test]
    fn enumeration_refuses_huge_trees() {
        let env = make_chain(&StochChainSpec::new(30, 0.3)).unwrap();
        assert!(matches!(
            enumerate_rollout_mean(env.mdp(), 0, 25),
            Err(OracleError::TooManyPaths { .. })
        ));
    }

    #[test]
    fn solution_is_deterministic() {
        let env = make_chain(&StochChainSpec::new(8, 0.2)).unwrap();
        let a = value_iteration(env.mdp(), 1e-9, DEFAULT_MAX_ITER).unwrap();
        let b = value_iteration(env.mdp(), 1e-9, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(a.to_table(), b.to_table());
        assert_eq!(a.iterations, b.iterations);
    }
}
