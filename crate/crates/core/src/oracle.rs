//! Exact finite-horizon dynamic programming over a [`LinearTask`].
//!
//! Sums run over the full finite state space, so these values are the ground
//! truth every learned quantity is checked against.

use crate::linmdp::{LinearTask, Policy};

/// Optimal values and action values.
///
/// `v[h][s]` for `h in 0..=H` with `v[H] = 0`; `q[h][s][a]` for `h in 0..H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub v: Vec<Vec<f64>>,
    pub q: Vec<Vec<Vec<f64>>>,
}

impl ValueTable {
    pub fn value(&self, h: usize, s: usize) -> f64 {
        self.v[h][s]
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// Greedy policy with respect to `q`, ties to the lowest action index.
    pub fn greedy_policy(&self) -> Policy {
        Policy::new(
            self.q
                .iter()
                .map(|qh| qh.iter().map(|row| argmax(row)).collect())
                .collect(),
        )
    }
}

/// First index of the maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in values.iter().enumerate().skip(1) {
        if x > values[best] {
            best = i;
        }
    }
    best
}

fn expected_next(task: &LinearTask, h: usize, s: usize, a: usize, next: &[f64]) -> f64 {
    task.probs(h, s, a).iter().zip(next).map(|(p, v)| p * v).sum()
}

/// Backward induction on the Bellman optimality equation.
pub fn optimal_values(task: &LinearTask) -> ValueTable {
    let (horizon, ns, na) = (task.horizon(), task.num_states(), task.num_actions());
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    let mut q = vec![vec![vec![0.0; na]; ns]; horizon];
    for h in (0..horizon).rev() {
        for s in 0..ns {
            for a in 0..na {
                q[h][s][a] = task.reward(h, s, a) + expected_next(task, h, s, a, &v[h + 1]);
            }
            v[h][s] = q[h][s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    ValueTable { v, q }
}

/// `V^pi_h(s)` for all `h in 0..=H` and `s`.
pub fn policy_values(task: &LinearTask, policy: &Policy) -> Vec<Vec<f64>> {
    let (horizon, ns) = (task.horizon(), task.num_states());
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    for h in (0..horizon).rev() {
        for s in 0..ns {
            let a = policy.action(h, s);
            v[h][s] = task.reward(h, s, a) + expected_next(task, h, s, a, &v[h + 1]);
        }
    }
    v
}

/// Expected return of `policy` from `s0`.
pub fn policy_value(task: &LinearTask, policy: &Policy, s0: usize) -> f64 {
    policy_values(task, policy)[0][s0]
}

/// `V*_1(s0) - V^pi_1(s0)`.
pub fn optimality_gap(task: &LinearTask, policy: &Policy, s0: usize) -> f64 {
    optimal_values(task).value(0, s0) - policy_value(task, policy, s0)
}

pub fn is_eps_optimal(task: &LinearTask, policy: &Policy, s0: usize, eps: f64) -> bool {
    optimality_gap(task, policy, s0) <= eps
}
