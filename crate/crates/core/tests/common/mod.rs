#![allow(dead_code)]

use std::sync::Arc;

use distmt::linmdp::{FeatureMap, LinearTask, Policy};
use distmt::rng::seeded;

pub fn random_task(seed: u64, ns: usize, na: usize, d: usize, horizon: usize) -> LinearTask {
    let mut rng = seeded(seed);
    let fm = Arc::new(FeatureMap::random_simplex(ns, na, d, &mut rng).unwrap());
    LinearTask::random(fm, horizon, 1.0, 0, &mut rng).unwrap()
}

/// `P_h(s'|s,a)` from the raw parameters, without the task's cache.
pub fn dot_prob(task: &LinearTask, h: usize, s: usize, a: usize, next: usize) -> f64 {
    let phi = task.features().phi(s, a);
    task.mu()[h][next].iter().zip(phi).map(|(m, p)| m * p).sum()
}

pub fn dot_reward(task: &LinearTask, h: usize, s: usize, a: usize) -> f64 {
    let phi = task.features().phi(s, a);
    task.eta()[h].iter().zip(phi).map(|(e, p)| e * p).sum()
}

/// Value of a deterministic Markov policy by forward propagation of the
/// state distribution.
pub fn forward_value(task: &LinearTask, table: &[Vec<usize>], s0: usize) -> f64 {
    let ns = task.num_states();
    let mut dist = vec![0.0; ns];
    dist[s0] = 1.0;
    let mut total = 0.0;
    for (h, row) in table.iter().enumerate() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if dist[s] == 0.0 {
                continue;
            }
            let a = row[s];
            total += dist[s] * dot_reward(task, h, s, a);
            for (t, slot) in next.iter_mut().enumerate() {
                *slot += dist[s] * dot_prob(task, h, s, a, t).max(0.0);
            }
        }
        dist = next;
    }
    total
}

/// Best value over all `A^(S H)` deterministic Markov policies.
pub fn brute_force_optimum(task: &LinearTask, s0: usize) -> f64 {
    let (ns, na, horizon) = (task.num_states(), task.num_actions(), task.horizon());
    let cells = ns * horizon;
    let count = na.pow(cells as u32);
    let mut best = f64::NEG_INFINITY;
    for code in 0..count {
        let mut c = code;
        let table: Vec<Vec<usize>> = (0..horizon)
            .map(|_| {
                (0..ns)
                    .map(|_| {
                        let a = c % na;
                        c /= na;
                        a
                    })
                    .collect()
            })
            .collect();
        best = best.max(forward_value(task, &table, s0));
    }
    best
}

pub fn random_policy(seed: u64, horizon: usize, ns: usize, na: usize) -> Policy {
    use rand::Rng;
    let mut rng = seeded(seed);
    Policy::new((0..horizon).map(|_| (0..ns).map(|_| rng.random_range(0..na)).collect()).collect())
}
