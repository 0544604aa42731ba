mod common;

use std::sync::Arc;

use distmt::linmdp::{FeatureMap, LinearTask};
use distmt::oracle::{optimal_values, policy_value};
use distmt::rng::seeded;
use proptest::prelude::*;

use common::{brute_force_optimum, forward_value, random_policy, random_task};

#[test]
fn seed_three_matches_exhaustive_enumeration() {
    let task = random_task(3, 3, 2, 2, 3);
    let exact = optimal_values(&task).value(0, 0);
    assert!((exact - brute_force_optimum(&task, 0)).abs() < 1e-10);
}

#[test]
fn seed_five_matches_monte_carlo() {
    let task = random_task(5, 4, 3, 3, 4);
    let pi = random_policy(5, 4, 4, 3);
    let exact = policy_value(&task, &pi, 0);
    let n = 200_000;
    let mut rng = seeded(5);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let g = task.sample_episode(0, &pi, &mut rng).unwrap().total_reward();
        sum += g;
        sq += g * g;
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - exact).abs() <= 3.0 * se, "exact {exact}, mc {mean} +- {se}");
}

/// Relabel states by `perm`: new state `perm[s]` behaves like old state `s`.
fn permute_states(task: &LinearTask, perm: &[usize]) -> LinearTask {
    let (ns, na, d) = (task.num_states(), task.num_actions(), task.features().dim());
    let mut rows = vec![vec![0.0; d]; ns * na];
    for s in 0..ns {
        for a in 0..na {
            rows[perm[s] * na + a] = task.features().phi(s, a).to_vec();
        }
    }
    let fm = Arc::new(FeatureMap::new(ns, na, d, rows).unwrap());
    let mu = task
        .mu()
        .iter()
        .map(|mh| {
            let mut out = vec![vec![0.0; d]; ns];
            for (t, row) in mh.iter().enumerate() {
                out[perm[t]] = row.clone();
            }
            out
        })
        .collect();
    LinearTask::new(fm, mu, task.eta().to_vec(), task.label()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn no_policy_beats_the_optimum(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, horizon in 1usize..5) {
        let task = random_task(seed, ns, na, 2, horizon);
        let table = optimal_values(&task);
        let pi = random_policy(seed.wrapping_add(1), horizon, ns, na);
        let v = policy_value(&task, &pi, 0);
        prop_assert!(v <= table.value(0, 0) + 1e-12);
        prop_assert!((v - forward_value(&task, pi.as_table(), 0)).abs() < 1e-10);
        for h in 0..=horizon {
            for s in 0..ns {
                let x = table.value(h, s);
                prop_assert!(x >= 0.0 && x <= (horizon - h) as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn values_are_permutation_equivariant(seed in any::<u64>(), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let task = random_task(seed, 4, 2, 3, 3);
        let moved = permute_states(&task, &perm);
        let (a, b) = (optimal_values(&task), optimal_values(&moved));
        for h in 0..=3 {
            for s in 0..4 {
                prop_assert!((a.value(h, s) - b.value(h, perm[s])).abs() < 1e-12);
            }
        }
    }
}
