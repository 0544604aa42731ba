//! Exact dynamic programming on a tabular task, plus a Monte Carlo check.

use distmt::linmdp::{FeatureMap, LinearTask};
use distmt::oracle::{optimal_values, policy_value};
use distmt::rng::seeded;
use std::sync::Arc;

fn main() -> distmt::Result<()> {
    // two states, two actions, H = 2; action 1 moves to the rewarding state
    let fm = Arc::new(FeatureMap::one_hot_pairs(2, 2)?);
    let stay = [[1.0, 0.0], [0.0, 1.0]];
    let p = vec![vec![vec![stay[0].to_vec(), vec![0.0, 1.0]], vec![stay[1].to_vec(), vec![1.0, 0.0]]]; 2];
    let r = vec![vec![vec![0.0, 0.0], vec![1.0, 0.5]]; 2];
    let task = LinearTask::from_tabular(Arc::clone(&fm), &p, &r, 0)?;

    let table = optimal_values(&task);
    let pi = table.greedy_policy();
    println!("V*_1 = {:?}", table.v[0]);
    println!("greedy policy {:?}", pi.as_table());

    let mut rng = seeded(1);
    let n = 20_000;
    let mut total = 0.0;
    for _ in 0..n {
        total += task.sample_episode(0, &pi, &mut rng)?.total_reward();
    }
    println!("exact {:.4}, Monte Carlo {:.4}", policy_value(&task, &pi, 0), total / n as f64);
    Ok(())
}
