//! Reward-free exploration followed by planning on one task.

use distmt::harness::{pool_from_seed, standard_pool_config};
use distmt::lsvi::{exp_ph, greedy_policy, planning};
use distmt::oracle::optimality_gap;
use distmt::rng::seeded;

fn main() -> distmt::Result<()> {
    let pool = pool_from_seed(&standard_pool_config(), 2024)?;
    let task = 1;
    let mut rng = seeded(3);
    for k in [64, 256, 1024, 4096] {
        let data = exp_ph(&pool.env(task), &pool.feature_map, 0.3, k, &mut rng)?;
        let plan = planning(&data, &pool.feature_map, 0.3)?;
        let pi = greedy_policy(&plan.stats, &pool.feature_map)?;
        println!(
            "K = {k:5}: v1 = {:.4} (V* = {:.4}), policy gap {:.4}",
            plan.v1,
            pool.optimal_values[task],
            optimality_gap(&pool.tasks[task], &pi, pool.initial_state)
        );
    }
    Ok(())
}
