//! Generate the standard separated pool and print its optimal values.

use distmt::harness::{pool_from_seed, standard_pool_config};

fn main() -> distmt::Result<()> {
    let pool = pool_from_seed(&standard_pool_config(), 2024)?;
    for (m, v) in pool.optimal_values.iter().enumerate() {
        println!("task {m}: V*_1(s0) = {v:.4}");
    }
    println!("min separation {:.4}, hardest pair {:?}", pool.min_separation(), pool.hardest_pair());
    Ok(())
}
