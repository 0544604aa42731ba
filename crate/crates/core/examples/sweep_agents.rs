//! Per-agent cost as the number of agents grows.

use distmt::harness::{baseline, sweep_agents};

fn main() -> distmt::Result<()> {
    let cfg = baseline().experiment;
    let pool = cfg.build_pool()?;
    let ns = [1, 2, 3, 6];
    let report = sweep_agents(&pool, &cfg.protocol, &ns, &[1, 2, 3])?;
    for n in ns {
        println!(
            "N = {n}: episodes/agent {:.0}, learned episodes/agent {:.1}, mean gap {:.4}",
            report.mean_for(n, |r| r.mean_episodes_per_agent).unwrap(),
            report.mean_for(n, |r| r.mean_learned_episodes_per_agent).unwrap(),
            report.mean_for(n, |r| r.mean_gap).unwrap(),
        );
    }
    report.write_csv(std::io::stdout().lock(), &[])?;
    Ok(())
}
