//! Server-side grouping of probe values.

use distmt::coordination::{RoundSubmission, ServerTables};
use distmt::lsvi::PolicyStats;

fn stats() -> PolicyStats {
    PolicyStats {
        theta: vec![vec![0.0]; 3],
        lambda: vec![vec![vec![1.0]]; 3],
        beta: 1.0,
    }
}

fn main() -> distmt::Result<()> {
    let mut server = ServerTables::new(0.5, 4, 3)?;
    let round = [
        RoundSubmission { agent_id: 0, v1_probe: 1.00, solved_stats: Some(stats()) },
        RoundSubmission { agent_id: 1, v1_probe: 1.10, solved_stats: Some(stats()) },
        RoundSubmission { agent_id: 2, v1_probe: 2.00, solved_stats: Some(stats()) },
    ];
    let out = server.group_update(&round)?;
    println!("assignments {:?}, duplicate solves {}", out.assignments, out.duplicate_solves);
    for probe in [0.95, 1.5, 2.2] {
        println!("identify({probe}) = {:?}", server.identify(probe));
    }
    Ok(())
}
