//! Reference values of the exploration widths and episode budgets.

use distmt::harness::{theoretical_params, TheoryConstants, TheoryInputs};

fn main() -> distmt::Result<()> {
    let inputs = TheoryInputs { dim: 3, horizon: 4, num_tasks: 6, num_agents: 3, delta: 0.1, eps: 0.5, c_sep: 0.5 };
    let p = theoretical_params(&inputs, &TheoryConstants::default())?;
    println!("beta1 {:.3}  K1 {:.3e}", p.beta1, p.k1);
    println!("beta2 {:.3}  K2 {:.3e}", p.beta2, p.k2);
    println!("rounds {:.2} -> {}", p.rounds, p.rounds.ceil());
    Ok(())
}
