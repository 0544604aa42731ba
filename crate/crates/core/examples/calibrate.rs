//! Reproduce the pinned episode budgets.

use distmt::harness::{baseline, calibrate_k, CalibrationBudget};

fn main() -> distmt::Result<()> {
    let b = baseline();
    let pool = b.experiment.build_pool()?;
    for (name, pinned) in [("K1", b.calibration.k1), ("K2", b.calibration.k2)] {
        let budget = CalibrationBudget {
            trials: b.calibration.trials,
            required_rate: b.calibration.required_rate,
            require_optimism: pinned.require_optimism,
            ..Default::default()
        };
        let cal = calibrate_k(&pool, pinned.beta, pinned.target, &budget, b.calibration.seed)?;
        println!("{name}: K = {} at rate {:.2} (pinned {}), history {:?}", cal.k, cal.rate, pinned.k, cal.history);
    }
    Ok(())
}
