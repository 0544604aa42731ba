//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use distmt::harness::{baseline, coverage_probability, optimism_rate};
use distmt::oracle::optimal_values;
use distmt::protocol::{default_rounds, run_simulation, Path, SimulationReport};

use common::{brute_force_optimum, dot_prob, dot_reward, random_task};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = took <= limit;
    let pass = out.pass && in_time;
    println!(
        "criterion {id} [{name}]: {} ({}; {:.1}s of {}s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn linear_mdp_validity() -> Outcome {
    let mut bad = 0;
    for i in 0..1000u64 {
        let d = 1 + (i % 4) as usize;
        let ns = 2 + ((i / 4) % 5) as usize;
        let na = 1 + ((i / 20) % 3) as usize;
        let horizon = 1 + ((i / 60) % 4) as usize;
        let task = random_task(10_000 + i, ns, na, d, horizon);
        let sqrt_d = (d as f64).sqrt() + 1e-12;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut ok = true;
        for s in 0..ns {
            for a in 0..na {
                ok &= norm(task.features().phi(s, a)) <= 1.0 + 1e-12;
            }
        }
        for h in 0..horizon {
            ok &= norm(&task.eta()[h]) <= sqrt_d;
            for t in 0..ns {
                ok &= norm(&task.mu()[h][t]) <= sqrt_d;
            }
            for s in 0..ns {
                for a in 0..na {
                    let sum: f64 = (0..ns).map(|t| dot_prob(&task, h, s, a, t)).sum();
                    let min = (0..ns).map(|t| dot_prob(&task, h, s, a, t)).fold(f64::INFINITY, f64::min);
                    let r = dot_reward(&task, h, s, a);
                    ok &= (sum - 1.0).abs() <= 1e-9 && min >= -1e-12 && (0.0..=1.0).contains(&r);
                }
            }
        }
        bad += (!ok) as usize;
    }
    Outcome {
        pass: bad == 0,
        detail: format!("{bad} of 1000 tasks invalid"),
    }
}

fn oracle_correctness() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let ns = 1 + (i % 3) as usize;
        let na = 1 + ((i / 3) % 2) as usize;
        let horizon = 1 + ((i / 6) % 3) as usize;
        let task = random_task(20_000 + i, ns, na, 2, horizon);
        for s0 in 0..ns {
            let diff = (optimal_values(&task).value(0, s0) - brute_force_optimum(&task, s0)).abs();
            worst = worst.max(diff);
        }
    }
    Outcome {
        pass: worst < 1e-10,
        detail: format!("max |DP - enumeration| = {worst:.2e}"),
    }
}

fn optimism() -> Outcome {
    let b = baseline();
    let pool = b.experiment.build_pool().unwrap();
    let p = b.experiment.protocol.params;
    let rate = optimism_rate(&pool, p.beta1, p.k1, 200, 2025).unwrap();
    Outcome {
        pass: rate >= 0.95,
        detail: format!("v1 >= V* - 1e-9 in {:.1}% of 200 trials (K = {}, beta = {})", rate * 100.0, p.k1, p.beta1),
    }
}

fn simulations() -> Vec<SimulationReport> {
    let b = baseline();
    let pool = b.experiment.build_pool().unwrap();
    let mut cfg = b.experiment.protocol.clone();
    cfg.num_agents = 3;
    cfg.eps = 0.5;
    (1..=20).map(|seed| run_simulation(&pool, &cfg, seed).unwrap()).collect()
}

fn eps_optimality(runs: &[SimulationReport]) -> Outcome {
    let gaps: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.outcomes.iter().filter(|o| o.path == Path::Learned).map(|o| o.policy_gap))
        .collect();
    let failures = gaps.iter().filter(|&&g| g > 0.5).count();
    let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rate = failures as f64 / gaps.len() as f64;
    Outcome {
        pass: rate <= 0.05,
        detail: format!("{failures} of {} learned policies exceed eps = 0.5, worst gap {worst:.4}", gaps.len()),
    }
}

fn identification(runs: &[SimulationReport]) -> Outcome {
    let diagonal = runs.iter().filter(|r| r.summary.confusion_is_diagonal).count();
    let unexplained = runs
        .iter()
        .filter(|r| !r.summary.confusion_is_diagonal && r.summary.anomalies.total() == 0)
        .count();
    Outcome {
        pass: diagonal as f64 >= 0.95 * runs.len() as f64,
        detail: format!(
            "{diagonal} of {} confusion matrices diagonal, {unexplained} off-diagonal runs without anomalies",
            runs.len()
        ),
    }
}

fn coverage() -> Outcome {
    let p = coverage_probability(10, 4, 0.1, None, 10_000, 77);
    Outcome {
        pass: p >= 0.9,
        detail: format!("all tasks assigned in {:.2}% of 10000 trials, T = {}", p * 100.0, default_rounds(10, 4, 0.1)),
    }
}

fn episode_bound(runs: &[SimulationReport]) -> Outcome {
    let b = baseline();
    let pool = b.experiment.build_pool().unwrap();
    let ns = [1usize, 2, 3, 6];
    let mut learned = Vec::new();
    let mut violations = 0;
    let mut agents = 0;
    let mut count = |r: &SimulationReport| {
        agents += r.summary.agents.len();
        r.summary
            .agents
            .iter()
            .filter(|a| a.total_episodes > r.summary.episode_bound)
            .count()
    };
    for r in runs {
        violations += count(r);
    }
    for &n in &ns {
        let mut cfg = b.experiment.protocol.clone();
        cfg.num_agents = n;
        let mut total = 0.0;
        for seed in 1..=20 {
            let r = run_simulation(&pool, &cfg, seed).unwrap();
            violations += count(&r);
            total += r.summary.agents.iter().map(|a| a.learn_episodes as f64).sum::<f64>() / n as f64;
        }
        learned.push(total / 20.0);
    }
    let ratio = learned[3] / learned[0];
    let per_n: Vec<String> = ns.iter().zip(&learned).map(|(n, l)| format!("N={n}: {l:.1}")).collect();
    Outcome {
        pass: violations == 0 && (1.0 / 12.0..=1.0 / 3.0).contains(&ratio),
        detail: format!(
            "{violations} of {agents} agents over T(K1+K2); learned episodes per agent {}; N=6/N=1 ratio {ratio:.4}",
            per_n.join(", ")
        ),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, extra: &[&str]| -> Vec<u8> {
        let out_dir = dir.path().join(sub);
        let status = Command::new(env!("CARGO_BIN_EXE_distmt"))
            .args(["run", "--seeds", "11", "--output-dir"])
            .arg(&out_dir)
            .args(extra)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out_dir.join("run_seed11.csv")).unwrap()
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let seq = run("c", &["--sequential"]);
    let header_len = |bytes: &[u8]| bytes.split(|&c| c == b'\n').take(2).map(|l| l.len() + 1).sum::<usize>();
    let same_rows = a[header_len(&a)..] == seq[header_len(&seq)..];

    let cfg = baseline().experiment;
    let pool = cfg.build_pool().unwrap();
    let mut sim = cfg.protocol.clone();
    sim.parallel = true;
    let par = run_simulation(&pool, &sim, 12).unwrap();
    sim.parallel = false;
    let ser = run_simulation(&pool, &sim, 12).unwrap();
    let same_report = par.outcomes == ser.outcomes && par.summary == ser.summary && par.server == ser.server;
    Outcome {
        pass: a == b && same_rows && same_report,
        detail: format!(
            "repeat CSVs byte-identical: {}, parallel vs sequential CSV rows: {}, reports: {}",
            a == b,
            same_rows,
            same_report
        ),
    }
}

fn main() -> ExitCode {
    let mut all = true;
    all &= check(1, "linear MDP validity", Duration::from_secs(30), linear_mdp_validity);
    all &= check(2, "oracle correctness", Duration::from_secs(60), oracle_correctness);
    all &= check(3, "optimism", Duration::from_secs(300), optimism);

    let mut runs = Vec::new();
    all &= check(4, "eps-optimality", Duration::from_secs(600), || {
        runs = simulations();
        eps_optimality(&runs)
    });
    // runtime counted in criterion 4
    all &= check(5, "identification", Duration::from_secs(600), || identification(&runs));
    all &= check(6, "coverage", Duration::from_secs(10), coverage);
    all &= check(7, "episode bound and 1/N scaling", Duration::from_secs(1200), || episode_bound(&runs));
    all &= check(8, "determinism", Duration::from_secs(120), determinism);
    println!("acceptance: {}", if all { "all criteria PASS" } else { "some criteria FAIL" });
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
