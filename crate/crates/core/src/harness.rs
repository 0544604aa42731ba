//! Experiment plumbing: configuration files, reference formulas, empirical
//! calibration of episode budgets, agent-count sweeps and file output.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmdp::{generate_task_pool, PoolConfig, TaskPool};
use crate::lsvi::{exp_ph, planning};
use crate::protocol::{assign_task, default_rounds, run_simulation, write_header, SimulationConfig, SimulationReport};
use crate::rng::{derive_seed, seeded, stream, Phase};

/// Full description of an experiment, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pool: PoolConfig,
    pub pool_seed: u64,
    pub protocol: SimulationConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.pool.validate()?;
        self.protocol.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One-line JSON, used in file headers.
    pub fn compact_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn build_pool(&self) -> Result<TaskPool> {
        pool_from_seed(&self.pool, self.pool_seed)
    }
}

/// Absolute constants of the reference formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub c_beta1: f64,
    pub c_k1: f64,
    pub c_beta2: f64,
    pub c_k2: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        Self {
            c_beta1: 1.0,
            c_k1: 1.0,
            c_beta2: 1.0,
            c_k2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub dim: usize,
    pub horizon: usize,
    pub num_tasks: usize,
    pub num_agents: usize,
    pub delta: f64,
    pub eps: f64,
    pub c_sep: f64,
}

/// Unrounded reference values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub beta1: f64,
    pub k1: f64,
    pub beta2: f64,
    pub k2: f64,
    pub rounds: f64,
}

fn checked_ln(arg: f64, what: &str) -> Result<f64> {
    if !(arg > 1.0) || !arg.is_finite() {
        return Err(Error::Domain(format!("log argument for {what} is {arg}, must exceed 1")));
    }
    Ok(arg.ln())
}

pub fn theoretical_params(inputs: &TheoryInputs, c: &TheoryConstants) -> Result<TheoryParams> {
    let positive = [
        inputs.delta,
        inputs.eps,
        inputs.c_sep,
        c.c_beta1,
        c.c_k1,
        c.c_beta2,
        c.c_k2,
    ];
    if positive.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("constants, delta, eps and c_sep must be positive".into()));
    }
    if inputs.dim == 0 || inputs.horizon == 0 || inputs.num_tasks == 0 || inputs.num_agents == 0 {
        return Err(Error::Domain("counts must be >= 1".into()));
    }
    let (d, h, m, n) = (
        inputs.dim as f64,
        inputs.horizon as f64,
        inputs.num_tasks as f64,
        inputs.num_agents as f64,
    );
    let dhm = d * h * m;
    let log_sep = checked_ln(dhm / (inputs.delta * inputs.c_sep), "c_sep")?;
    let log_eps = checked_ln(dhm / (inputs.delta * inputs.eps), "eps")?;
    let log_rounds = checked_ln(m / inputs.delta, "rounds")?;
    let dh_poly = d.powi(3) * h.powi(6);
    Ok(TheoryParams {
        beta1: c.c_beta1 * h * d * log_sep.sqrt(),
        k1: c.c_k1 * dh_poly * log_sep / (inputs.c_sep * inputs.c_sep),
        beta2: c.c_beta2 * h * d * log_eps.sqrt(),
        k2: c.c_k2 * dh_poly * log_sep / (inputs.eps * inputs.eps),
        rounds: 6.0 * m * log_rounds / n,
    })
}

/// Search limits for [`calibrate_k`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBudget {
    pub max_k: usize,
    pub trials: usize,
    pub required_rate: f64,
    /// Also require `v1 >= V* - 1e-9` for a trial to count.
    #[serde(default)]
    pub require_optimism: bool,
}

impl Default for CalibrationBudget {
    fn default() -> Self {
        Self {
            max_k: 1 << 16,
            trials: 50,
            required_rate: 0.95,
            require_optimism: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub k: usize,
    pub rate: f64,
    /// `(K, success rate)` for every budget tried.
    pub history: Vec<(usize, f64)>,
}

/// Fraction of trials whose planned `v1` lies within `target` of `V*` (and,
/// with `require_optimism`, is not below it).
///
/// Trials alternate between the two tasks of the hardest pair.
pub fn estimation_rate(
    pool: &TaskPool,
    beta: f64,
    k: usize,
    target: f64,
    require_optimism: bool,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let (a, b) = pool.hardest_pair();
    let hits = (0..trials)
        .into_par_iter()
        .map(|i| {
            let task = if i % 2 == 0 { a } else { b };
            let mut rng = stream(seed, &[Phase::Trial as u64, k as u64, i as u64]);
            let data = exp_ph(&pool.env(task), &pool.feature_map, beta, k, &mut rng)?;
            let v1 = planning(&data, &pool.feature_map, beta)?.v1;
            let err = v1 - pool.optimal_values[task];
            Ok((err.abs() <= target && (!require_optimism || err >= -1e-9)) as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / trials as f64)
}

/// Smallest power-of-two `K` meeting the estimation target.
pub fn calibrate_k(pool: &TaskPool, beta: f64, target: f64, budget: &CalibrationBudget, seed: u64) -> Result<Calibration> {
    if !(target > 0.0) || budget.trials == 0 || budget.max_k == 0 {
        return Err(Error::Config("calibration needs target > 0, trials >= 1, max_k >= 1".into()));
    }
    let mut history = Vec::new();
    let mut k = 1;
    while k <= budget.max_k {
        let rate = estimation_rate(pool, beta, k, target, budget.require_optimism, budget.trials, seed)?;
        history.push((k, rate));
        if rate >= budget.required_rate {
            return Ok(Calibration { k, rate, history });
        }
        k *= 2;
    }
    let (best_k, best_rate) = history
        .iter()
        .copied()
        .fold((0, f64::NEG_INFINITY), |best, h| if h.1 > best.1 { h } else { best });
    Err(Error::Calibration { best_k, best_rate })
}

/// Fraction of trials with `v1 >= V* - 1e-9`. Trial `i` runs on task `i mod M`.
pub fn optimism_rate(pool: &TaskPool, beta: f64, k: usize, trials: usize, seed: u64) -> Result<f64> {
    let hits = (0..trials)
        .into_par_iter()
        .map(|i| {
            let task = i % pool.num_tasks();
            let mut rng = stream(seed, &[Phase::Trial as u64, k as u64, i as u64]);
            let data = exp_ph(&pool.env(task), &pool.feature_map, beta, k, &mut rng)?;
            let v1 = planning(&data, &pool.feature_map, beta)?.v1;
            Ok((v1 >= pool.optimal_values[task] - 1e-9) as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / trials as f64)
}

/// Monte Carlo estimate of the probability that every task is assigned at
/// least once in `rounds` rounds (default round count when `None`).
pub fn coverage_probability(
    num_tasks: usize,
    num_agents: usize,
    delta: f64,
    rounds: Option<usize>,
    trials: usize,
    seed: u64,
) -> f64 {
    let rounds = rounds.unwrap_or_else(|| default_rounds(num_tasks, num_agents, delta));
    let covered = (0..trials)
        .into_par_iter()
        .filter(|&i| {
            let trial_seed = derive_seed(seed, &[i as u64]);
            let mut seen = vec![false; num_tasks];
            let mut left = num_tasks;
            for round in 1..=rounds {
                for agent in 0..num_agents {
                    let m = assign_task(trial_seed, agent, round, num_tasks);
                    if !seen[m] {
                        seen[m] = true;
                        left -= 1;
                    }
                }
                if left == 0 {
                    return true;
                }
            }
            false
        })
        .count();
    covered as f64 / trials as f64
}

/// One `(N, seed)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub num_agents: usize,
    pub seed: u64,
    pub mean_episodes_per_agent: f64,
    pub mean_gap: f64,
    pub duplicate_solves: usize,
    pub anomalies: usize,
    pub mean_learned_episodes_per_agent: f64,
}

pub const SWEEP_COLUMNS: [&str; 7] = [
    "N",
    "seed",
    "mean_episodes_per_agent",
    "mean_gap",
    "duplicate_solves",
    "anomalies",
    "mean_learned_episodes_per_agent",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepRow {
    pub fn from_report(report: &SimulationReport) -> Self {
        let s = &report.summary;
        let n = s.agents.len() as f64;
        Self {
            num_agents: s.num_agents,
            seed: s.seed,
            mean_episodes_per_agent: s.agents.iter().map(|a| a.total_episodes as f64).sum::<f64>() / n,
            mean_gap: s.mean_gap,
            duplicate_solves: s.duplicate_solves,
            anomalies: s.anomalies.total(),
            mean_learned_episodes_per_agent: s.agents.iter().map(|a| a.learn_episodes as f64).sum::<f64>() / n,
        }
    }
}

/// Run every `(N, seed)` cell on one fixed pool.
pub fn sweep_agents(pool: &TaskPool, base: &SimulationConfig, n_values: &[usize], seeds: &[u64]) -> Result<SweepReport> {
    if n_values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one N and one seed".into()));
    }
    let cells: Vec<(usize, u64)> = n_values
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(n, seed)| {
            let cfg = SimulationConfig {
                num_agents: n,
                ..base.clone()
            };
            run_simulation(pool, &cfg, seed).map(|r| SweepRow::from_report(&r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}

impl SweepReport {
    /// Mean of `field` over the rows with `N = n`.
    pub fn mean_for(&self, n: usize, field: impl Fn(&SweepRow) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter(|r| r.num_agents == n).map(field).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: &[(&str, String)]) -> Result<()> {
        write_header(&mut out, header)?;
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(SWEEP_COLUMNS)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().ne(SWEEP_COLUMNS) {
            return Err(Error::Config(format!("unexpected sweep columns {headers:?}")));
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// Header lines carried by every emitted file. `output_dir` is omitted.
pub fn file_header(config: &ExperimentConfig, seed: Option<u64>) -> Result<Vec<(&'static str, String)>> {
    let mut h = vec![(
        "config",
        ExperimentConfig {
            output_dir: None,
            ..config.clone()
        }
        .compact_json()?,
    )];
    if let Some(s) = seed {
        h.push(("seed", s.to_string()));
    }
    Ok(h)
}

/// Paths written by [`write_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

/// Write `run_seed<seed>.csv` and `run_seed<seed>_summary.json` into `dir`.
pub fn write_run(dir: &FsPath, config: &ExperimentConfig, report: &SimulationReport) -> Result<RunFiles> {
    fs::create_dir_all(dir)?;
    let seed = report.summary.seed;
    let files = RunFiles {
        csv: dir.join(format!("run_seed{seed}.csv")),
        summary: dir.join(format!("run_seed{seed}_summary.json")),
    };
    report.write_csv(fs::File::create(&files.csv)?, &file_header(config, Some(seed))?)?;
    fs::write(&files.summary, report.summary_json()? + "\n")?;
    Ok(files)
}

pub fn write_sweep(path: &FsPath, config: &ExperimentConfig, report: &SweepReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    report.write_csv(fs::File::create(path)?, &file_header(config, None)?)
}

/// One pinned calibration result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinnedK {
    pub beta: f64,
    pub target: f64,
    pub require_optimism: bool,
    pub k: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinnedCalibration {
    pub seed: u64,
    pub trials: usize,
    pub required_rate: f64,
    pub k1: PinnedK,
    pub k2: PinnedK,
}

/// The checked-in experiment defaults and the calibration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub experiment: ExperimentConfig,
    pub calibration: PinnedCalibration,
}

pub const BASELINE_JSON: &str = include_str!("../baseline.json");

pub fn baseline() -> Baseline {
    serde_json::from_str(BASELINE_JSON).expect("baseline.json is valid")
}

/// Pool used by tests and examples: `|S|=5, |A|=3, d=3, H=4, M=6`.
pub fn standard_pool_config() -> PoolConfig {
    PoolConfig {
        num_states: 5,
        num_actions: 3,
        dim: 3,
        horizon: 4,
        num_tasks: 6,
        c_sep: 0.5,
        initial_state: 0,
        max_attempts: 10_000,
    }
}

/// Convenience for one-off pools outside an [`ExperimentConfig`].
pub fn pool_from_seed(config: &PoolConfig, seed: u64) -> Result<TaskPool> {
    generate_task_pool(config, &mut seeded(seed))
}
