use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use distmt::harness::{
    baseline, calibrate_k, sweep_agents, theoretical_params, write_run, write_sweep, CalibrationBudget,
    ExperimentConfig, TheoryConstants, TheoryInputs,
};
use distmt::linmdp::TaskPool;
use distmt::protocol::run_simulation;
use distmt::Result;

#[derive(Parser)]
#[command(name = "distmt", version, about = "Distributed multi-task LSVI experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a separated task pool and write it as JSON.
    GenPool {
        #[command(flatten)]
        common: Overrides,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the protocol once per seed; writes a CSV and a JSON summary per seed.
    Run {
        #[command(flatten)]
        common: Overrides,
        /// Load the pool from a gen-pool file instead of generating it.
        #[arg(long)]
        pool_file: Option<PathBuf>,
    },
    /// Sweep the number of agents over a fixed pool.
    Sweep {
        #[command(flatten)]
        common: Overrides,
        /// Comma-separated agent counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,6")]
        n_values: Vec<usize>,
        /// Output CSV (default: <output_dir>/sweep.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Doubling search for the smallest episode budget meeting an accuracy target.
    Calibrate {
        #[command(flatten)]
        common: Overrides,
        /// Exploration width (default: beta1 of the config).
        #[arg(long)]
        beta: Option<f64>,
        /// Accuracy target on |v1 - V*| (default: c_sep / 8).
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, default_value_t = 1 << 16)]
        max_k: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0.95)]
        required_rate: f64,
        #[arg(long, default_value_t = 7)]
        calibration_seed: u64,
        /// Count a trial only if the estimate is also optimistic.
        #[arg(long)]
        require_optimism: bool,
    },
    /// Print the reference formulas for beta, K and T.
    Theory {
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value_t = 1.0)]
        c_beta1: f64,
        #[arg(long, default_value_t = 1.0)]
        c_k1: f64,
        #[arg(long, default_value_t = 1.0)]
        c_beta2: f64,
        #[arg(long, default_value_t = 1.0)]
        c_k2: f64,
    },
}

/// Config file plus per-field overrides.
#[derive(Args)]
struct Overrides {
    /// JSON experiment config (defaults to the pinned baseline).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    c_sep: Option<f64>,
    #[arg(long)]
    initial_state: Option<usize>,
    #[arg(long)]
    pool_seed: Option<u64>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Comma-separated master seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Run agents one after another instead of on the thread pool.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                serde_json::from_str(&text)?
            }
            None => baseline().experiment,
        };
        let p = &mut cfg.pool;
        set(&mut p.num_states, self.states);
        set(&mut p.num_actions, self.actions);
        set(&mut p.dim, self.dim);
        set(&mut p.horizon, self.horizon);
        set(&mut p.num_tasks, self.tasks);
        set(&mut p.c_sep, self.c_sep);
        set(&mut p.initial_state, self.initial_state);
        set(&mut cfg.pool_seed, self.pool_seed);
        let q = &mut cfg.protocol;
        set(&mut q.num_agents, self.agents);
        set(&mut q.delta, self.delta);
        set(&mut q.eps, self.eps);
        set(&mut q.params.beta1, self.beta1);
        set(&mut q.params.beta2, self.beta2);
        set(&mut q.params.k1, self.k1);
        set(&mut q.params.k2, self.k2);
        if self.rounds.is_some() {
            q.rounds = self.rounds;
        }
        if self.sequential {
            q.parallel = false;
        }
        set(&mut cfg.seeds, self.seeds.clone());
        if self.output_dir.is_some() {
            cfg.output_dir = self.output_dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenPool { common, out } => {
            let cfg = common.resolve()?;
            let pool = cfg.build_pool()?;
            let json = pool.to_json()? + "\n";
            match out {
                Some(path) => {
                    if let Some(parent) = path.parent() {
                        fs::create_dir_all(parent)?;
                    }
                    fs::write(&path, json)?;
                    print_json(&json!({ "pool": path, "optimal_values": pool.optimal_values }))?;
                }
                None => io::stdout().lock().write_all(json.as_bytes())?,
            }
        }
        Command::Run { common, pool_file } => {
            let cfg = common.resolve()?;
            let pool = match pool_file {
                Some(path) => TaskPool::from_json(&fs::read_to_string(path)?)?,
                None => cfg.build_pool()?,
            };
            let dir = output_dir(&cfg);
            let mut written = Vec::new();
            for &seed in &cfg.seeds {
                let report = run_simulation(&pool, &cfg.protocol, seed)?;
                let files = write_run(&dir, &cfg, &report)?;
                written.push(json!({
                    "seed": seed,
                    "csv": files.csv,
                    "summary": files.summary,
                    "discovered": report.summary.discovered,
                    "mean_gap": report.summary.mean_gap,
                }));
            }
            print_json(&json!({ "runs": written }))?;
        }
        Command::Sweep { common, n_values, out } => {
            let cfg = common.resolve()?;
            let pool = cfg.build_pool()?;
            let report = sweep_agents(&pool, &cfg.protocol, &n_values, &cfg.seeds)?;
            let path = out.unwrap_or_else(|| output_dir(&cfg).join("sweep.csv"));
            write_sweep(&path, &cfg, &report)?;
            print_json(&json!({ "sweep": path, "rows": report.rows.len() }))?;
        }
        Command::Calibrate {
            common,
            beta,
            target,
            max_k,
            trials,
            required_rate,
            calibration_seed,
            require_optimism,
        } => {
            let cfg = common.resolve()?;
            let pool = cfg.build_pool()?;
            let beta = beta.unwrap_or(cfg.protocol.params.beta1);
            let target = target.unwrap_or(cfg.pool.c_sep / 8.0);
            let budget = CalibrationBudget {
                max_k,
                trials,
                required_rate,
                require_optimism,
            };
            let cal = calibrate_k(&pool, beta, target, &budget, calibration_seed)?;
            print_json(&json!({
                "beta": beta,
                "target": target,
                "require_optimism": require_optimism,
                "k": cal.k,
                "rate": cal.rate,
                "history": cal.history,
                "hardest_pair": pool.hardest_pair(),
                "config": serde_json::to_value(&cfg)?,
            }))?;
        }
        Command::Theory {
            common,
            c_beta1,
            c_k1,
            c_beta2,
            c_k2,
        } => {
            let cfg = common.resolve()?;
            let inputs = TheoryInputs {
                dim: cfg.pool.dim,
                horizon: cfg.pool.horizon,
                num_tasks: cfg.pool.num_tasks,
                num_agents: cfg.protocol.num_agents,
                delta: cfg.protocol.delta,
                eps: cfg.protocol.eps,
                c_sep: cfg.pool.c_sep,
            };
            let constants = TheoryConstants {
                c_beta1,
                c_k1,
                c_beta2,
                c_k2,
            };
            let p = theoretical_params(&inputs, &constants)?;
            print_json(&json!({ "inputs": inputs, "constants": constants, "params": p }))?;
        }
    }
    Ok(())
}

fn fail(kind: &str, message: String) -> ExitCode {
    let body = json!({ "error": kind, "message": message });
    eprintln!("{body}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string()),
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}

