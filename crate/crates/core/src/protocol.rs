//! The round loop: every agent draws a hidden task, probes it, asks the
//! server whether it is already solved, learns it if not, and returns a
//! policy. The server admits the round's probes only after all agents are
//! done (the round barrier), then broadcasts newly discovered entries.
//!
//! Agent logic ([`agent_step`]) only ever sees an [`Environment`] handle;
//! hidden labels and the oracle live in [`run_round`], which plays the
//! harness.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordination::{Anomalies, BroadcastMessage, FEntry, ProbeMessage, RoundSubmission, ServerTables, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::linmdp::{Environment, FeatureMap, Policy, TaskPool};
use crate::lsvi::{exp_ph, greedy_policy, planning, PolicyStats};
use crate::oracle;
use crate::rng::{agent_stream, Phase};

/// Exploration widths and episode budgets of the two phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub beta1: f64,
    pub beta2: f64,
    pub k1: usize,
    pub k2: usize,
}

impl PhaseParams {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.k1 == 0 || self.k2 == 0 {
            return Err(Error::Config("k1 and k2 must be >= 1".into()));
        }
        Ok(())
    }
}

/// Agent-local view: the broadcast entries received so far.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub agent_id: usize,
    /// `known_f[m]` holds server label `m + 1`.
    known_f: Vec<FEntry>,
    pub probe_episodes: usize,
    pub learn_episodes: usize,
    pub learned_rounds: usize,
    pub rounds: usize,
}

impl AgentState {
    pub fn new(agent_id: usize) -> Self {
        Self {
            agent_id,
            known_f: Vec::new(),
            probe_episodes: 0,
            learn_episodes: 0,
            learned_rounds: 0,
            rounds: 0,
        }
    }

    pub fn ell_local(&self) -> usize {
        self.known_f.len()
    }

    pub fn known(&self, label: usize) -> Option<&PolicyStats> {
        label
            .checked_sub(1)
            .and_then(|i| self.known_f.get(i))
            .map(|e| &e.stats)
    }

    pub fn known_entries(&self) -> &[FEntry] {
        &self.known_f
    }

    pub fn episode_counter(&self) -> usize {
        self.probe_episodes + self.learn_episodes
    }

    /// Append a broadcast. Entries must continue the local label sequence.
    pub fn receive(&mut self, msg: &BroadcastMessage) -> Result<()> {
        for entry in &msg.new_entries {
            if entry.label != self.known_f.len() + 1 {
                return Err(Error::Protocol(format!(
                    "agent {} expected label {}, received {}",
                    self.agent_id,
                    self.known_f.len() + 1,
                    entry.label
                )));
            }
            self.known_f.push(entry.clone());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    Identified,
    Learned,
}

impl Path {
    pub fn as_str(self) -> &'static str {
        match self {
            Path::Identified => "identified",
            Path::Learned => "learned",
        }
    }
}

/// What one agent produced in one round, before the server barrier.
#[derive(Debug, Clone)]
pub struct AgentStep {
    pub message: ProbeMessage,
    pub path: Path,
    /// Label the server reported before the barrier, on the identified path.
    pub identified_label: Option<usize>,
    pub policy: Policy,
    pub episodes_used: usize,
}

/// One agent's round: probe, query, then reuse or learn.
///
/// `server` is the pre-barrier snapshot and is only read.
#[allow(clippy::too_many_arguments)]
pub fn agent_step(
    agent: &AgentState,
    env: &dyn Environment,
    features: &FeatureMap,
    server: &ServerTables,
    params: &PhaseParams,
    round: usize,
    master_seed: u64,
) -> Result<AgentStep> {
    let mut probe_rng = agent_stream(master_seed, agent.agent_id, round, Phase::Probe);
    let probe_data = exp_ph(env, features, params.beta1, params.k1, &mut probe_rng)?;
    let probe = planning(&probe_data, features, params.beta1)?;
    let v1_probe = probe.v1;

    let (path, identified_label, policy, policy_stats, episodes_used) = match server.identify(v1_probe) {
        Some(label) => {
            let stats = agent.known(label).ok_or_else(|| {
                Error::Protocol(format!(
                    "agent {} identified label {label} but holds only {} entries",
                    agent.agent_id,
                    agent.ell_local()
                ))
            })?;
            let policy = greedy_policy(stats, features)?;
            (Path::Identified, Some(label), policy, None, params.k1)
        }
        None => {
            let mut learn_rng = agent_stream(master_seed, agent.agent_id, round, Phase::Learn);
            let data = exp_ph(env, features, params.beta2, params.k2, &mut learn_rng)?;
            let learned = planning(&data, features, params.beta2)?;
            let policy = greedy_policy(&learned.stats, features)?;
            (Path::Learned, None, policy, Some(learned.stats), params.k1 + params.k2)
        }
    };

    Ok(AgentStep {
        message: ProbeMessage {
            schema_version: SCHEMA_VERSION,
            agent_id: agent.agent_id,
            round,
            v1_probe,
            policy_stats,
            probe_stats: Some(probe.stats),
        },
        path,
        identified_label,
        policy,
        episodes_used,
    })
}

/// Task handed to `agent_id` in `round`, uniform over `num_tasks`.
pub fn assign_task(master_seed: u64, agent_id: usize, round: usize, num_tasks: usize) -> usize {
    agent_stream(master_seed, agent_id, round, Phase::Assign).random_range(0..num_tasks)
}

/// Harness record of one (agent, round).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub agent_id: usize,
    pub round: usize,
    /// Pool index of the assigned task (0-based; never shown to the agent).
    pub hidden_label: usize,
    /// Server label the probe was admitted under (1-based).
    pub resolved_label: usize,
    pub path: Path,
    pub episodes_used: usize,
    pub v1_probe: f64,
    /// `V*_1(s0) - V^pi_1(s0)` of the returned policy.
    pub policy_gap: f64,
}

/// Everything a round produced.
#[derive(Debug, Clone)]
pub struct RoundReport {
    pub outcomes: Vec<RoundOutcome>,
    pub policies: Vec<Policy>,
    pub broadcast: BroadcastMessage,
    pub duplicate_solves: usize,
}

/// Execute one round for all agents, then the server barrier.
///
/// With `parallel` the agents run on the rayon pool; the result is identical
/// to sequential execution because every agent draws from its own keyed
/// stream and reads the same server snapshot.
pub fn run_round(
    agents: &mut [AgentState],
    pool: &TaskPool,
    server: &mut ServerTables,
    params: &PhaseParams,
    round: usize,
    master_seed: u64,
    parallel: bool,
) -> Result<RoundReport> {
    params.validate()?;
    let num_tasks = pool.num_tasks();
    let snapshot: &ServerTables = server;
    let work = |agent: &AgentState| -> Result<(usize, AgentStep)> {
        let hidden = assign_task(master_seed, agent.agent_id, round, num_tasks);
        let env = pool.env(hidden);
        let step = agent_step(agent, &env, &pool.feature_map, snapshot, params, round, master_seed)?;
        Ok((hidden, step))
    };
    let steps: Vec<(usize, AgentStep)> = if parallel {
        agents.par_iter().map(work).collect::<Result<_>>()?
    } else {
        agents.iter().map(work).collect::<Result<_>>()?
    };

    // barrier: all agents are done
    let submissions = steps
        .iter()
        .map(|(_, s)| s.message.clone().into_submission())
        .collect::<Result<Vec<RoundSubmission>>>()?;
    let group = server.group_update(&submissions)?;
    let broadcast = BroadcastMessage::new(round, group.new_entries);

    let mut outcomes = Vec::with_capacity(agents.len());
    let mut policies = Vec::with_capacity(agents.len());
    for (agent, (hidden, step)) in agents.iter_mut().zip(steps) {
        let resolved_label = group
            .assignments
            .iter()
            .find(|(id, _)| *id == agent.agent_id)
            .map(|&(_, label)| label)
            .ok_or_else(|| Error::Protocol(format!("agent {} missing from group update", agent.agent_id)))?;
        agent.rounds += 1;
        agent.probe_episodes += params.k1;
        if step.path == Path::Learned {
            agent.learn_episodes += params.k2;
            agent.learned_rounds += 1;
        }
        agent.receive(&broadcast)?;
        let task = &pool.tasks[hidden];
        let gap = pool.optimal_values[hidden] - oracle::policy_value(task, &step.policy, pool.initial_state);
        outcomes.push(RoundOutcome {
            agent_id: agent.agent_id,
            round,
            hidden_label: hidden,
            resolved_label,
            path: step.path,
            episodes_used: step.episodes_used,
            v1_probe: step.message.v1_probe,
            policy_gap: gap,
        });
        policies.push(step.policy);
    }
    Ok(RoundReport {
        outcomes,
        policies,
        broadcast,
        duplicate_solves: group.duplicate_solves,
    })
}

/// `ceil(6 M ln(M / delta) / N)`.
pub fn default_rounds(num_tasks: usize, num_agents: usize, delta: f64) -> usize {
    let m = num_tasks as f64;
    let t = 6.0 * m * (m / delta).ln() / num_agents as f64;
    (t.ceil() as usize).max(1)
}

/// Protocol-level simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub num_agents: usize,
    pub delta: f64,
    pub eps: f64,
    #[serde(flatten)]
    pub params: PhaseParams,
    /// Overrides the default round count when set.
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::Config("num_agents must be >= 1".into()));
        }
        for (name, x) in [("delta", self.delta), ("eps", self.eps)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.rounds == Some(0) {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        self.params.validate()
    }

    pub fn rounds_for(&self, num_tasks: usize) -> usize {
        self.rounds
            .unwrap_or_else(|| default_rounds(num_tasks, self.num_agents, self.delta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTotals {
    pub agent_id: usize,
    pub probe_episodes: usize,
    pub learn_episodes: usize,
    pub total_episodes: usize,
    pub learned_rounds: usize,
    pub known_labels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub probe: usize,
    pub broadcast: usize,
}

/// Aggregate view of a simulation, written as the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub rounds: usize,
    pub num_agents: usize,
    pub num_tasks: usize,
    pub discovered: usize,
    pub agents: Vec<AgentTotals>,
    pub episode_bound: usize,
    pub duplicate_solves: usize,
    pub anomalies: Anomalies,
    /// `confusion[hidden][server_label - 1]`: probes admitted under that label.
    pub confusion: Vec<Vec<usize>>,
    pub confusion_is_diagonal: bool,
    pub messages: MessageCounts,
    pub mean_gap: f64,
    pub max_learned_gap: f64,
    pub all_tasks_assigned: bool,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub summary: SimulationSummary,
    pub outcomes: Vec<RoundOutcome>,
    pub agents: Vec<AgentState>,
    pub server: ServerTables,
}

/// Each hidden task maps to exactly one server label and vice versa.
pub fn is_diagonal(confusion: &[Vec<usize>]) -> bool {
    let cols = confusion.iter().map(Vec::len).max().unwrap_or(0);
    let rows_ok = confusion
        .iter()
        .all(|row| row.iter().filter(|&&c| c > 0).count() <= 1);
    let cols_ok = (0..cols).all(|j| {
        confusion
            .iter()
            .filter(|row| row.get(j).copied().unwrap_or(0) > 0)
            .count()
            <= 1
    });
    rows_ok && cols_ok
}

/// Run `T` rounds of the protocol with `N` agents on `pool`.
pub fn run_simulation(pool: &TaskPool, config: &SimulationConfig, seed: u64) -> Result<SimulationReport> {
    config.validate()?;
    let num_tasks = pool.num_tasks();
    let rounds = config.rounds_for(num_tasks);
    let mut server = ServerTables::new(pool.c_sep, num_tasks, pool.horizon())?;
    let mut agents: Vec<AgentState> = (0..config.num_agents).map(AgentState::new).collect();
    let mut outcomes = Vec::with_capacity(rounds * config.num_agents);
    let mut duplicate_solves = 0;
    for round in 1..=rounds {
        let report = run_round(&mut agents, pool, &mut server, &config.params, round, seed, config.parallel)?;
        duplicate_solves += report.duplicate_solves;
        outcomes.extend(report.outcomes);
    }

    let mut confusion = vec![vec![0usize; server.ell()]; num_tasks];
    let mut assigned = vec![false; num_tasks];
    for o in &outcomes {
        confusion[o.hidden_label][o.resolved_label - 1] += 1;
        assigned[o.hidden_label] = true;
    }
    let mean_gap = outcomes.iter().map(|o| o.policy_gap).sum::<f64>() / outcomes.len() as f64;
    let max_learned_gap = outcomes
        .iter()
        .filter(|o| o.path == Path::Learned)
        .map(|o| o.policy_gap)
        .fold(f64::NEG_INFINITY, f64::max);
    let summary = SimulationSummary {
        seed,
        rounds,
        num_agents: config.num_agents,
        num_tasks,
        discovered: server.ell(),
        agents: agents
            .iter()
            .map(|a| AgentTotals {
                agent_id: a.agent_id,
                probe_episodes: a.probe_episodes,
                learn_episodes: a.learn_episodes,
                total_episodes: a.episode_counter(),
                learned_rounds: a.learned_rounds,
                known_labels: a.ell_local(),
            })
            .collect(),
        episode_bound: rounds * (config.params.k1 + config.params.k2),
        duplicate_solves,
        anomalies: server.anomalies(),
        confusion_is_diagonal: is_diagonal(&confusion),
        confusion,
        messages: MessageCounts {
            probe: rounds * config.num_agents,
            broadcast: rounds * config.num_agents,
        },
        mean_gap,
        max_learned_gap,
        all_tasks_assigned: assigned.iter().all(|&a| a),
    };
    Ok(SimulationReport {
        config: config.clone(),
        summary,
        outcomes,
        agents,
        server,
    })
}

/// Column order of the per-(agent, round) CSV.
pub const OUTCOME_COLUMNS: [&str; 8] = [
    "agent_id",
    "round",
    "hidden_label",
    "resolved_label",
    "path",
    "episodes_used",
    "v1_probe",
    "policy_gap",
];

/// Write `# key: value` header lines.
pub fn write_header<W: Write>(out: &mut W, header: &[(&str, String)]) -> Result<()> {
    for (k, v) in header {
        writeln!(out, "# {k}: {v}")?;
    }
    Ok(())
}

impl SimulationReport {
    /// Outcomes as CSV, preceded by comment lines carrying `header`.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[(&str, String)]) -> Result<()> {
        write_header(&mut out, header)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(OUTCOME_COLUMNS)?;
        for o in &self.outcomes {
            w.write_record([
                o.agent_id.to_string(),
                o.round.to_string(),
                o.hidden_label.to_string(),
                o.resolved_label.to_string(),
                o.path.as_str().to_string(),
                o.episodes_used.to_string(),
                o.v1_probe.to_string(),
                o.policy_gap.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

/// Parse an outcomes CSV written by [`SimulationReport::write_csv`].
pub fn read_outcomes_csv<R: std::io::Read>(input: R) -> Result<Vec<RoundOutcome>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(OUTCOME_COLUMNS) {
        return Err(Error::Config(format!("unexpected outcome columns {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmdp::{generate_task_pool, PoolConfig};
    use crate::rng::seeded;

    fn pool(num_tasks: usize) -> TaskPool {
        let cfg = PoolConfig {
            num_states: 4,
            num_actions: 2,
            dim: 2,
            horizon: 3,
            num_tasks,
            c_sep: 0.4,
            initial_state: 0,
            max_attempts: 10_000,
        };
        generate_task_pool(&cfg, &mut seeded(17)).unwrap()
    }

    fn params() -> PhaseParams {
        PhaseParams {
            beta1: 0.3,
            beta2: 0.3,
            k1: 300,
            k2: 100,
        }
    }

    #[test]
    fn single_agent_single_task_learns_then_identifies() {
        let pool = pool(1);
        let mut server = ServerTables::new(pool.c_sep, 1, pool.horizon()).unwrap();
        let mut agents = vec![AgentState::new(0)];
        let r1 = run_round(&mut agents, &pool, &mut server, &params(), 1, 5, false).unwrap();
        assert_eq!(r1.outcomes[0].path, Path::Learned);
        assert_eq!(r1.outcomes[0].episodes_used, 400);
        assert_eq!(server.ell(), 1);
        assert_eq!(r1.broadcast.new_entries.len(), 1);
        let r2 = run_round(&mut agents, &pool, &mut server, &params(), 2, 5, false).unwrap();
        assert_eq!(r2.outcomes[0].path, Path::Identified);
        assert_eq!(r2.outcomes[0].episodes_used, 300);
        assert_eq!(r2.outcomes[0].resolved_label, 1);
        assert!(r2.broadcast.new_entries.is_empty());
        assert_eq!(agents[0].episode_counter(), 2 * 300 + 100);
    }

    #[test]
    fn identified_label_missing_locally_is_a_protocol_error() {
        let pool = pool(1);
        let mut server = ServerTables::new(pool.c_sep, 1, pool.horizon()).unwrap();
        let mut agents = vec![AgentState::new(0)];
        run_round(&mut agents, &pool, &mut server, &params(), 1, 5, false).unwrap();
        // a fresh agent that never received the broadcast
        let stale = AgentState::new(1);
        let env = pool.env(0);
        let err = agent_step(&stale, &env, &pool.feature_map, &server, &params(), 2, 5).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn out_of_sequence_broadcast_is_rejected() {
        let mut agent = AgentState::new(0);
        let stats = PolicyStats {
            theta: vec![vec![0.0]],
            lambda: vec![vec![vec![1.0]]],
            beta: 1.0,
        };
        let msg = BroadcastMessage::new(1, vec![FEntry { label: 2, stats }]);
        assert!(agent.receive(&msg).is_err());
    }

    #[test]
    fn default_round_count() {
        // 6 * 1 * ln(1 / 0.1) = 13.8
        assert_eq!(default_rounds(1, 1, 0.1), 14);
        // 6 * 10 * ln(100) / 4 = 69.08
        assert_eq!(default_rounds(10, 4, 0.1), 70);
    }

    #[test]
    fn diagonal_detection() {
        assert!(is_diagonal(&[vec![3, 0], vec![0, 2]]));
        assert!(is_diagonal(&[vec![0, 3], vec![2, 0], vec![0, 0]]));
        assert!(!is_diagonal(&[vec![3, 1], vec![0, 2]]));
        assert!(!is_diagonal(&[vec![3, 0], vec![1, 0]]));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimulationConfig {
            num_agents: 2,
            delta: 0.1,
            eps: 0.5,
            params: params(),
            rounds: None,
            parallel: false,
        };
        assert!(cfg.validate().is_ok());
        cfg.delta = 1.0;
        assert!(cfg.validate().is_err());
        cfg.delta = 0.1;
        cfg.params.k1 = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let pool = pool(2);
        let cfg = SimulationConfig {
            num_agents: 2,
            delta: 0.1,
            eps: 0.5,
            params: params(),
            rounds: Some(3),
            parallel: false,
        };
        let report = run_simulation(&pool, &cfg, 9).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf, &[("seed", "9".into())]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed: 9\nagent_id,round,hidden_label,resolved_label,path,episodes_used,v1_probe,policy_gap\n"));
        let back = read_outcomes_csv(buf.as_slice()).unwrap();
        assert_eq!(back, report.outcomes);
    }
}
