//! Central server: value-probe groups, task identification, and the
//! messages exchanged with agents.
//!
//! Server labels are 1-based and assigned in discovery order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsvi::PolicyStats;

pub const SCHEMA_VERSION: u32 = 1;

/// One discovered task as the server stores it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FEntry {
    pub label: usize,
    #[serde(flatten)]
    pub stats: PolicyStats,
}

/// Counters for events the theory rules out but finite samples allow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomalies {
    /// A probe qualified for more than one group.
    pub multiple_matches: usize,
    /// A group was created beyond the expected number of tasks.
    pub over_capacity: usize,
}

impl Anomalies {
    pub fn total(&self) -> usize {
        self.multiple_matches + self.over_capacity
    }

    pub fn add(&mut self, other: &Anomalies) {
        self.multiple_matches += other.multiple_matches;
        self.over_capacity += other.over_capacity;
    }
}

/// What an agent hands the server at the end of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSubmission {
    pub agent_id: usize,
    pub v1_probe: f64,
    /// Statistics of the learning phase; present iff the agent ran it.
    pub solved_stats: Option<PolicyStats>,
}

/// Grouping tables: `groups[m]` holds the probes admitted to server label
/// `m + 1`, `entries[m]` its solving statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerTables {
    groups: Vec<Vec<f64>>,
    entries: Vec<FEntry>,
    c_sep: f64,
    capacity: usize,
    horizon: usize,
    anomalies: Anomalies,
}

/// Result of one [`ServerTables::group_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutcome {
    /// Entries created this round, for broadcast.
    pub new_entries: Vec<FEntry>,
    /// `(agent_id, label)` for every submission, in processing order.
    pub assignments: Vec<(usize, usize)>,
    /// Submissions that carried learned statistics but joined an existing group.
    pub duplicate_solves: usize,
}

impl ServerTables {
    /// Empty tables for `capacity` expected tasks of horizon `horizon`.
    pub fn new(c_sep: f64, capacity: usize, horizon: usize) -> Result<Self> {
        if !(c_sep > 0.0 && c_sep.is_finite()) {
            return Err(Error::Config("c_sep must be positive".into()));
        }
        Ok(Self {
            groups: Vec::new(),
            entries: Vec::new(),
            c_sep,
            capacity,
            horizon,
            anomalies: Anomalies::default(),
        })
    }

    /// Number of discovered tasks.
    pub fn ell(&self) -> usize {
        self.groups.len()
    }

    pub fn c_sep(&self) -> f64 {
        self.c_sep
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn entries(&self) -> &[FEntry] {
        &self.entries
    }

    pub fn entry(&self, label: usize) -> Option<&FEntry> {
        label.checked_sub(1).and_then(|i| self.entries.get(i))
    }

    pub fn anomalies(&self) -> Anomalies {
        self.anomalies
    }

    fn matching(&self, v1_probe: f64) -> impl Iterator<Item = usize> + '_ {
        let half = self.c_sep / 2.0;
        self.groups
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.iter().all(|v| (v - v1_probe).abs() <= half))
            .map(|(m, _)| m + 1)
    }

    /// Smallest label whose every stored probe lies within `c_sep / 2` of
    /// `v1_probe`.
    pub fn identify(&self, v1_probe: f64) -> Option<usize> {
        self.matching(v1_probe).next()
    }

    /// Admit one round of submissions in agent-index order.
    ///
    /// A matched probe joins its group. An unmatched one opens a new group
    /// whose entry is the submission's learned statistics; it is a protocol
    /// error for those to be missing. On error the tables are unchanged.
    pub fn group_update(&mut self, submissions: &[RoundSubmission]) -> Result<GroupOutcome> {
        let mut order: Vec<&RoundSubmission> = submissions.iter().collect();
        order.sort_by_key(|s| s.agent_id);

        let mut next = self.clone();
        let mut outcome = GroupOutcome {
            new_entries: Vec::new(),
            assignments: Vec::with_capacity(order.len()),
            duplicate_solves: 0,
        };
        for sub in order {
            if !sub.v1_probe.is_finite() || sub.v1_probe < 0.0 || sub.v1_probe > self.horizon as f64 {
                return Err(Error::Protocol(format!(
                    "agent {} probe {} outside [0, {}]",
                    sub.agent_id, sub.v1_probe, self.horizon
                )));
            }
            let mut hits = next.matching(sub.v1_probe);
            let first = hits.next();
            let extra = hits.count();
            if extra > 0 {
                next.anomalies.multiple_matches += 1;
            }
            match first {
                Some(label) => {
                    next.groups[label - 1].push(sub.v1_probe);
                    if sub.solved_stats.is_some() {
                        outcome.duplicate_solves += 1;
                    }
                    outcome.assignments.push((sub.agent_id, label));
                }
                None => {
                    let stats = sub.solved_stats.clone().ok_or_else(|| {
                        Error::Protocol(format!(
                            "agent {} opened a new group without learned statistics",
                            sub.agent_id
                        ))
                    })?;
                    next.groups.push(vec![sub.v1_probe]);
                    let entry = FEntry {
                        label: next.groups.len(),
                        stats,
                    };
                    if entry.label > next.capacity {
                        next.anomalies.over_capacity += 1;
                    }
                    next.entries.push(entry.clone());
                    outcome.assignments.push((sub.agent_id, entry.label));
                    outcome.new_entries.push(entry);
                }
            }
        }
        *self = next;
        Ok(outcome)
    }
}

/// Agent to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMessage {
    pub schema_version: u32,
    pub agent_id: usize,
    pub round: usize,
    pub v1_probe: f64,
    /// Learning-phase statistics, when the agent ran that phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_stats: Option<PolicyStats>,
    /// Statistics from the probe phase. Sent, but never stored by the server.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_stats: Option<PolicyStats>,
}

impl ProbeMessage {
    pub fn into_submission(self) -> Result<RoundSubmission> {
        check_version(self.schema_version)?;
        Ok(RoundSubmission {
            agent_id: self.agent_id,
            v1_probe: self.v1_probe,
            solved_stats: self.policy_stats,
        })
    }
}

/// Server to all agents after a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastMessage {
    pub schema_version: u32,
    pub round: usize,
    pub new_entries: Vec<FEntry>,
}

impl BroadcastMessage {
    pub fn new(round: usize, new_entries: Vec<FEntry>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            round,
            new_entries,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let msg: Self = serde_json::from_str(json)?;
        check_version(msg.schema_version)?;
        Ok(msg)
    }
}

fn check_version(v: u32) -> Result<()> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::Protocol(format!("unsupported schema version {v}")))
    }
}
