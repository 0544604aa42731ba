//! Finite-state linear MDPs.
//!
//! A task is defined by a shared feature table `phi(s, a)` and, per step, a
//! matrix of measures `mu_h(s')` and a reward vector `eta_h`. Transition
//! probabilities and rewards are the inner products of those with `phi`.
//! Steps are zero-based throughout the crate: `h` runs over `0..horizon`.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::oracle;

/// Tolerance on row sums of the transition kernel.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Probabilities in `[-NEG_CLAMP, 0)` are treated as round-off and clamped to zero.
pub const NEG_CLAMP: f64 = 1e-12;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Known features `phi(s, a)` in `R^dim`, stored row-major by `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    phi: Vec<f64>,
}

impl FeatureMap {
    /// Build from per-pair rows indexed `s * num_actions + a`.
    pub fn new(num_states: usize, num_actions: usize, dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || dim == 0 {
            return Err(Error::Config(
                "feature map needs at least one state, action and dimension".into(),
            ));
        }
        if rows.len() != num_states * num_actions {
            return Err(Error::Config(format!(
                "expected {} feature rows, got {}",
                num_states * num_actions,
                rows.len()
            )));
        }
        let mut phi = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Config(format!("feature row {i} has length {}, expected {dim}", row.len())));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("feature row {i} is not finite")));
            }
            let n = norm2(&row);
            if n > 1.0 + NEG_CLAMP {
                return Err(Error::Config(format!("feature row {i} has norm {n} > 1")));
            }
            phi.extend(row);
        }
        Ok(Self {
            num_states,
            num_actions,
            dim,
            phi,
        })
    }

    /// `d = 1`, `phi = 1` everywhere.
    pub fn constant(num_states: usize, num_actions: usize) -> Result<Self> {
        Self::new(num_states, num_actions, 1, vec![vec![1.0]; num_states * num_actions])
    }

    /// One-hot in the state: `d = num_states`.
    pub fn one_hot_states(num_states: usize, num_actions: usize) -> Result<Self> {
        let rows = (0..num_states * num_actions)
            .map(|i| {
                let mut r = vec![0.0; num_states];
                r[i / num_actions] = 1.0;
                r
            })
            .collect();
        Self::new(num_states, num_actions, num_states, rows)
    }

    /// One-hot in the pair: `d = num_states * num_actions`, the tabular embedding.
    pub fn one_hot_pairs(num_states: usize, num_actions: usize) -> Result<Self> {
        let d = num_states * num_actions;
        let rows = (0..d)
            .map(|i| {
                let mut r = vec![0.0; d];
                r[i] = 1.0;
                r
            })
            .collect();
        Self::new(num_states, num_actions, d, rows)
    }

    /// Features drawn uniformly from the probability simplex.
    ///
    /// Simplex features keep every mixture of per-coordinate distributions a
    /// valid transition kernel, and `||phi||_2 <= ||phi||_1 = 1`.
    pub fn random_simplex<R: Rng + ?Sized>(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let rows = (0..num_states * num_actions)
            .map(|_| sample_simplex(dim, 1.0, rng))
            .collect();
        Self::new(num_states, num_actions, dim, rows)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `phi(s, a)`. Panics on out-of-range indices; use [`FeatureMap::try_phi`]
    /// for checked access.
    #[inline]
    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        let i = (s * self.num_actions + a) * self.dim;
        &self.phi[i..i + self.dim]
    }

    pub fn try_phi(&self, s: usize, a: usize) -> Result<&[f64]> {
        check_index("state", s, self.num_states)?;
        check_index("action", a, self.num_actions)?;
        Ok(self.phi(s, a))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.phi.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }
}

/// Dirichlet(alpha, ..., alpha) sample via normalised Gamma draws.
fn sample_simplex<R: Rng + ?Sized>(dim: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

/// One linear MDP over a shared feature map.
///
/// The induced transition and reward tables are computed once at
/// construction, after validation.
#[derive(Debug, Clone)]
pub struct LinearTask {
    features: Arc<FeatureMap>,
    horizon: usize,
    /// `mu[h][s']` is the `dim`-vector `mu_h(s')`.
    mu: Vec<Vec<Vec<f64>>>,
    /// `eta[h]` is the reward parameter at step `h`.
    eta: Vec<Vec<f64>>,
    label: usize,
    // [h][s][a][s'] and [h][s][a], flattened
    transitions: Vec<f64>,
    rewards: Vec<f64>,
}

impl LinearTask {
    pub fn new(
        features: Arc<FeatureMap>,
        mu: Vec<Vec<Vec<f64>>>,
        eta: Vec<Vec<f64>>,
        label: usize,
    ) -> Result<Self> {
        let horizon = mu.len();
        if horizon == 0 {
            return Err(Error::InvalidTask("horizon must be at least 1".into()));
        }
        if eta.len() != horizon {
            return Err(Error::InvalidTask(format!(
                "mu has {horizon} steps but eta has {}",
                eta.len()
            )));
        }
        let (ns, na, d) = (features.num_states(), features.num_actions(), features.dim());
        let bound = (d as f64).sqrt() + NEG_CLAMP;
        for h in 0..horizon {
            if mu[h].len() != ns {
                return Err(Error::InvalidTask(format!("mu[{h}] must have {ns} rows")));
            }
            for (sp, row) in mu[h].iter().enumerate() {
                if row.len() != d || row.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidTask(format!("mu[{h}][{sp}] malformed")));
                }
                if norm2(row) > bound {
                    return Err(Error::InvalidTask(format!("||mu[{h}][{sp}]|| exceeds sqrt(d)")));
                }
            }
            if eta[h].len() != d || eta[h].iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidTask(format!("eta[{h}] malformed")));
            }
            if norm2(&eta[h]) > bound {
                return Err(Error::InvalidTask(format!("||eta[{h}]|| exceeds sqrt(d)")));
            }
        }

        let mut transitions = Vec::with_capacity(horizon * ns * na * ns);
        let mut rewards = Vec::with_capacity(horizon * ns * na);
        for h in 0..horizon {
            for s in 0..ns {
                for a in 0..na {
                    let phi = features.phi(s, a);
                    let start = transitions.len();
                    for sp in 0..ns {
                        let p = dot(&mu[h][sp], phi);
                        if p < -NEG_CLAMP {
                            return Err(Error::InvalidTask(format!(
                                "P_{h}({sp}|{s},{a}) = {p} is negative"
                            )));
                        }
                        transitions.push(p.max(0.0));
                    }
                    let total: f64 = transitions[start..].iter().sum();
                    if (total - 1.0).abs() > STOCHASTIC_TOL {
                        return Err(Error::InvalidTask(format!(
                            "P_{h}(.|{s},{a}) sums to {total}"
                        )));
                    }
                    let r = dot(&eta[h], phi);
                    if !(-NEG_CLAMP..=1.0 + NEG_CLAMP).contains(&r) {
                        return Err(Error::InvalidTask(format!("r_{h}({s},{a}) = {r} outside [0,1]")));
                    }
                    rewards.push(r.clamp(0.0, 1.0));
                }
            }
        }

        Ok(Self {
            features,
            horizon,
            mu,
            eta,
            label,
            transitions,
            rewards,
        })
    }

    /// Embed a tabular MDP with one-hot pair features.
    ///
    /// `p[h][s][a][s']` and `r[h][s][a]`; the feature map must come from
    /// [`FeatureMap::one_hot_pairs`].
    pub fn from_tabular(
        features: Arc<FeatureMap>,
        p: &[Vec<Vec<Vec<f64>>>],
        r: &[Vec<Vec<f64>>],
        label: usize,
    ) -> Result<Self> {
        let (ns, na) = (features.num_states(), features.num_actions());
        if features.dim() != ns * na {
            return Err(Error::Config("tabular embedding needs one-hot pair features".into()));
        }
        let mu = p
            .iter()
            .map(|ph| {
                (0..ns)
                    .map(|sp| {
                        (0..ns * na)
                            .map(|i| ph[i / na][i % na][sp])
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let eta = r
            .iter()
            .map(|rh| (0..ns * na).map(|i| rh[i / na][i % na]).collect())
            .collect();
        Self::new(features, mu, eta, label)
    }

    /// Random task over `features`: per-coordinate next-state distributions
    /// and rewards uniform in `[0, reward_scale]^d`.
    pub fn random<R: Rng + ?Sized>(
        features: Arc<FeatureMap>,
        horizon: usize,
        reward_scale: f64,
        label: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (ns, d) = (features.num_states(), features.dim());
        let mut mu = Vec::with_capacity(horizon);
        let mut eta = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            // column j is the distribution mu^(j)
            let columns: Vec<Vec<f64>> = (0..d).map(|_| sample_simplex(ns, 0.5, rng)).collect();
            mu.push(
                (0..ns)
                    .map(|sp| columns.iter().map(|c| c[sp]).collect())
                    .collect::<Vec<Vec<f64>>>(),
            );
            eta.push((0..d).map(|_| reward_scale * rng.random::<f64>()).collect());
        }
        Self::new(features, mu, eta, label)
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn shared_features(&self) -> Arc<FeatureMap> {
        Arc::clone(&self.features)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.features.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn mu(&self) -> &[Vec<Vec<f64>>] {
        &self.mu
    }

    pub fn eta(&self) -> &[Vec<f64>] {
        &self.eta
    }

    #[inline]
    fn pair_offset(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states() + s) * self.num_actions() + a
    }

    /// `P_h(. | s, a)`; unchecked slice into the cached table.
    #[inline]
    pub(crate) fn probs(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let ns = self.num_states();
        let i = self.pair_offset(h, s, a) * ns;
        &self.transitions[i..i + ns]
    }

    /// `P_h(. | s, a) = <mu_h(.), phi(s, a)>` over next states.
    pub fn transition_probs(&self, h: usize, s: usize, a: usize) -> Result<&[f64]> {
        check_index("step", h, self.horizon)?;
        check_index("state", s, self.num_states())?;
        check_index("action", a, self.num_actions())?;
        Ok(self.probs(h, s, a))
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[self.pair_offset(h, s, a)]
    }

    /// Roll out `policy` from `s0` for one episode.
    pub fn sample_episode(&self, s0: usize, policy: &Policy, rng: &mut dyn RngCore) -> Result<EpisodeRecord> {
        check_index("state", s0, self.num_states())?;
        policy.check_shape(self.horizon, self.num_states(), self.num_actions())?;
        let mut steps = Vec::with_capacity(self.horizon);
        let mut s = s0;
        for h in 0..self.horizon {
            let a = policy.action(h, s);
            let reward = self.reward(h, s, a);
            steps.push(Step {
                state: s,
                action: a,
                reward,
            });
            if h + 1 < self.horizon {
                s = sample_index(self.probs(h, s, a), rng);
            }
        }
        Ok(EpisodeRecord { steps })
    }
}

fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    // u fell in the round-off gap above the last cumulative sum
    last
}

/// Deterministic Markov policy `actions[h][s]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    actions: Vec<Vec<usize>>,
}

impl Policy {
    pub fn new(actions: Vec<Vec<usize>>) -> Self {
        Self { actions }
    }

    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            actions: vec![vec![action; num_states]; horizon],
        }
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn as_table(&self) -> &[Vec<usize>] {
        &self.actions
    }

    pub fn check_shape(&self, horizon: usize, num_states: usize, num_actions: usize) -> Result<()> {
        if self.actions.len() != horizon {
            return Err(Error::Index {
                what: "policy step",
                index: self.actions.len(),
                len: horizon,
            });
        }
        for row in &self.actions {
            if row.len() != num_states {
                return Err(Error::Index {
                    what: "policy state",
                    index: row.len(),
                    len: num_states,
                });
            }
            for &a in row {
                check_index("action", a, num_actions)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// One `H`-step trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub steps: Vec<Step>,
}

impl EpisodeRecord {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// What an agent may do with a task: roll out a policy and observe. Nothing
/// else about the task (parameters, label) is reachable through it.
pub trait Environment: Sync {
    fn horizon(&self) -> usize;
    fn initial_state(&self) -> usize;
    fn sample_episode(&self, policy: &Policy, rng: &mut dyn RngCore) -> Result<EpisodeRecord>;
}

/// Opaque handle wrapping a task for agent code.
pub struct TaskEnv<'a> {
    task: &'a LinearTask,
    initial_state: usize,
}

impl<'a> TaskEnv<'a> {
    pub fn new(task: &'a LinearTask, initial_state: usize) -> Self {
        Self { task, initial_state }
    }
}

impl Environment for TaskEnv<'_> {
    fn horizon(&self) -> usize {
        self.task.horizon()
    }

    fn initial_state(&self) -> usize {
        self.initial_state
    }

    fn sample_episode(&self, policy: &Policy, rng: &mut dyn RngCore) -> Result<EpisodeRecord> {
        self.task.sample_episode(self.initial_state, policy, rng)
    }
}

/// Parameters for [`generate_task_pool`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub horizon: usize,
    pub num_tasks: usize,
    pub c_sep: f64,
    #[serde(default)]
    pub initial_state: usize,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

fn default_max_attempts() -> usize {
    10_000
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 || self.dim == 0 || self.horizon == 0 || self.num_tasks == 0 {
            return Err(Error::Config("pool counts must all be >= 1".into()));
        }
        if !(self.c_sep > 0.0) || !self.c_sep.is_finite() {
            return Err(Error::Config("c_sep must be positive".into()));
        }
        check_index("initial state", self.initial_state, self.num_states).map_err(|e| Error::Config(e.to_string()))
    }
}

/// `M` tasks over one feature map whose optimal initial values are pairwise
/// more than `c_sep` apart.
#[derive(Debug, Clone)]
pub struct TaskPool {
    pub tasks: Vec<LinearTask>,
    pub feature_map: Arc<FeatureMap>,
    pub c_sep: f64,
    pub initial_state: usize,
    pub optimal_values: Vec<f64>,
}

impl TaskPool {
    /// Assemble a pool from given tasks, checking the shared-structure and
    /// separation invariants with the exact oracle.
    pub fn from_tasks(tasks: Vec<LinearTask>, c_sep: f64, initial_state: usize) -> Result<Self> {
        let first = tasks
            .first()
            .ok_or_else(|| Error::Config("a pool needs at least one task".into()))?;
        let feature_map = first.shared_features();
        let horizon = first.horizon();
        check_index("initial state", initial_state, feature_map.num_states())?;
        for t in &tasks {
            if *t.features() != *feature_map || t.horizon() != horizon {
                return Err(Error::InvalidTask("pool tasks must share features and horizon".into()));
            }
        }
        let optimal_values: Vec<f64> = tasks
            .iter()
            .map(|t| oracle::optimal_values(t).value(0, initial_state))
            .collect();
        for i in 0..optimal_values.len() {
            for j in i + 1..optimal_values.len() {
                if (optimal_values[i] - optimal_values[j]).abs() <= c_sep {
                    return Err(Error::InvalidTask(format!(
                        "tasks {i} and {j} are not separated by more than {c_sep}"
                    )));
                }
            }
        }
        Ok(Self {
            tasks,
            feature_map,
            c_sep,
            initial_state,
            optimal_values,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn horizon(&self) -> usize {
        self.tasks[0].horizon()
    }

    /// Smallest pairwise gap between optimal initial values.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.optimal_values.len() {
            for j in i + 1..self.optimal_values.len() {
                best = best.min((self.optimal_values[i] - self.optimal_values[j]).abs());
            }
        }
        best
    }

    /// The two tasks with the closest optimal values (or `(0, 0)` for a
    /// single-task pool).
    pub fn hardest_pair(&self) -> (usize, usize) {
        let mut best = (0, 0, f64::INFINITY);
        for i in 0..self.optimal_values.len() {
            for j in i + 1..self.optimal_values.len() {
                let gap = (self.optimal_values[i] - self.optimal_values[j]).abs();
                if gap < best.2 {
                    best = (i, j, gap);
                }
            }
        }
        (best.0, best.1)
    }

    pub fn env(&self, label: usize) -> TaskEnv<'_> {
        TaskEnv::new(&self.tasks[label], self.initial_state)
    }
}

/// Version tag written into every pool document.
pub const POOL_SCHEMA_VERSION: u32 = 1;

/// JSON form of a [`TaskPool`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDocument {
    pub schema_version: u32,
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub horizon: usize,
    /// Rows indexed `s * num_actions + a`.
    pub phi: Vec<Vec<f64>>,
    pub tasks: Vec<TaskDocument>,
    pub c_sep: f64,
    pub initial_state: usize,
    pub optimal_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDocument {
    pub label: usize,
    /// `mu[h][s'][j]`
    pub mu: Vec<Vec<Vec<f64>>>,
    /// `eta[h][j]`
    pub eta: Vec<Vec<f64>>,
}

impl TaskPool {
    pub fn to_document(&self) -> PoolDocument {
        let fm = &self.feature_map;
        PoolDocument {
            schema_version: POOL_SCHEMA_VERSION,
            num_states: fm.num_states(),
            num_actions: fm.num_actions(),
            dim: fm.dim(),
            horizon: self.horizon(),
            phi: fm.rows(),
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskDocument {
                    label: t.label(),
                    mu: t.mu().to_vec(),
                    eta: t.eta().to_vec(),
                })
                .collect(),
            c_sep: self.c_sep,
            initial_state: self.initial_state,
            optimal_values: self.optimal_values.clone(),
        }
    }

    /// Rebuild and re-validate a pool. Optimal values are recomputed by the
    /// oracle and must agree with the stored ones.
    pub fn from_document(doc: PoolDocument) -> Result<Self> {
        if doc.schema_version != POOL_SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported pool schema version {}", doc.schema_version)));
        }
        let fm = Arc::new(FeatureMap::new(doc.num_states, doc.num_actions, doc.dim, doc.phi)?);
        let tasks = doc
            .tasks
            .into_iter()
            .map(|t| LinearTask::new(Arc::clone(&fm), t.mu, t.eta, t.label))
            .collect::<Result<Vec<_>>>()?;
        if tasks.iter().any(|t| t.horizon() != doc.horizon) {
            return Err(Error::InvalidTask("task horizon does not match document".into()));
        }
        let pool = Self::from_tasks(tasks, doc.c_sep, doc.initial_state)?;
        if pool.optimal_values.len() != doc.optimal_values.len()
            || pool
                .optimal_values
                .iter()
                .zip(&doc.optimal_values)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::InvalidTask("stored optimal values disagree with the oracle".into()));
        }
        Ok(pool)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(json)?)
    }
}

/// Sample a separated task pool by rejection.
///
/// Each candidate gets its own reward scale in `(0, 1]` so optimal values
/// spread over `[0, H]`. A candidate is rejected if its optimal initial value
/// lies within `c_sep` of an accepted one.
pub fn generate_task_pool<R: Rng + ?Sized>(config: &PoolConfig, rng: &mut R) -> Result<TaskPool> {
    config.validate()?;
    if (config.num_tasks - 1) as f64 * config.c_sep >= config.horizon as f64 {
        // optimal values live in [0, H]
        return Err(Error::Construction {
            attempts: 0,
            achieved: Vec::new(),
            c_sep: config.c_sep,
        });
    }
    let features = Arc::new(FeatureMap::random_simplex(
        config.num_states,
        config.num_actions,
        config.dim,
        rng,
    )?);
    let mut tasks: Vec<LinearTask> = Vec::with_capacity(config.num_tasks);
    let mut values: Vec<f64> = Vec::with_capacity(config.num_tasks);
    let mut attempts = 0;
    while tasks.len() < config.num_tasks {
        if attempts >= config.max_attempts {
            return Err(Error::Construction {
                attempts,
                achieved: values,
                c_sep: config.c_sep,
            });
        }
        attempts += 1;
        let scale = 1.0 - rng.random::<f64>();
        let task = match LinearTask::random(Arc::clone(&features), config.horizon, scale, tasks.len(), rng) {
            Ok(t) => t,
            Err(Error::InvalidTask(_)) => continue,
            Err(e) => return Err(e),
        };
        let v = oracle::optimal_values(&task).value(0, config.initial_state);
        if values.iter().all(|&w| (w - v).abs() > config.c_sep) {
            values.push(v);
            tasks.push(task);
        }
    }
    TaskPool::from_tasks(tasks, config.c_sep, config.initial_state)
}
