//! Least-squares value iteration with optimism bonuses.
//!
//! [`exp_ph`] collects data with a reward-free, bonus-driven exploration
//! policy; [`planning`] regresses the logged rewards plus next-step values
//! on that data. Both run the same backward pass over sufficient statistics
//! kept per step: the Gram matrix, `sum phi * r`, and `sum phi` bucketed by
//! next state (so `sum phi * V(s')` is one `d x |S|` product).

mod gram;

pub use gram::{weighted_norm, GramMatrix, QUAD_TOL, REFACTOR_INTERVAL, RESIDUAL_TOL};

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmdp::{EpisodeRecord, Environment, FeatureMap, Policy};
use crate::oracle::argmax;

/// Per-step regression statistics `{(theta_h, Lambda_h)}` plus the bonus
/// scale they are meant to be used with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub theta: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<Vec<f64>>>,
    pub beta: f64,
}

impl PolicyStats {
    pub fn horizon(&self) -> usize {
        self.theta.len()
    }

    pub fn dim(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.theta.len() != self.lambda.len() || d == 0 {
            return Err(Error::Numeric("policy stats have inconsistent shape".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Numeric("beta must be positive and finite".into()));
        }
        for (th, lam) in self.theta.iter().zip(&self.lambda) {
            if th.len() != d || lam.len() != d || lam.iter().any(|r| r.len() != d) {
                return Err(Error::Numeric("policy stats have inconsistent shape".into()));
            }
            if th.iter().chain(lam.iter().flatten()).any(|x| !x.is_finite()) {
                return Err(Error::Numeric("policy stats contain non-finite values".into()));
            }
        }
        Ok(())
    }
}

/// `K` episodes of `H` steps, all starting from the same state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    episodes: Vec<EpisodeRecord>,
}

impl Dataset {
    pub fn new(episodes: Vec<EpisodeRecord>) -> Result<Self> {
        let first = episodes.first().ok_or(Error::EmptyDataset)?;
        let horizon = first.steps.len();
        let s0 = first.steps.first().ok_or(Error::EmptyDataset)?.state;
        for (k, ep) in episodes.iter().enumerate() {
            if ep.steps.len() != horizon {
                return Err(Error::Config(format!("episode {k} has length {}, expected {horizon}", ep.steps.len())));
            }
            if ep.steps[0].state != s0 {
                return Err(Error::Config(format!("episode {k} does not start at state {s0}")));
            }
        }
        Ok(Self { episodes })
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.episodes[0].steps.len()
    }

    pub fn initial_state(&self) -> usize {
        self.episodes[0].steps[0].state
    }

    /// The first `k` episodes.
    pub fn prefix(&self, k: usize) -> Result<Dataset> {
        Dataset::new(self.episodes[..k.min(self.len())].to_vec())
    }
}

/// Sufficient statistics for step `h`.
#[derive(Debug, Clone)]
pub(crate) struct StepStats {
    gram: GramMatrix,
    /// `sum phi_h^tau r_h^tau`
    reward_features: Vec<f64>,
    /// `[s' * d + j]`: `sum phi_h^tau[j]` over samples with `s_{h+1}^tau = s'`
    next_features: Vec<f64>,
}

impl StepStats {
    fn new(dim: usize, num_states: usize) -> Self {
        Self {
            gram: GramMatrix::identity(dim),
            reward_features: vec![0.0; dim],
            next_features: vec![0.0; dim * num_states],
        }
    }
}

/// Statistics for all steps, fed one episode at a time.
#[derive(Debug, Clone)]
pub(crate) struct Statistics {
    steps: Vec<StepStats>,
    dim: usize,
}

impl Statistics {
    pub(crate) fn new(horizon: usize, dim: usize, num_states: usize) -> Self {
        Self {
            steps: vec![StepStats::new(dim, num_states); horizon],
            dim,
        }
    }

    pub(crate) fn observe(&mut self, features: &FeatureMap, episode: &EpisodeRecord) -> Result<()> {
        let d = self.dim;
        let horizon = self.steps.len();
        for (h, step) in episode.steps.iter().enumerate() {
            if !step.reward.is_finite() {
                return Err(Error::Numeric(format!("non-finite reward at step {h}")));
            }
            let phi = features.try_phi(step.state, step.action)?;
            let st = &mut self.steps[h];
            st.gram.update(phi)?;
            for j in 0..d {
                st.reward_features[j] += phi[j] * step.reward;
            }
            if h + 1 < horizon {
                let sp = episode.steps[h + 1].state;
                let bucket = &mut st.next_features[sp * d..(sp + 1) * d];
                for j in 0..d {
                    bucket[j] += phi[j];
                }
            }
        }
        Ok(())
    }

    fn from_dataset(features: &FeatureMap, dataset: &Dataset) -> Result<Self> {
        let mut stats = Self::new(dataset.horizon(), features.dim(), features.num_states());
        for ep in dataset.episodes() {
            stats.observe(features, ep)?;
        }
        Ok(stats)
    }

    fn refactor(&mut self) -> Result<()> {
        self.steps.iter_mut().try_for_each(|s| s.gram.refactor())
    }
}

/// Which reward enters the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RewardMode {
    /// Regression targets are next-step values only; the bonus-derived
    /// reward `u / H` is added to `Q` directly.
    Exploration,
    /// Regression targets are logged reward plus next-step value.
    Logged,
}

/// Output of one backward pass.
#[derive(Debug, Clone)]
pub(crate) struct BackwardPass {
    pub theta: Vec<Vec<f64>>,
    /// `q[h][s * A + a]`
    pub q: Vec<Vec<f64>>,
    /// `v[h][s]`, `h in 0..=H`
    pub v: Vec<Vec<f64>>,
    pub policy: Policy,
}

/// `min{beta ||phi||_{Lambda^-1}, H}`.
#[inline]
fn bonus(beta: f64, gram_inv_norm: f64, horizon: f64) -> f64 {
    (beta * gram_inv_norm).min(horizon)
}

/// Clipped optimistic action value.
#[inline]
fn clipped(x: f64, horizon: f64) -> f64 {
    x.clamp(0.0, horizon)
}

pub(crate) fn backward_pass(
    stats: &Statistics,
    features: &FeatureMap,
    beta: f64,
    mode: RewardMode,
) -> Result<BackwardPass> {
    let horizon = stats.steps.len();
    let hf = horizon as f64;
    let (ns, na, d) = (features.num_states(), features.num_actions(), features.dim());
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    let mut q = vec![vec![0.0; ns * na]; horizon];
    let mut theta = vec![vec![0.0; d]; horizon];
    let mut actions = vec![vec![0usize; ns]; horizon];
    let mut target = vec![0.0; d];

    for h in (0..horizon).rev() {
        let st = &stats.steps[h];
        match mode {
            RewardMode::Logged => target.copy_from_slice(&st.reward_features),
            RewardMode::Exploration => target.iter_mut().for_each(|x| *x = 0.0),
        }
        if h + 1 < horizon {
            for (sp, &vn) in v[h + 1].iter().enumerate() {
                if vn != 0.0 {
                    let bucket = &st.next_features[sp * d..(sp + 1) * d];
                    for j in 0..d {
                        target[j] += bucket[j] * vn;
                    }
                }
            }
        }
        if target.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite regression target at step {h}")));
        }
        theta[h] = st.gram.solve(&target);
        for s in 0..ns {
            let row = &mut q[h][s * na..(s + 1) * na];
            for (a, qa) in row.iter_mut().enumerate() {
                let phi = features.phi(s, a);
                let u = bonus(beta, st.gram.inverse_norm(phi), hf);
                let fit: f64 = theta[h].iter().zip(phi).map(|(t, p)| t * p).sum();
                let extra = match mode {
                    RewardMode::Exploration => u / hf,
                    RewardMode::Logged => 0.0,
                };
                *qa = clipped(fit + u + extra, hf);
            }
            let best = argmax(row);
            actions[h][s] = best;
            v[h][s] = row[best];
        }
    }
    Ok(BackwardPass {
        theta,
        q,
        v,
        policy: Policy::new(actions),
    })
}

/// Exploration run that also keeps every episode's backward pass.
#[derive(Debug, Clone)]
pub struct ExplorationTrace {
    pub dataset: Dataset,
    /// `policies[k]` is the greedy policy executed in episode `k`.
    pub policies: Vec<Policy>,
    /// `q_values[k][h][s * A + a]` of episode `k`.
    pub q_values: Vec<Vec<Vec<f64>>>,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("beta must be positive, got {beta}")))
    }
}

fn explore(
    env: &dyn Environment,
    features: &FeatureMap,
    beta: f64,
    episodes: usize,
    rng: &mut dyn RngCore,
    mut trace: Option<(&mut Vec<Policy>, &mut Vec<Vec<Vec<f64>>>)>,
) -> Result<Dataset> {
    check_beta(beta)?;
    if episodes == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut stats = Statistics::new(env.horizon(), features.dim(), features.num_states());
    let mut records = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let pass = backward_pass(&stats, features, beta, RewardMode::Exploration)?;
        let record = env.sample_episode(&pass.policy, rng)?;
        stats.observe(features, &record)?;
        records.push(record);
        if let Some((policies, qs)) = trace.as_mut() {
            policies.push(pass.policy);
            qs.push(pass.q);
        }
    }
    Dataset::new(records)
}

/// Reward-free exploration phase: `episodes` rollouts of the policy greedy
/// with respect to bonus-only optimistic values.
///
/// The environment's rewards are recorded in the dataset for later planning
/// but never enter the exploration updates.
pub fn exp_ph(
    env: &dyn Environment,
    features: &FeatureMap,
    beta: f64,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<Dataset> {
    explore(env, features, beta, episodes, rng, None)
}

/// [`exp_ph`] with the per-episode policies and action values retained.
pub fn exp_ph_traced(
    env: &dyn Environment,
    features: &FeatureMap,
    beta: f64,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<ExplorationTrace> {
    let mut policies = Vec::with_capacity(episodes);
    let mut q_values = Vec::with_capacity(episodes);
    let dataset = explore(env, features, beta, episodes, rng, Some((&mut policies, &mut q_values)))?;
    Ok(ExplorationTrace {
        dataset,
        policies,
        q_values,
    })
}

/// Result of [`planning`].
#[derive(Debug, Clone)]
pub struct PlanningResult {
    pub stats: PolicyStats,
    /// `V_1(s0)` of the optimistic estimate.
    pub v1: f64,
    /// Optimistic values `v[h][s]`, `h in 0..=H`.
    pub values: Vec<Vec<f64>>,
}

/// Optimistic least-squares value iteration on a logged dataset.
pub fn planning(dataset: &Dataset, features: &FeatureMap, beta: f64) -> Result<PlanningResult> {
    check_beta(beta)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut stats = Statistics::from_dataset(features, dataset)?;
    // Exact inverses, so greedy_policy on the returned stats agrees bit-for-bit.
    stats.refactor()?;
    let pass = backward_pass(&stats, features, beta, RewardMode::Logged)?;
    let v1 = pass.v[0][dataset.initial_state()];
    let lambda = stats.steps.iter().map(|s| s.gram.to_rows()).collect();
    Ok(PlanningResult {
        stats: PolicyStats {
            theta: pass.theta,
            lambda,
            beta,
        },
        v1,
        values: pass.v,
    })
}

/// Recompute the exploration-mode backward pass that episode `k` (0-based)
/// of [`exp_ph`] ran, from the first `k` episodes of its dataset.
pub fn exploration_pass_from_prefix(
    dataset: &Dataset,
    features: &FeatureMap,
    beta: f64,
    k: usize,
) -> Result<(Policy, Vec<Vec<f64>>)> {
    let mut stats = Statistics::new(dataset.horizon(), features.dim(), features.num_states());
    for ep in &dataset.episodes()[..k] {
        stats.observe(features, ep)?;
    }
    let pass = backward_pass(&stats, features, beta, RewardMode::Exploration)?;
    Ok((pass.policy, pass.q))
}

/// Clipped optimistic `Q_h(s, a)` for every pair under `stats`, using the
/// stored bonus scale: `q[h][s * A + a]`.
pub fn stats_q_values(stats: &PolicyStats, features: &FeatureMap) -> Result<Vec<Vec<f64>>> {
    stats.validate()?;
    if stats.dim() != features.dim() {
        return Err(Error::Numeric(format!(
            "stats dimension {} does not match features {}",
            stats.dim(),
            features.dim()
        )));
    }
    let hf = stats.horizon() as f64;
    let (ns, na, d) = (features.num_states(), features.num_actions(), features.dim());
    let mut out = Vec::with_capacity(stats.horizon());
    for (theta, lambda) in stats.theta.iter().zip(&stats.lambda) {
        let gram = GramMatrix::from_matrix(d, lambda.iter().flatten().copied().collect())?;
        let mut qh = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                let phi = features.phi(s, a);
                let fit: f64 = theta.iter().zip(phi).map(|(t, p)| t * p).sum();
                let u = bonus(stats.beta, gram.inverse_norm(phi), hf);
                qh.push(clipped(fit + u, hf));
            }
        }
        out.push(qh);
    }
    Ok(out)
}

/// Greedy policy of the clipped optimistic values under `stats`, ties to the
/// lowest action index.
pub fn greedy_policy(stats: &PolicyStats, features: &FeatureMap) -> Result<Policy> {
    let na = features.num_actions();
    let q = stats_q_values(stats, features)?;
    Ok(Policy::new(
        q.iter()
            .map(|qh| qh.chunks(na).map(argmax).collect())
            .collect(),
    ))
}

/// Inverse of `lambda` as an `nalgebra` matrix, for callers of [`weighted_norm`].
pub fn inverse_matrix(lambda: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = lambda.len();
    let g = GramMatrix::from_matrix(d, lambda.iter().flatten().copied().collect())?;
    Ok(DMatrix::from_row_slice(d, d, g.inverse()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmdp::{LinearTask, Step, TaskEnv};
    use crate::rng::seeded;
    use std::sync::Arc;

    fn scalar_env() -> (LinearTask, Arc<FeatureMap>) {
        let fm = Arc::new(FeatureMap::constant(2, 3).unwrap());
        let task = LinearTask::new(Arc::clone(&fm), vec![vec![vec![0.5]; 2]; 2], vec![vec![0.3]; 2], 0).unwrap();
        (task, fm)
    }

    #[test]
    fn first_episode_is_greedy_on_bonus_alone() {
        let fm = Arc::new(FeatureMap::new(1, 2, 2, vec![vec![0.8, 0.2], vec![0.5, 0.5]]).unwrap());
        let task = LinearTask::new(Arc::clone(&fm), vec![vec![vec![1.0, 1.0]]], vec![vec![0.0, 1.0]], 0).unwrap();
        let env = TaskEnv::new(&task, 0);
        let trace = exp_ph_traced(&env, &fm, 0.7, 1, &mut seeded(0)).unwrap();
        // H = 1: u = min(0.7 ||phi||, 1), Q = u + u / 1
        let u0: f64 = 0.7 * (0.68f64).sqrt();
        let u1: f64 = 0.7 * (0.5f64).sqrt();
        assert!((trace.q_values[0][0][0] - (2.0 * u0).min(1.0)).abs() < 1e-15);
        assert!((trace.q_values[0][0][1] - (2.0 * u1).min(1.0)).abs() < 1e-15);
        assert_eq!(trace.policies[0].action(0, 0), 0);
    }

    #[test]
    fn scalar_features_bonus_recursion_and_tie_break() {
        let (task, fm) = scalar_env();
        let env = TaskEnv::new(&task, 0);
        let trace = exp_ph_traced(&env, &fm, 5.0, 20, &mut seeded(1)).unwrap();
        for (k, policy) in trace.policies.iter().enumerate() {
            assert_eq!(policy.as_table(), &[vec![0, 0], vec![0, 0]]);
            // at the last step theta = 0, so Q = min(u + u/H, H) with u = min(beta / sqrt(k+1), H)
            let u = (5.0 / ((k + 1) as f64).sqrt()).min(2.0);
            let expected = (u + u / 2.0).min(2.0);
            for q in &trace.q_values[k][1] {
                assert!((q - expected).abs() < 1e-12, "episode {k}: {q} vs {expected}");
            }
        }
    }

    #[test]
    fn zero_episodes_is_an_error() {
        let (task, fm) = scalar_env();
        let env = TaskEnv::new(&task, 0);
        assert!(matches!(exp_ph(&env, &fm, 1.0, 0, &mut seeded(0)), Err(Error::EmptyDataset)));
        assert!(matches!(Dataset::new(vec![]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn nonpositive_beta_is_rejected() {
        let (task, fm) = scalar_env();
        let env = TaskEnv::new(&task, 0);
        assert!(exp_ph(&env, &fm, 0.0, 3, &mut seeded(0)).is_err());
    }

    #[test]
    fn one_sample_ridge_in_one_dimension() {
        let fm = FeatureMap::constant(1, 1).unwrap();
        let ds = Dataset::new(vec![EpisodeRecord {
            steps: vec![Step {
                state: 0,
                action: 0,
                reward: 0.8,
            }],
        }])
        .unwrap();
        let out = planning(&ds, &fm, 1.0).unwrap();
        assert!((out.stats.theta[0][0] - 0.4).abs() < 1e-15);
        assert_eq!(out.stats.lambda[0], vec![vec![2.0]]);
        // theta + beta / sqrt(2) > 1, so clipped to H = 1
        assert_eq!(out.v1, 1.0);
    }

    #[test]
    fn zero_reward_data_gives_pure_bonus_at_last_step() {
        let mut rng = seeded(4);
        let fm = Arc::new(FeatureMap::random_simplex(3, 2, 2, &mut rng).unwrap());
        let task = LinearTask::random(Arc::clone(&fm), 3, 0.0, 0, &mut rng).unwrap();
        let env = TaskEnv::new(&task, 0);
        let ds = exp_ph(&env, &fm, 0.5, 30, &mut rng).unwrap();
        let out = planning(&ds, &fm, 0.5).unwrap();
        assert!(out.stats.theta[2].iter().all(|&t| t == 0.0));
        let q = stats_q_values(&out.stats, &fm).unwrap();
        let inv = inverse_matrix(&out.stats.lambda[2]).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                let u = (0.5 * weighted_norm(fm.phi(s, a), &inv).unwrap()).min(3.0);
                assert!((q[2][s * 2 + a] - u).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bonus_only_policy_maximises_feature_norm() {
        let fm = FeatureMap::new(
            2,
            3,
            2,
            vec![
                vec![0.1, 0.1],
                vec![0.9, 0.0],
                vec![0.5, 0.5],
                vec![0.2, 0.0],
                vec![0.0, 0.3],
                vec![0.25, 0.0],
            ],
        )
        .unwrap();
        let stats = PolicyStats {
            theta: vec![vec![0.0, 0.0]; 2],
            lambda: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            beta: 1.0,
        };
        let pi = greedy_policy(&stats, &fm).unwrap();
        assert_eq!(pi.as_table(), &[vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn identical_feature_columns_pick_action_zero() {
        let fm = FeatureMap::new(1, 2, 2, vec![vec![0.3, 0.4], vec![0.3, 0.4]]).unwrap();
        let stats = PolicyStats {
            theta: vec![vec![0.7, -0.1]],
            lambda: vec![vec![vec![3.0, 0.5], vec![0.5, 2.0]]],
            beta: 0.4,
        };
        assert_eq!(greedy_policy(&stats, &fm).unwrap().action(0, 0), 0);
    }

    #[test]
    fn stats_with_wrong_dimension_are_rejected() {
        let fm = FeatureMap::constant(1, 1).unwrap();
        let stats = PolicyStats {
            theta: vec![vec![0.0, 0.0]],
            lambda: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            beta: 1.0,
        };
        assert!(greedy_policy(&stats, &fm).is_err());
    }

    #[test]
    fn non_finite_rewards_are_numeric_errors() {
        let fm = FeatureMap::constant(1, 1).unwrap();
        let ds = Dataset::new(vec![EpisodeRecord {
            steps: vec![Step {
                state: 0,
                action: 0,
                reward: f64::NAN,
            }],
        }])
        .unwrap();
        assert!(matches!(planning(&ds, &fm, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn planning_policy_matches_greedy_policy_on_its_stats() {
        let mut rng = seeded(8);
        let fm = Arc::new(FeatureMap::random_simplex(4, 3, 3, &mut rng).unwrap());
        let task = LinearTask::random(Arc::clone(&fm), 3, 1.0, 0, &mut rng).unwrap();
        let env = TaskEnv::new(&task, 0);
        let ds = exp_ph(&env, &fm, 1.0, 200, &mut rng).unwrap();
        let out = planning(&ds, &fm, 1.0).unwrap();
        let q = stats_q_values(&out.stats, &fm).unwrap();
        let v1 = q[0][..3].iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(v1, out.v1);
        let mut stats = Statistics::from_dataset(&fm, &ds).unwrap();
        stats.refactor().unwrap();
        let pass = backward_pass(&stats, &fm, 1.0, RewardMode::Logged).unwrap();
        assert_eq!(pass.policy, greedy_policy(&out.stats, &fm).unwrap());
    }
}
