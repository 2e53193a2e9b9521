//! The GOLD pulling algorithm.
//!
//! After one pull per arm the neighborhood graph is complete. Each sweep
//! then pulls every arm that has not terminated, deleting the edges whose
//! endpoints stop being neighbors. An arm terminates the first time its
//! community (connected component) is smaller than `n (1 - rho)`; its
//! S-score is the round at which that happened. The run finishes once at
//! least `n (1 - rho)` arms have terminated, and arms are ranked by S-score,
//! earliest first.
//!
//! Departures from a literal reading of the pseudocode:
//!
//! * S-scores are written once, when an arm first terminates.
//! * Arms that never terminated rank after every terminated arm.
//! * An arm that terminates mid-sweep is not pulled again in that sweep.

use serde::{Deserialize, Serialize};

use crate::bounds::{coefficient_b, theorem3_total_pull_bound, BoundContext, ConfidenceRadius};
use crate::env::RewardSource;
use crate::error::{Error, Result};
use crate::graph::{communities, prune_edges, CommunityPartition, NeighborGraph, PruneMode};
use crate::model::{ArmSet, ArmStats, Params};

/// Pull cap used when true means are unknown.
pub const FALLBACK_MAX_PULLS: u64 = 100_000_000;

/// When the terminated-count condition is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinishCheck {
    /// After each complete sweep, as in the outer loop condition.
    #[default]
    PerSweep,
    /// After every pull; stops as early as possible.
    PerPull,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldOptions {
    pub prune_mode: PruneMode,
    pub finish_check: FinishCheck,
    /// `None` selects [`default_max_pulls`].
    pub max_pulls: Option<u64>,
    /// Keep every `(round, arm, reward)`; for audits and tests.
    pub record_pulls: bool,
}

/// One logged pull.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullRecord {
    pub round: u64,
    pub arm: usize,
    pub reward: f64,
}

/// Hook invoked after every pull (including the initial ones).
pub trait GoldObserver {
    fn after_pull(&mut self, _state: &GoldState, _arm: usize, _removed_edges: usize) {}
}

impl GoldObserver for () {}

impl<F: FnMut(&GoldState, usize, usize)> GoldObserver for F {
    fn after_pull(&mut self, state: &GoldState, arm: usize, removed_edges: usize) {
        self(state, arm, removed_edges)
    }
}

/// `10 x` the termination bound when the means are known and distinct,
/// otherwise [`FALLBACK_MAX_PULLS`].
pub fn default_max_pulls(arm_set: &ArmSet, params: &Params) -> u64 {
    let bound = arm_set
        .min_gap()
        .ok()
        .filter(|g| *g > 0.0)
        .and_then(|g| theorem3_total_pull_bound(g, params, arm_set.n()).ok());
    match bound {
        Some(b) => (10.0 * b).min(u64::MAX as f64) as u64,
        None => FALLBACK_MAX_PULLS,
    }
}

/// Arms ordered by S-score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    /// Arm ids, most likely outlier first.
    pub order: Vec<usize>,
    /// S-score of each arm by id; `None` for arms that never terminated.
    pub s_values: Vec<Option<u64>>,
}

impl Ranking {
    /// Terminated arms by ascending `(S, id)`, then the rest by id.
    pub fn from_scores(s_values: Vec<Option<u64>>) -> Self {
        let mut order: Vec<usize> = (0..s_values.len()).collect();
        order.sort_by_key(|&a| (s_values[a].is_none(), s_values[a], a));
        Ranking { order, s_values }
    }

    /// Position of `arm` in the order.
    pub fn rank_of(&self, arm: usize) -> Option<usize> {
        self.order.iter().position(|&a| a == arm)
    }
}

#[derive(Debug, Clone)]
pub struct GoldState {
    params: Params,
    coefficient: f64,
    budget: f64,
    prune_mode: PruneMode,
    finish_check: FinishCheck,
    max_pulls: u64,
    round: u64,
    stats: Vec<ArmStats>,
    graph: NeighborGraph,
    partition: CommunityPartition,
    radius: ConfidenceRadius,
    terminated: Vec<bool>,
    terminated_count: usize,
    s_score: Vec<Option<u64>>,
    finished: bool,
    truncated: bool,
    pull_log: Option<Vec<PullRecord>>,
}

impl GoldState {
    /// Pulls every arm once and builds the complete neighborhood graph.
    pub fn init<E: RewardSource>(
        arm_set: &ArmSet,
        params: &Params,
        env: &mut E,
        options: &GoldOptions,
    ) -> Result<Self> {
        Self::init_observed(arm_set, params, env, options, &mut ())
    }

    pub fn init_observed<E: RewardSource, O: GoldObserver>(
        arm_set: &ArmSet,
        params: &Params,
        env: &mut E,
        options: &GoldOptions,
        observer: &mut O,
    ) -> Result<Self> {
        params.validate()?;
        let n = arm_set.n();
        if n < 2 {
            return Err(Error::Param(format!("GOLD needs at least 2 arms, got {n}")));
        }
        if env.n_arms() != n {
            return Err(Error::Input(format!(
                "environment has {} arms but the arm set has {n}",
                env.n_arms()
            )));
        }
        if env.model() != params.reward_model {
            return Err(Error::Param(format!(
                "environment reward model {:?} differs from the parameters' {:?}",
                env.model(),
                params.reward_model
            )));
        }
        let max_pulls = options
            .max_pulls
            .unwrap_or_else(|| default_max_pulls(arm_set, params));
        if max_pulls < n as u64 {
            return Err(Error::Param(format!(
                "max_pulls {max_pulls} is below the {n} pulls of the initial sweep"
            )));
        }
        let graph = NeighborGraph::complete(n)?;
        let partition = communities(&graph);
        let first_ctx = BoundContext::new(*params, n, 1)?;
        let mut state = GoldState {
            params: *params,
            coefficient: coefficient_b(params.epsilon)?,
            budget: params.outlier_budget(n),
            prune_mode: options.prune_mode,
            finish_check: options.finish_check,
            max_pulls,
            round: 0,
            stats: vec![ArmStats::default(); n],
            graph,
            partition,
            radius: ConfidenceRadius::at(&first_ctx),
            terminated: vec![false; n],
            terminated_count: 0,
            s_score: vec![None; n],
            finished: false,
            truncated: false,
            pull_log: options.record_pulls.then(Vec::new),
        };
        // Pull each arm once; no edge test is meaningful until all have a
        // sample, so the graph stays complete through the loop.
        for arm in 0..n {
            state.observe(env, arm)?;
            observer.after_pull(&state, arm, 0);
        }
        let ctx = BoundContext::new(state.params, n, state.round)?;
        state.radius = ConfidenceRadius::at(&ctx);
        // Drop the pairs that already fail the neighbor predicate.
        let removed = prune_edges(
            &mut state.graph,
            &state.stats,
            &state.radius,
            state.coefficient,
            0,
            PruneMode::FullScan,
        );
        if removed > 0 {
            state.refresh_communities();
        }
        Ok(state)
    }

    fn observe<E: RewardSource>(&mut self, env: &mut E, arm: usize) -> Result<f64> {
        let reward = env.pull(arm)?;
        debug_assert!(self.params.reward_model.admits_reward(reward));
        self.stats[arm].observe(reward, &self.params.reward_model);
        self.round += 1;
        if let Some(log) = &mut self.pull_log {
            log.push(PullRecord {
                round: self.round,
                arm,
                reward,
            });
        }
        Ok(reward)
    }

    fn refresh_communities(&mut self) {
        self.partition = communities(&self.graph);
        for arm in 0..self.stats.len() {
            if !self.terminated[arm] && (self.partition.community_size(arm) as f64) < self.budget {
                self.terminated[arm] = true;
                self.terminated_count += 1;
                self.s_score[arm] = Some(self.round);
            }
        }
    }

    fn pull_and_update<E: RewardSource, O: GoldObserver>(
        &mut self,
        env: &mut E,
        arm: usize,
        observer: &mut O,
    ) -> Result<()> {
        self.observe(env, arm)?;
        let ctx = BoundContext {
            params: self.params,
            n: self.stats.len(),
            total_pulls: self.round,
        };
        self.radius = ConfidenceRadius::next(&ctx, &self.radius);
        let removed = prune_edges(
            &mut self.graph,
            &self.stats,
            &self.radius,
            self.coefficient,
            arm,
            self.prune_mode,
        );
        // The partition, and with it the terminated set, can only change
        // when an edge goes away.
        if removed > 0 {
            self.refresh_communities();
        }
        observer.after_pull(self, arm, removed);
        Ok(())
    }

    fn finish_reached(&self) -> bool {
        self.terminated_count as f64 >= self.budget
    }

    /// One pass over the arms that had not terminated when it started.
    pub fn sweep<E: RewardSource>(&mut self, env: &mut E) -> Result<()> {
        self.sweep_observed(env, &mut ())
    }

    pub fn sweep_observed<E: RewardSource, O: GoldObserver>(
        &mut self,
        env: &mut E,
        observer: &mut O,
    ) -> Result<()> {
        if self.finished {
            return Err(Error::State("sweep called on a finished run".into()));
        }
        if self.truncated {
            return Err(Error::State("sweep called on a truncated run".into()));
        }
        let active: Vec<usize> = (0..self.stats.len())
            .filter(|&a| !self.terminated[a])
            .collect();
        for arm in active {
            if self.terminated[arm] {
                continue;
            }
            if self.round >= self.max_pulls {
                self.truncated = true;
                return Ok(());
            }
            self.pull_and_update(env, arm, observer)?;
            if self.finish_check == FinishCheck::PerPull && self.finish_reached() {
                self.finished = true;
                return Ok(());
            }
        }
        self.finished = self.finish_reached();
        Ok(())
    }

    /// Sweeps until finished or the pull cap is hit.
    pub fn run_to_end<E: RewardSource, O: GoldObserver>(
        &mut self,
        env: &mut E,
        observer: &mut O,
    ) -> Result<()> {
        while !self.finished && !self.truncated {
            self.sweep_observed(env, observer)?;
        }
        Ok(())
    }

    /// Arms by ascending S-score; see [`Ranking::from_scores`].
    pub fn rank(&self) -> Ranking {
        Ranking::from_scores(self.s_score.clone())
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Total pulls so far, `T`.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn stats(&self) -> &[ArmStats] {
        &self.stats
    }

    pub fn graph(&self) -> &NeighborGraph {
        &self.graph
    }

    pub fn partition(&self) -> &CommunityPartition {
        &self.partition
    }

    /// Terminated arm ids, ascending.
    pub fn terminated(&self) -> Vec<usize> {
        (0..self.terminated.len())
            .filter(|&a| self.terminated[a])
            .collect()
    }

    pub fn is_terminated(&self, arm: usize) -> bool {
        self.terminated[arm]
    }

    pub fn s_scores(&self) -> &[Option<u64>] {
        &self.s_score
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn max_pulls(&self) -> u64 {
        self.max_pulls
    }

    /// `n (1 - rho)`.
    pub fn threshold(&self) -> f64 {
        self.budget
    }

    pub fn pull_log(&self) -> Option<&[PullRecord]> {
        self.pull_log.as_deref()
    }
}

/// Runs GOLD to completion with the default options and the given cap.
pub fn run<E: RewardSource>(
    arm_set: &ArmSet,
    params: &Params,
    env: &mut E,
    max_pulls: Option<u64>,
) -> Result<(GoldState, Ranking)> {
    let options = GoldOptions {
        max_pulls,
        ..GoldOptions::default()
    };
    run_with(arm_set, params, env, &options, &mut ())
}

pub fn run_with<E: RewardSource, O: GoldObserver>(
    arm_set: &ArmSet,
    params: &Params,
    env: &mut E,
    options: &GoldOptions,
    observer: &mut O,
) -> Result<(GoldState, Ranking)> {
    let mut state = GoldState::init_observed(arm_set, params, env, options, observer)?;
    state.run_to_end(env, observer)?;
    let ranking = state.rank();
    Ok((state, ranking))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;
    use crate::model::{RewardModel, RngSeed};

    fn params(epsilon: f64, rho: f64) -> Params {
        Params::new(epsilon, rho, 0.1, RewardModel::Bernoulli).unwrap()
    }

    fn arms(means: Vec<f64>) -> ArmSet {
        ArmSet::with_means(means).unwrap()
    }

    #[test]
    fn ranking_orders_by_score_then_id() {
        let mut s = vec![None; 9];
        s[3] = Some(57);
        s[8] = Some(57);
        s[1] = Some(90);
        let r = Ranking::from_scores(s);
        assert_eq!(r.order, vec![3, 8, 1, 0, 2, 4, 5, 6, 7]);
        assert_eq!(r.rank_of(8), Some(1));

        assert_eq!(Ranking::from_scores(vec![None; 4]).order, vec![0, 1, 2, 3]);
        let r = Ranking::from_scores(vec![Some(9), Some(3), Some(5)]);
        assert_eq!(r.order, vec![1, 2, 0]);
    }

    #[test]
    fn init_pulls_each_arm_once_and_keeps_graph_complete() {
        let a = arms((0..20).map(|i| 0.02 + 0.045 * i as f64).collect());
        let p = params(5.0, 0.9);
        for seed in 0..20 {
            let mut env = Environment::new(&a, p.reward_model, RngSeed(seed)).unwrap();
            let s = GoldState::init(&a, &p, &mut env, &GoldOptions::default()).unwrap();
            assert_eq!(s.round(), 20);
            assert!(s.stats().iter().all(|st| st.pulls == 1));
            assert_eq!(s.graph().edge_count(), 190);
            assert_eq!(s.partition().count(), 1);
            assert!(s.s_scores().iter().all(Option::is_none));
            assert!(s.terminated().is_empty());
        }
    }

    #[test]
    fn sweeps_without_terminations_count_pulls() {
        let a = arms((0..10).map(|i| 0.5 + 1e-4 * i as f64).collect());
        let p = params(5.0, 0.9);
        let mut env = Environment::new(&a, p.reward_model, RngSeed(1)).unwrap();
        let mut s = GoldState::init(&a, &p, &mut env, &GoldOptions::default()).unwrap();
        for k in 1..=5u64 {
            s.sweep(&mut env).unwrap();
            assert!(s.terminated().is_empty());
            assert_eq!(s.round(), 10 * (k + 1));
        }
    }

    #[test]
    fn cap_at_n_truncates_with_no_scores() {
        let a = arms(vec![0.1, 0.2, 0.3, 0.9]);
        let p = params(5.0, 0.9);
        let mut env = Environment::new(&a, p.reward_model, RngSeed(1)).unwrap();
        let (s, r) = run(&a, &p, &mut env, Some(4)).unwrap();
        assert!(s.is_truncated());
        assert!(!s.is_finished());
        assert_eq!(s.round(), 4);
        assert!(r.s_values.iter().all(Option::is_none));
        assert_eq!(r.order, vec![0, 1, 2, 3]);
        let mut env = Environment::new(&a, p.reward_model, RngSeed(1)).unwrap();
        assert!(run(&a, &p, &mut env, Some(3)).is_err());
    }

    #[test]
    fn twenty_arms_finish_with_two_isolated() {
        let mut means: Vec<f64> = (0..19).map(|i| 0.1 + 0.01 * i as f64).collect();
        means.push(0.95);
        let a = arms(means);
        let p = params(5.0, 0.9);
        let mut env = Environment::new(&a, p.reward_model, RngSeed(8)).unwrap();
        let (s, r) = run(&a, &p, &mut env, None).unwrap();
        assert!(s.is_finished());
        assert!(s.terminated().len() >= 2);
        for arm in s.terminated() {
            assert_eq!(s.partition().community_size(arm), 1);
        }
        assert_eq!(r.order[0], 19);
    }

    #[test]
    fn spike_ranked_first() {
        let mut means: Vec<f64> = (0..9).map(|i| 0.10 + 0.01 * i as f64).collect();
        means.push(0.95);
        let a = arms(means);
        let p = params(5.0, 0.8);
        let mut hits = 0;
        for seed in 0..10 {
            let mut env = Environment::new(&a, p.reward_model, RngSeed(seed)).unwrap();
            let (_, r) = run(&a, &p, &mut env, None).unwrap();
            hits += usize::from(r.order[0] == 9);
        }
        assert!(hits >= 9, "spike ranked first in {hits}/10 runs");
    }

    #[test]
    fn sweep_after_finish_is_a_state_error() {
        let a = arms(vec![0.05, 0.1, 0.95]);
        let p = params(5.0, 0.6);
        let mut env = Environment::new(&a, p.reward_model, RngSeed(2)).unwrap();
        let (mut s, _) = run(&a, &p, &mut env, None).unwrap();
        assert!(s.is_finished());
        assert!(matches!(s.sweep(&mut env), Err(Error::State(_))));
    }

    #[test]
    fn mismatched_environment_rejected() {
        let a = arms(vec![0.1, 0.2, 0.3]);
        let p = params(5.0, 0.9);
        let other = arms(vec![0.1, 0.2]);
        let mut env = Environment::new(&other, p.reward_model, RngSeed(2)).unwrap();
        assert!(GoldState::init(&a, &p, &mut env, &GoldOptions::default()).is_err());
    }

    #[test]
    fn default_cap_uses_termination_bound() {
        let a = arms(vec![0.1, 0.2, 0.4]);
        let p = params(5.0, 0.9);
        let want = 10.0 * theorem3_total_pull_bound(0.1, &p, 3).unwrap();
        let got = default_max_pulls(&a, &p) as f64;
        assert!((got - want).abs() <= 1.0 + 1e-9 * want);
        let dup = arms(vec![0.1, 0.1, 0.4]);
        assert_eq!(default_max_pulls(&dup, &p), FALLBACK_MAX_PULLS);
        assert_eq!(
            default_max_pulls(&ArmSet::unknown(3).unwrap(), &p),
            FALLBACK_MAX_PULLS
        );
    }
}
