//! Shared domain types: algorithm parameters, reward models, arm sets,
//! per-arm sufficient statistics and the seed contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `e^(1/16)`, the constant that appears in the neighbor coefficient.
pub const E_SIXTEENTH: f64 = 1.064_494_458_917_859_4;

/// Smallest admissible distance-ratio slack: `e^(1/16) - 1`.
pub const EPSILON_FLOOR: f64 = E_SIXTEENTH - 1.0;

/// Support of the per-arm reward distributions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardModel {
    /// Rewards lie in `[lo, hi]`; confidence radii come from Hoeffding.
    Bounded { lo: f64, hi: f64 },
    /// Rewards are 0 or 1; confidence radii come from the Agresti-Coull form.
    #[default]
    Bernoulli,
}

impl RewardModel {
    /// Width `R` of the reward support.
    pub fn range(&self) -> f64 {
        match *self {
            RewardModel::Bounded { lo, hi } => hi - lo,
            RewardModel::Bernoulli => 1.0,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            RewardModel::Bounded { lo, hi } => (lo, hi),
            RewardModel::Bernoulli => (0.0, 1.0),
        }
    }

    /// Whether `x` is an observable reward under this model.
    pub fn admits_reward(&self, x: f64) -> bool {
        match *self {
            RewardModel::Bounded { lo, hi } => x >= lo && x <= hi,
            RewardModel::Bernoulli => x == 0.0 || x == 1.0,
        }
    }

    /// Whether `y` is a possible expected reward under this model.
    pub fn admits_mean(&self, y: f64) -> bool {
        let (lo, hi) = self.bounds();
        y.is_finite() && y >= lo && y <= hi
    }

    fn validate(&self) -> Result<()> {
        if let RewardModel::Bounded { lo, hi } = *self {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::Param(format!(
                    "bounded reward support needs finite hi > lo, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Rounds `x` to the nearest integer when it is within floating-point noise
/// of it, so that `n * (1 - rho)` with `n = 20, rho = 0.9` compares as 2.
pub(crate) fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// Algorithm parameters `(epsilon, rho, delta)` plus the reward model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub epsilon: f64,
    pub rho: f64,
    pub delta: f64,
    #[serde(default)]
    pub reward_model: RewardModel,
}

impl Params {
    pub fn new(epsilon: f64, rho: f64, delta: f64, reward_model: RewardModel) -> Result<Self> {
        let p = Params {
            epsilon,
            rho,
            delta,
            reward_model,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > EPSILON_FLOOR) {
            return Err(Error::Param(format!(
                "epsilon must exceed e^(1/16) - 1 = {EPSILON_FLOOR:.6}, got {}",
                self.epsilon
            )));
        }
        if !(self.rho > 0.5 && self.rho < 1.0) {
            return Err(Error::Param(format!(
                "rho must lie in (0.5, 1), got {}",
                self.rho
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Param(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        self.reward_model.validate()
    }

    /// `n * (1 - rho)`: the community-size and terminated-count threshold,
    /// and the minimum size of a non-empty normal side.
    pub fn outlier_budget(&self, n: usize) -> f64 {
        snap(n as f64 * (1.0 - self.rho))
    }

    /// `n * rho`: the total normal-arm count must exceed this.
    pub fn normal_quota(&self, n: usize) -> f64 {
        snap(n as f64 * self.rho)
    }
}

/// The arms under study and, when known, their expected rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSet {
    n: usize,
    true_means: Option<Vec<f64>>,
}

impl ArmSet {
    /// Arms with known expected rewards (simulation / oracle mode).
    pub fn with_means(means: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Input("an arm set needs at least one arm".into()));
        }
        if let Some(i) = means.iter().position(|y| !y.is_finite()) {
            return Err(Error::Input(format!("arm {i} has a non-finite mean")));
        }
        Ok(ArmSet {
            n: means.len(),
            true_means: Some(means),
        })
    }

    /// `n` arms whose means are unknown (pure online mode).
    pub fn unknown(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("an arm set needs at least one arm".into()));
        }
        Ok(ArmSet {
            n,
            true_means: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn true_means(&self) -> Option<&[f64]> {
        self.true_means.as_deref()
    }

    /// The true means, or an input error in online mode.
    pub fn require_means(&self) -> Result<&[f64]> {
        self.true_means()
            .ok_or_else(|| Error::Input("operation requires known true means".into()))
    }

    /// Checks that every mean lies in the model's support.
    pub fn check_support(&self, model: &RewardModel) -> Result<()> {
        if let Some(means) = &self.true_means {
            if let Some((i, y)) = means
                .iter()
                .enumerate()
                .find(|(_, y)| !model.admits_mean(**y))
            {
                return Err(Error::Input(format!(
                    "arm {i} mean {y} lies outside the reward support {:?}",
                    model.bounds()
                )));
            }
        }
        Ok(())
    }

    /// Arm ids sorted by ascending true mean; errors on duplicate means.
    pub fn sorted_distinct(&self) -> Result<Vec<usize>> {
        let means = self.require_means()?;
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
        for w in order.windows(2) {
            if means[w[0]] == means[w[1]] {
                return Err(Error::Input(format!(
                    "arms {} and {} share the mean {}; distinct means are required",
                    w[0], w[1], means[w[0]]
                )));
            }
        }
        Ok(order)
    }

    /// Smallest gap between any two true means (0 for duplicates).
    pub fn min_gap(&self) -> Result<f64> {
        let means = self.require_means()?;
        let mut sorted = means.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min))
    }
}

/// Sufficient statistics of one arm's observed rewards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub pulls: u64,
    pub mean: f64,
    /// Number of reward-1 observations (Bernoulli model only).
    pub success_count: u64,
}

impl ArmStats {
    /// Folds one observation in. `mean += (x - mean) / m`.
    #[inline]
    pub(crate) fn observe(&mut self, reward: f64, model: &RewardModel) {
        self.pulls += 1;
        self.mean += (reward - self.mean) / self.pulls as f64;
        if matches!(model, RewardModel::Bernoulli) && reward == 1.0 {
            self.success_count += 1;
        }
    }
}

/// Returns `stats` with one more observation folded in.
pub fn update_stats(stats: ArmStats, reward: f64, model: &RewardModel) -> Result<ArmStats> {
    if !model.admits_reward(reward) {
        return Err(Error::Input(format!(
            "reward {reward} is outside the support of {model:?}"
        )));
    }
    let mut next = stats;
    next.observe(reward, model);
    Ok(next)
}

/// Master seed of one trial. Per-arm streams are split from it by arm index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Seed for arm `arm`'s private reward stream.
    pub fn for_arm(self, arm: usize) -> u64 {
        mix(self.0 ^ mix(arm as u64 ^ 0xA5A5_5A5A_DEAD_BEEF))
    }

    /// Seed of trial `index` under this base seed.
    pub fn trial(self, index: u64) -> RngSeed {
        RngSeed(self.0.wrapping_add(index))
    }

    /// Independent derived seed for a named purpose (instance generation,
    /// grid cells).
    pub fn derive(self, salt: u64) -> RngSeed {
        RngSeed(mix(self.0 ^ mix(salt)))
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
