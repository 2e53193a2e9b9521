//! Round-robin k-sigma baseline.
//!
//! Every round pulls each arm once. The outlier threshold is
//! `theta = mean(y^) + k * std(y^)` over all arms, with a confidence
//! half-width `beta_theta = mean(beta) + k * max(beta)`. The run stops when
//! every arm's interval `[y^ - beta, y^ + beta]` is disjoint from
//! `[theta - beta_theta, theta + beta_theta]`; arms whose whole interval
//! lies above the threshold's are flagged.

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundContext, ConfidenceRadius};
use crate::env::RewardSource;
use crate::error::{Error, Result};
use crate::gold::default_max_pulls;
use crate::model::{ArmSet, ArmStats, Params};

/// Default `k` values tried by sweeps.
pub const DEFAULT_K_GRID: [f64; 3] = [2.0, 2.5, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSigmaState {
    pub stats: Vec<ArmStats>,
    pub k: f64,
    /// Flagged arm ids, ascending.
    pub flagged: Vec<usize>,
    /// Every interval separated from the threshold's.
    pub terminated: bool,
    /// The pull cap ended the run first.
    pub truncated: bool,
    pub total_pulls: u64,
    /// Threshold estimate at the last round.
    pub threshold: f64,
    pub threshold_radius: f64,
}

/// Mean and population standard deviation.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the baseline until every arm separates from the threshold or the
/// cap (rounded down to whole rounds) is reached.
pub fn run_rr<E: RewardSource>(
    arm_set: &ArmSet,
    k: f64,
    params: &Params,
    env: &mut E,
    max_pulls: Option<u64>,
) -> Result<KSigmaState> {
    params.validate()?;
    let n = arm_set.n();
    if n < 2 {
        return Err(Error::Param(format!(
            "the baseline needs at least 2 arms, got {n}"
        )));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Param(format!("k must be positive, got {k}")));
    }
    if env.n_arms() != n {
        return Err(Error::Input(format!(
            "environment has {} arms but the arm set has {n}",
            env.n_arms()
        )));
    }
    if env.model() != params.reward_model {
        return Err(Error::Param(
            "environment reward model differs from the parameters'".into(),
        ));
    }
    let cap = max_pulls.unwrap_or_else(|| default_max_pulls(arm_set, params));
    let model = params.reward_model;
    let mut state = KSigmaState {
        stats: vec![ArmStats::default(); n],
        k,
        flagged: Vec::new(),
        terminated: false,
        truncated: false,
        total_pulls: 0,
        threshold: f64::NAN,
        threshold_radius: f64::NAN,
    };
    let mut radius: Option<ConfidenceRadius> = None;
    let mut betas = vec![0.0; n];
    loop {
        if state.total_pulls + n as u64 > cap {
            state.truncated = true;
            break;
        }
        for arm in 0..n {
            let x = env.pull(arm)?;
            state.stats[arm].observe(x, &model);
        }
        state.total_pulls += n as u64;

        let ctx = BoundContext::new(*params, n, state.total_pulls)?;
        let r = match &radius {
            Some(prev) => ConfidenceRadius::next(&ctx, prev),
            None => ConfidenceRadius::at(&ctx),
        };
        radius = Some(r);
        for (b, s) in betas.iter_mut().zip(&state.stats) {
            *b = r.radius(s);
        }
        let (mean, std) = mean_std(state.stats.iter().map(|s| s.mean));
        let mean_beta = betas.iter().sum::<f64>() / n as f64;
        let max_beta = betas.iter().copied().fold(0.0, f64::max);
        state.threshold = mean + k * std;
        state.threshold_radius = mean_beta + k * max_beta;
        let (lo, hi) = (
            state.threshold - state.threshold_radius,
            state.threshold + state.threshold_radius,
        );
        let separated = state
            .stats
            .iter()
            .zip(&betas)
            .all(|(s, b)| s.mean + b < lo || s.mean - b > hi);
        state.flagged = state
            .stats
            .iter()
            .zip(&betas)
            .enumerate()
            .filter(|(_, (s, b))| s.mean - *b > hi)
            .map(|(i, _)| i)
            .collect();
        if separated {
            state.terminated = true;
            break;
        }
    }
    Ok(state)
}
