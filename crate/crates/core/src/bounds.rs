//! Confidence radii and the analytic bounds built on them.
//!
//! Every log is natural. The per-round failure budget is
//! `delta'(T) = 6 delta / (pi^2 n T^2)`, whose sum over all rounds and arms
//! stays below `delta`.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmStats, Params, RewardModel, EPSILON_FLOOR, E_SIXTEENTH};
use crate::special::{erfc_inv, erfc_inv_from};

/// Parameters plus the round `T` at which a bound is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundContext {
    pub params: Params,
    pub n: usize,
    pub total_pulls: u64,
}

impl BoundContext {
    pub fn new(params: Params, n: usize, total_pulls: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Param("bound context needs n >= 1".into()));
        }
        if total_pulls == 0 {
            return Err(Error::Param("bound context needs T >= 1".into()));
        }
        Ok(BoundContext {
            params,
            n,
            total_pulls,
        })
    }

    /// `-ln delta'(T)`, evaluated as a sum of logs so it stays exact when
    /// `delta'` itself would underflow.
    pub fn neg_log_delta_prime(&self) -> f64 {
        (PI * PI / (6.0 * self.params.delta)).ln()
            + (self.n as f64).ln()
            + 2.0 * (self.total_pulls as f64).ln()
    }
}

/// `delta'(T) = 6 delta / (pi^2 n T^2)`.
pub fn delta_prime(ctx: &BoundContext) -> f64 {
    let t = ctx.total_pulls as f64;
    6.0 * ctx.params.delta / (PI * PI * ctx.n as f64 * t * t)
}

/// Neighbor coefficient `b = (1 + e^(1/16) + eps) / (1 - e^(1/16) + eps)`.
pub fn coefficient_b(epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > EPSILON_FLOOR) {
        return Err(Error::Param(format!(
            "epsilon must exceed e^(1/16) - 1 = {EPSILON_FLOOR:.6}, got {epsilon}"
        )));
    }
    Ok((1.0 + E_SIXTEENTH + epsilon) / (1.0 - E_SIXTEENTH + epsilon))
}

/// Per-round radius evaluator. Everything that depends only on `T` is
/// computed once, so the radius of any arm costs a handful of flops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfidenceRadius {
    /// `beta = scale / sqrt(m)` with `scale = R sqrt(-ln delta' / 2)`.
    Bounded { range: f64, neg_log_delta: f64 },
    /// `beta = z sqrt(p~ (1 - p~) / m)`, `p~ = (m+ + z^2/2) / (m + z^2)`.
    Bernoulli { z: f64, z_sq: f64 },
}

impl ConfidenceRadius {
    pub fn at(ctx: &BoundContext) -> Self {
        match ctx.params.reward_model {
            RewardModel::Bounded { .. } => ConfidenceRadius::Bounded {
                range: ctx.params.reward_model.range(),
                neg_log_delta: ctx.neg_log_delta_prime(),
            },
            RewardModel::Bernoulli => Self::bernoulli(erfc_inv(delta_prime(ctx))),
        }
    }

    /// Like [`ConfidenceRadius::at`], reusing the previous round's inverse
    /// error function root as the Newton starting point.
    pub fn next(ctx: &BoundContext, previous: &ConfidenceRadius) -> Self {
        match (ctx.params.reward_model, previous) {
            (RewardModel::Bernoulli, ConfidenceRadius::Bernoulli { z, .. }) => {
                Self::bernoulli(erfc_inv_from(delta_prime(ctx), *z))
            }
            _ => Self::at(ctx),
        }
    }

    fn bernoulli(z: f64) -> Self {
        ConfidenceRadius::Bernoulli { z, z_sq: z * z }
    }

    /// Radius of an arm with `stats.pulls >= 1`. Unchecked.
    #[inline]
    pub fn radius(&self, stats: &ArmStats) -> f64 {
        let m = stats.pulls as f64;
        match *self {
            ConfidenceRadius::Bounded {
                range,
                neg_log_delta,
            } => range * (neg_log_delta / (2.0 * m)).sqrt(),
            ConfidenceRadius::Bernoulli { z, z_sq } => {
                let p = (stats.success_count as f64 + 0.5 * z_sq) / (m + z_sq);
                z * (p * (1.0 - p) / m).sqrt()
            }
        }
    }

    pub fn checked_radius(&self, stats: &ArmStats) -> Result<f64> {
        if stats.pulls == 0 {
            return Err(Error::State(
                "confidence radius is undefined for an arm that was never pulled".into(),
            ));
        }
        if stats.success_count > stats.pulls {
            return Err(Error::State(format!(
                "success count {} exceeds pull count {}",
                stats.success_count, stats.pulls
            )));
        }
        Ok(self.radius(stats))
    }
}

/// Hoeffding radius `R sqrt(ln(1/delta') / (2 m))`.
pub fn ucb_radius_bounded(stats: &ArmStats, ctx: &BoundContext) -> Result<f64> {
    ConfidenceRadius::Bounded {
        range: ctx.params.reward_model.range(),
        neg_log_delta: ctx.neg_log_delta_prime(),
    }
    .checked_radius(stats)
}

/// Agresti-Coull style radius with `Z = erf^-1(1 - delta')`.
pub fn ucb_radius_bernoulli(stats: &ArmStats, ctx: &BoundContext) -> Result<f64> {
    ConfidenceRadius::bernoulli(erfc_inv(delta_prime(ctx))).checked_radius(stats)
}

/// Radius under the context's reward model.
pub fn ucb_radius(stats: &ArmStats, ctx: &BoundContext) -> Result<f64> {
    ConfidenceRadius::at(ctx).checked_radius(stats)
}

/// Right-hand side of the neighbor predicate, `b (beta_i + beta_j)`.
pub fn neighbor_rhs(stats_i: &ArmStats, stats_j: &ArmStats, ctx: &BoundContext) -> Result<f64> {
    let b = coefficient_b(ctx.params.epsilon)?;
    let radius = ConfidenceRadius::at(ctx);
    Ok(b * (radius.checked_radius(stats_i)? + radius.checked_radius(stats_j)?))
}

/// Whether two arms are neighbors: `|y_i - y_j| <= b (beta_i + beta_j)`.
pub fn are_neighbors(stats_i: &ArmStats, stats_j: &ArmStats, ctx: &BoundContext) -> Result<bool> {
    Ok((stats_i.mean - stats_j.mean).abs() <= neighbor_rhs(stats_i, stats_j, ctx)?)
}

/// Pull-count sandwich for an arm whose nearest gap is `gap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullBoundReport {
    /// `2 (b + 1)^2 R^2 / gap^2`
    pub d1: f64,
    /// `2 (b - 1)^2 R^2 / gap^2`
    pub d2: f64,
    pub lower: f64,
    pub upper: f64,
}

fn clamped_ln(x: f64) -> f64 {
    x.max(E).ln()
}

/// Lower and upper bounds on how many times an arm is pulled before it
/// leaves the neighborhood of an arm `gap` away.
pub fn lemma2_pull_bounds(gap: f64, params: &Params, n: usize) -> Result<PullBoundReport> {
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::Param(format!("gap must be positive, got {gap}")));
    }
    if n == 0 {
        return Err(Error::Param("n must be at least 1".into()));
    }
    let b = coefficient_b(params.epsilon)?;
    let r = params.reward_model.range();
    let d1 = 2.0 * (b + 1.0).powi(2) * r * r / (gap * gap);
    let d2 = 2.0 * (b - 1.0).powi(2) * r * r / (gap * gap);
    let nf = n as f64;
    let root = (PI * PI * nf * nf / (6.0 * params.delta)).sqrt();
    Ok(PullBoundReport {
        d1,
        d2,
        lower: 4.0 * d2 * clamped_ln(2.0 * d2 * root) - 3.0,
        upper: 4.0 * d1 * clamped_ln(2.0 * d1 * root) + 1.0,
    })
}

/// How the minimum gap enters `D3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GapExponent {
    /// `D3 = 2 (b+1)^2 R^2 / gap^2`, consistent with `D1`.
    #[default]
    Squared,
    /// `D3 = 2 (b+1)^2 R^2 / gap`, the expression as literally printed.
    Literal,
}

/// `D3` for the termination bound.
pub fn theorem3_d3(min_gap: f64, params: &Params, exponent: GapExponent) -> Result<f64> {
    if !(min_gap.is_finite() && min_gap > 0.0) {
        return Err(Error::Param(format!(
            "minimum gap must be positive, got {min_gap}"
        )));
    }
    let b = coefficient_b(params.epsilon)?;
    let r = params.reward_model.range();
    let denom = match exponent {
        GapExponent::Squared => min_gap * min_gap,
        GapExponent::Literal => min_gap,
    };
    Ok(2.0 * (b + 1.0).powi(2) * r * r / denom)
}

/// Upper bound on the total pulls GOLD needs to terminate:
/// `4 D3 n (ln(2 D3 n) + ln sqrt(pi^2 n / 6 delta)) + 2 (n - 1)`.
pub fn theorem3_total_pull_bound(min_gap: f64, params: &Params, n: usize) -> Result<f64> {
    theorem3_total_pull_bound_with(min_gap, params, n, GapExponent::Squared)
}

pub fn theorem3_total_pull_bound_with(
    min_gap: f64,
    params: &Params,
    n: usize,
    exponent: GapExponent,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Param("n must be at least 1".into()));
    }
    let d3 = theorem3_d3(min_gap, params, exponent)?;
    let nf = n as f64;
    let root = (PI * PI * nf / (6.0 * params.delta)).sqrt();
    Ok(4.0 * d3 * nf * (clamped_ln(2.0 * d3 * nf) + clamped_ln(root)) + 2.0 * (nf - 1.0))
}
