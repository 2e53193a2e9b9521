//! Generic outlier-arm detection in multi-armed bandits.
//!
//! Arms whose expected rewards sit unusually far from the rest of the
//! distribution, relative to how tightly the other arms are packed, are
//! *outlier arms*. This crate provides:
//!
//! * [`oracle`]: exact certification of outlier arms and groups from known
//!   means, and validation of a ranking against those certificates;
//! * [`gold`]: the GOLD adaptive pulling algorithm, which ranks arms so that
//!   certified outliers come first with probability at least `1 - delta`;
//! * [`bounds`]: the confidence radii it relies on and analytic pull-count
//!   bounds;
//! * [`graph`]: the neighborhood graph and its communities;
//! * [`baseline`]: a round-robin k-sigma baseline;
//! * [`env`]: simulated arms, a synthetic instance generator and a
//!   means-file format;
//! * [`experiment`]: a seeded, replayable experiment harness.
//!
//! ```
//! use outlier_bandit::{env::Environment, gold, model::*, oracle};
//!
//! let mut means: Vec<f64> = (0..9).map(|i| 0.10 + 0.01 * i as f64).collect();
//! means.push(0.95);
//! let arms = ArmSet::with_means(means).unwrap();
//! let params = Params::new(5.0, 0.8, 0.1, RewardModel::Bernoulli).unwrap();
//!
//! let verdicts = oracle::label_all(&arms, &params).unwrap();
//! assert_eq!(verdicts[0].group, vec![9]);
//!
//! let mut env = Environment::new(&arms, params.reward_model, RngSeed(1)).unwrap();
//! let (state, ranking) = gold::run(&arms, &params, &mut env, None).unwrap();
//! assert!(state.is_finished());
//! assert!(oracle::validate_ranking(&ranking.order, &verdicts));
//! ```

// NaN inputs must fail validation, so range checks are written negated.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod bounds;
pub mod env;
pub mod error;
pub mod experiment;
pub mod gold;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod special;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/outliers.md")]
    mod outliers {}
    #[doc = include_str!("../../../book/src/confidence.md")]
    mod confidence {}
    #[doc = include_str!("../../../book/src/gold.md")]
    mod gold {}
    #[doc = include_str!("../../../book/src/baseline.md")]
    mod baseline {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

pub use error::{Error, Result};
