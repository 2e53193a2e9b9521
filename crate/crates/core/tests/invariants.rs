mod common;

use common::{audited_gold, brute_groups, brute_single, random_means};
use outlier_bandit::bounds::{coefficient_b, delta_prime, ucb_radius_bounded, BoundContext};
use outlier_bandit::env::{generate, Environment, OutlierType, RewardSource, SyntheticSpec};
use outlier_bandit::gold::{GoldOptions, GoldState};
use outlier_bandit::graph::PruneMode;
use outlier_bandit::model::{ArmSet, ArmStats, Params, RewardModel, RngSeed};
use outlier_bandit::oracle::{check_group, check_single, label_all};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const UNIT: RewardModel = RewardModel::Bounded { lo: 0.0, hi: 1.0 };

/// Means at least `gap` apart, shuffled by the proptest-chosen permutation.
fn spaced_means() -> impl Strategy<Value = Vec<f64>> {
    (4usize..=14, 0.04f64..0.065, any::<u64>()).prop_map(|(n, gap, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..n).map(|i| 0.05 + gap * i as f64).collect();
        rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut rng);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gold_run_invariants_hold(
        means in spaced_means(),
        eps in prop::sample::select(vec![1.0, 2.5, 5.0]),
        bernoulli in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let model = if bernoulli { RewardModel::Bernoulli } else { UNIT };
        let arms = ArmSet::with_means(means).unwrap();
        let params = Params::new(eps, 0.8, 0.1, model).unwrap();
        let options = GoldOptions { max_pulls: Some(300_000), ..GoldOptions::default() };
        let (state, ranking, violations) = audited_gold(&arms, &params, RngSeed(seed), options);
        prop_assert!(violations.is_empty(), "{violations:?}");
        prop_assert!(state.is_finished() || state.is_truncated());
        prop_assert_eq!(ranking.order.len(), arms.n());
    }

    #[test]
    fn incremental_and_full_scan_agree(
        means in spaced_means(),
        seed in any::<u64>(),
    ) {
        let arms = ArmSet::with_means(means).unwrap();
        let params = Params::new(2.5, 0.8, 0.1, RewardModel::Bernoulli).unwrap();
        let run = |mode| {
            let options = GoldOptions {
                prune_mode: mode,
                max_pulls: Some(60_000),
                record_pulls: true,
                ..GoldOptions::default()
            };
            let mut env = Environment::new(&arms, params.reward_model, RngSeed(seed)).unwrap();
            let mut edges = Vec::new();
            let mut obs = |s: &GoldState, _: usize, _: usize| edges.push(s.graph().edge_count());
            let mut state = GoldState::init_observed(&arms, &params, &mut env, &options, &mut obs).unwrap();
            state.run_to_end(&mut env, &mut obs).unwrap();
            let final_edges: Vec<_> = state.graph().edges().collect();
            (state.s_scores().to_vec(), state.round(), final_edges, edges)
        };
        let inc = run(PruneMode::Incremental);
        let full = run(PruneMode::FullScan);
        prop_assert_eq!(inc, full);
    }

    #[test]
    fn oracle_agrees_with_exhaustive_search(
        n in 3usize..=9,
        seed in any::<u64>(),
        eps in prop::sample::select(vec![0.5, 1.0, 2.5, 5.0]),
        rho_pct in prop::sample::select(vec![60usize, 70, 75, 80, 90]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_means(&mut rng, n);
        let arms = ArmSet::with_means(y.clone()).unwrap();
        let params = Params::new(eps, rho_pct as f64 / 100.0, 0.1, RewardModel::Bernoulli).unwrap();
        for j in 0..n {
            prop_assert_eq!(
                check_single(j, &arms, &params).unwrap().certified,
                brute_single(j, &y, eps, rho_pct),
                "arm {}", j
            );
        }
        let mut got: Vec<Vec<usize>> = label_all(&arms, &params).unwrap().into_iter().map(|v| v.group).collect();
        got.sort();
        prop_assert_eq!(got, brute_groups(&y, eps, rho_pct));
    }

    #[test]
    fn bounded_radius_covers_true_mean(seed in any::<u64>(), mean in 0.05f64..0.95) {
        // delta' large enough (about 0.3) that misses would show up.
        let params = Params::new(1.0, 0.9, 0.99, UNIT).unwrap();
        let ctx = BoundContext::new(params, 2, 1).unwrap();
        let dp = delta_prime(&ctx);
        let arms = ArmSet::with_means(vec![mean, 0.5]).unwrap();
        let mut env = Environment::new(&arms, UNIT, RngSeed(seed)).unwrap();
        let trials = 2_000;
        let mut misses = 0;
        for _ in 0..trials {
            let mut st = ArmStats::default();
            for _ in 0..8 {
                st = outlier_bandit::model::update_stats(st, env.pull(0).unwrap(), &UNIT).unwrap();
            }
            let beta = ucb_radius_bounded(&st, &ctx).unwrap();
            misses += usize::from((st.mean - mean).abs() > beta);
        }
        let rate = misses as f64 / trials as f64;
        let slack = 3.0 * (dp * (1.0 - dp) / trials as f64).sqrt();
        prop_assert!(rate <= dp + slack, "miss rate {rate} vs delta' {dp}");
    }
}

#[test]
fn union_bound_stays_below_delta() {
    for n in [2usize, 20, 400] {
        for delta in [0.01, 0.1, 0.9] {
            let p = Params::new(5.0, 0.9, delta, RewardModel::Bernoulli).unwrap();
            let total: f64 = (1..=1_000_000u64)
                .map(|t| n as f64 * delta_prime(&BoundContext::new(p, n, t).unwrap()))
                .sum();
            assert!(total < delta, "n={n} delta={delta}: {total}");
        }
    }
}

#[test]
fn coefficient_exceeds_one_and_decreases() {
    let grid: Vec<f64> = (0..200).map(|i| 0.065 + 0.05 * i as f64).collect();
    let bs: Vec<f64> = grid.iter().map(|&e| coefficient_b(e).unwrap()).collect();
    assert!(bs.iter().all(|&b| b > 1.0));
    assert!(bs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn generated_instances_certify_their_injected_group() {
    for outlier_type in [OutlierType::UpperSide, OutlierType::Intermediate] {
        for seed in 0..25 {
            let spec = SyntheticSpec::new(30, 2.5, 0.9, outlier_type, RngSeed(seed));
            let inst = generate(&spec).unwrap();
            let params = Params::new(2.5, 0.9, 0.1, RewardModel::Bernoulli).unwrap();
            let v = check_group(&inst.outliers, &inst.arm_set, &params).unwrap();
            assert!(
                v.certified,
                "{outlier_type} seed {seed}: {:?}",
                v.failed_constraint
            );
            let mut sorted = inst.arm_set.true_means().unwrap().to_vec();
            sorted.sort_by(f64::total_cmp);
            assert!(sorted.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
