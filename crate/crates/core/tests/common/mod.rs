//! Helpers shared by the integration suites: a brute-force reading of the
//! outlier definitions that shares no code with the oracle, and an auditing
//! observer for GOLD runs.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use outlier_bandit::env::Environment;
use outlier_bandit::gold::{run_with, GoldOptions, GoldState, Ranking};
use outlier_bandit::model::{ArmSet, Params, RngSeed};
use rand::Rng;

/// Nearest-neighbor diamond of `i` inside `set`: the larger of the distances
/// to the closest member above and the closest member below (0 when absent).
pub fn diamond(i: usize, set: &[usize], y: &[f64]) -> f64 {
    let mut up = f64::INFINITY;
    let mut down = f64::INFINITY;
    for &k in set {
        if y[k] > y[i] {
            up = up.min(y[k] - y[i]);
        } else if y[k] < y[i] {
            down = down.min(y[i] - y[k]);
        }
    }
    let up = if up.is_finite() { up } else { 0.0 };
    let down = if down.is_finite() { down } else { 0.0 };
    up.max(down)
}

/// Smallest distance from `j` to a member of `set`; +inf when `set` is empty.
pub fn min_distance(j: usize, set: &[usize], y: &[f64]) -> f64 {
    set.iter()
        .map(|&k| (y[k] - y[j]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Both clauses of the definition for `group` against explicit sides, with
/// `rho` given in integer percent so the cardinality tests are exact.
pub fn satisfies(
    group: &[usize],
    upper: &[usize],
    lower: &[usize],
    y: &[f64],
    epsilon: f64,
    rho_pct: usize,
) -> bool {
    let n = y.len();
    let k = 1.0 + epsilon;
    for &j in group {
        let du = min_distance(j, upper, y);
        let dl = min_distance(j, lower, y);
        for &i in upper.iter().chain(lower) {
            let w = k * diamond(i, if upper.contains(&i) { upper } else { lower }, y);
            if !upper.is_empty() && !(du > w) {
                return false;
            }
            if !lower.is_empty() && !(dl > w) {
                return false;
            }
        }
    }
    let total = upper.len() + lower.len();
    let side_ok = |s: usize| s == 0 || 100 * s > (100 - rho_pct) * n;
    100 * total > rho_pct * n && side_ok(upper.len()) && side_ok(lower.len())
}

fn subsets(items: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    (0u32..1 << items.len()).map(move |mask| {
        items
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &a)| a)
            .collect()
    })
}

/// Exhaustive single-arm search over every pair of subsets of the arms
/// above and below `j`.
pub fn brute_single(j: usize, y: &[f64], epsilon: f64, rho_pct: usize) -> bool {
    let above: Vec<usize> = (0..y.len()).filter(|&i| y[i] > y[j]).collect();
    let below: Vec<usize> = (0..y.len()).filter(|&i| y[i] < y[j]).collect();
    for u in subsets(&above) {
        for l in subsets(&below) {
            if satisfies(&[j], &u, &l, y, epsilon, rho_pct) {
                return true;
            }
        }
    }
    false
}

/// Every group certified against its induced sides, found by enumerating
/// all subsets. Groups are sorted; the list is sorted.
pub fn brute_groups(y: &[f64], epsilon: f64, rho_pct: usize) -> Vec<Vec<usize>> {
    let n = y.len();
    let all: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    for g in subsets(&all) {
        if g.is_empty() || g.len() == n {
            continue;
        }
        let hi = g.iter().map(|&a| y[a]).fold(f64::NEG_INFINITY, f64::max);
        let lo = g.iter().map(|&a| y[a]).fold(f64::INFINITY, f64::min);
        let upper: Vec<usize> = (0..n).filter(|&i| y[i] > hi).collect();
        let lower: Vec<usize> = (0..n).filter(|&i| y[i] < lo).collect();
        if g.len() + upper.len() + lower.len() != n {
            continue;
        }
        if satisfies(&g, &upper, &lower, y, epsilon, rho_pct) {
            out.push(g);
        }
    }
    out.sort();
    out
}

/// Distinct means drawn from a mix of shapes so that certified arms occur:
/// uniform, one tight cluster with stray arms, or two clusters with arms
/// in between.
pub fn random_means<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let strays = rng.random_range(1..=n.div_ceil(3));
        let y: Vec<f64> = match rng.random_range(0..3) {
            0 => (0..n).map(|_| rng.random::<f64>()).collect(),
            1 => {
                let c = rng.random_range(0.0..0.7);
                let w = rng.random_range(0.01..0.2);
                let mut v: Vec<f64> = (0..n - strays)
                    .map(|_| c + w * rng.random::<f64>())
                    .collect();
                v.extend((0..strays).map(|_| rng.random::<f64>()));
                v
            }
            _ => {
                let w = rng.random_range(0.01..0.15);
                let mut v: Vec<f64> = (0..n - strays)
                    .map(|i| {
                        let base = if i % 2 == 0 { 0.05 } else { 0.8 };
                        base + w * rng.random::<f64>()
                    })
                    .collect();
                v.extend((0..strays).map(|_| rng.random_range(0.3..0.7)));
                v
            }
        };
        let mut s = y.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).all(|w| w[0] < w[1]) {
            return y;
        }
    }
}

/// Runs GOLD with pull logging and checks, after every pull and at the end:
/// the graph is complete once each arm has one sample, the edge count never
/// grows, terminated arms are never pulled again, S-scores are written once,
/// and `T` equals the sum of per-arm pulls. Returns the violations found.
pub fn audited_gold(
    arm_set: &ArmSet,
    params: &Params,
    seed: RngSeed,
    mut options: GoldOptions,
) -> (GoldState, Ranking, Vec<String>) {
    let n = arm_set.n();
    options.record_pulls = true;
    let mut env = Environment::new(arm_set, params.reward_model, seed).unwrap();
    let mut violations = Vec::new();
    let mut prev_edges = usize::MAX;
    let mut prev_s: Vec<Option<u64>> = vec![None; n];
    let mut observer = |state: &GoldState, arm: usize, _removed: usize| {
        let t = state.round();
        let edges = state.graph().edge_count();
        if t == n as u64 && edges != n * (n - 1) / 2 {
            violations.push(format!("graph not complete at T={t}: {edges} edges"));
        }
        if edges > prev_edges {
            violations.push(format!("edge count grew at T={t}: {prev_edges} -> {edges}"));
        }
        prev_edges = edges;
        if t > n as u64 && prev_s[arm].is_some() {
            violations.push(format!("terminated arm {arm} pulled at T={t}"));
        }
        for (a, (&now, before)) in state.s_scores().iter().zip(prev_s.iter_mut()).enumerate() {
            if before.is_some() && now != *before {
                violations.push(format!("S[{a}] rewritten at T={t}"));
            }
            if now.is_some() != state.is_terminated(a) {
                violations.push(format!("S[{a}] set without termination at T={t}"));
            }
            *before = now;
        }
    };
    let (state, ranking) = run_with(arm_set, params, &mut env, &options, &mut observer).unwrap();

    let log = state.pull_log().unwrap();
    let total: u64 = state.stats().iter().map(|s| s.pulls).sum();
    if total != state.round() || log.len() as u64 != state.round() {
        violations.push(format!(
            "T={} but sum of pulls {total}, log length {}",
            state.round(),
            log.len()
        ));
    }
    let mut counts = vec![0u64; n];
    for (k, rec) in log.iter().enumerate() {
        if rec.round != k as u64 + 1 {
            violations.push(format!("log entry {k} has round {}", rec.round));
            break;
        }
        counts[rec.arm] += 1;
        if let Some(s) = state.s_scores()[rec.arm] {
            if rec.round > s {
                violations.push(format!(
                    "arm {} pulled at {} after S={s}",
                    rec.arm, rec.round
                ));
            }
        }
    }
    for (a, (&c, st)) in counts.iter().zip(state.stats()).enumerate() {
        if c != st.pulls {
            violations.push(format!("arm {a}: {c} logged pulls, {} counted", st.pulls));
        }
    }
    (state, ranking, violations)
}

/// Spearman rank correlation of two samples without ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
