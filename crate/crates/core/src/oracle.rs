//! Exact-mean certification of outlier arms and outlier groups.
//!
//! Given true means, an arm group `G` is an `(eps, rho)`-outlier group when,
//! with `U` the arms above it and `L` the arms below it,
//!
//! * every gap from the group to `U` (and to `L`) exceeds `(1 + eps)` times
//!   the neighborhood distance of every arm in `U` and in `L`, and
//! * `|U| + |L| > rho n`, and each side is either empty or larger than
//!   `(1 - rho) n`.
//!
//! All inequalities are strict. Minima over an empty side are `+inf`, so the
//! conditions that quantify over an empty side hold vacuously.
//!
//! Within a sorted order the neighborhood distance of an arm in a contiguous
//! set is the larger of its two adjacent gaps, so the largest neighborhood
//! distance of a contiguous set is its largest adjacent gap. The routines
//! below work on that representation; the definitional forms live in
//! [`neighbor_distances`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmSet, Params};

/// Distances from an arm to its nearest strictly higher and strictly lower
/// neighbors within a reference set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborDistances {
    /// Gap to the nearest strictly greater mean, 0 if there is none.
    pub upper: f64,
    /// Gap to the nearest strictly smaller mean, 0 if there is none.
    pub lower: f64,
    /// `max(upper, lower)`.
    pub diamond: f64,
}

/// Nearest-neighbor distances of arm `i` against `reference \ {i}`.
pub fn neighbor_distances(
    i: usize,
    reference: &[usize],
    means: &[f64],
) -> Result<NeighborDistances> {
    if i >= means.len() {
        return Err(Error::Input(format!("arm {i} out of range")));
    }
    let yi = means[i];
    let mut upper = f64::INFINITY;
    let mut lower = f64::INFINITY;
    for &r in reference {
        let yr = *means
            .get(r)
            .ok_or_else(|| Error::Input(format!("arm {r} out of range")))?;
        if r == i {
            continue;
        }
        if yr == yi {
            return Err(Error::Input(format!(
                "arms {i} and {r} share the mean {yi}; distinct means are required"
            )));
        }
        if yr > yi {
            upper = upper.min(yr - yi);
        } else {
            lower = lower.min(yi - yr);
        }
    }
    let upper = if upper.is_finite() { upper } else { 0.0 };
    let lower = if lower.is_finite() { lower } else { 0.0 };
    Ok(NeighborDistances {
        upper,
        lower,
        diamond: upper.max(lower),
    })
}

/// Which clause of the outlier definition failed first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// The group together with the arms above and below it does not cover
    /// every arm: the group is not contiguous in sorted-mean order.
    Partition,
    /// gap to `U` vs. neighborhood distances in `U`
    C1a,
    /// gap to `U` vs. neighborhood distances in `L`
    C1b,
    /// gap to `L` vs. neighborhood distances in `U`
    C1c,
    /// gap to `L` vs. neighborhood distances in `L`
    C1d,
    #[serde(rename = "C2-total")]
    C2Total,
    #[serde(rename = "C2-upper")]
    C2Upper,
    #[serde(rename = "C2-lower")]
    C2Lower,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Constraint::Partition => "partition",
            Constraint::C1a => "C1a",
            Constraint::C1b => "C1b",
            Constraint::C1c => "C1c",
            Constraint::C1d => "C1d",
            Constraint::C2Total => "C2-total",
            Constraint::C2Upper => "C2-upper",
            Constraint::C2Lower => "C2-lower",
        };
        f.write_str(s)
    }
}

/// The quantities the separation clauses compare. `None` marks an empty side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparationMargins {
    /// Smallest gap from any group member to the upper side.
    pub upper_gap: Option<f64>,
    /// Smallest gap from any group member to the lower side.
    pub lower_gap: Option<f64>,
    /// Largest neighborhood distance within the upper side.
    pub upper_spread: Option<f64>,
    /// Largest neighborhood distance within the lower side.
    pub lower_spread: Option<f64>,
}

impl SeparationMargins {
    /// `min(gaps) - (1 + eps) max(spreads)`: positive iff all four
    /// separation clauses hold.
    pub fn binding_margin(&self, epsilon: f64) -> f64 {
        let gap = self
            .upper_gap
            .unwrap_or(f64::INFINITY)
            .min(self.lower_gap.unwrap_or(f64::INFINITY));
        let spread = self
            .upper_spread
            .unwrap_or(0.0)
            .max(self.lower_spread.unwrap_or(0.0));
        gap - (1.0 + epsilon) * spread
    }
}

/// A candidate group with the normal sides it was checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierVerdict {
    pub group: Vec<usize>,
    pub upper_set: Vec<usize>,
    pub lower_set: Vec<usize>,
    pub certified: bool,
    pub failed_constraint: Option<Constraint>,
    pub margins: SeparationMargins,
}

/// Arms in ascending mean order with their gaps.
struct SortedMeans {
    order: Vec<usize>,
    pos: Vec<usize>,
    y: Vec<f64>,
    /// `gaps[p] = y[p + 1] - y[p]`
    gaps: Vec<f64>,
}

impl SortedMeans {
    fn new(arm_set: &ArmSet) -> Result<Self> {
        let order = arm_set.sorted_distinct()?;
        let means = arm_set.require_means()?;
        let mut pos = vec![0; order.len()];
        for (p, &a) in order.iter().enumerate() {
            pos[a] = p;
        }
        let y: Vec<f64> = order.iter().map(|&a| means[a]).collect();
        let gaps = y.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(SortedMeans {
            order,
            pos,
            y,
            gaps,
        })
    }

    fn n(&self) -> usize {
        self.order.len()
    }

    fn max_gap(&self, from: usize, to: usize) -> f64 {
        // Largest adjacent gap inside positions [from, to]; 0 for a singleton.
        self.gaps[from..to].iter().copied().fold(0.0, f64::max)
    }

    fn arms(&self, from: usize, to_exclusive: usize) -> Vec<usize> {
        let mut v = self.order[from..to_exclusive].to_vec();
        v.sort_unstable();
        v
    }
}

/// Separation and cardinality check of one (group, upper, lower) split.
/// `upper`/`lower` are inclusive position ranges; the group sits between.
struct Split {
    upper_gap: Option<f64>,
    lower_gap: Option<f64>,
    upper_spread: Option<f64>,
    lower_spread: Option<f64>,
    upper_len: usize,
    lower_len: usize,
}

impl Split {
    fn first_failure(&self, params: &Params, n: usize) -> Option<Constraint> {
        let k = 1.0 + params.epsilon;
        let du = self.upper_gap.unwrap_or(f64::INFINITY);
        let dl = self.lower_gap.unwrap_or(f64::INFINITY);
        if let Some(wu) = self.upper_spread {
            if !(du > k * wu) {
                return Some(Constraint::C1a);
            }
        }
        if let Some(wl) = self.lower_spread {
            if !(du > k * wl) {
                return Some(Constraint::C1b);
            }
        }
        if let Some(wu) = self.upper_spread {
            if !(dl > k * wu) {
                return Some(Constraint::C1c);
            }
        }
        if let Some(wl) = self.lower_spread {
            if !(dl > k * wl) {
                return Some(Constraint::C1d);
            }
        }
        let budget = params.outlier_budget(n);
        if !((self.upper_len + self.lower_len) as f64 > params.normal_quota(n)) {
            return Some(Constraint::C2Total);
        }
        if !(self.upper_len == 0 || self.upper_len as f64 > budget) {
            return Some(Constraint::C2Upper);
        }
        if !(self.lower_len == 0 || self.lower_len as f64 > budget) {
            return Some(Constraint::C2Lower);
        }
        None
    }

    fn margins(&self) -> SeparationMargins {
        SeparationMargins {
            upper_gap: self.upper_gap,
            lower_gap: self.lower_gap,
            upper_spread: self.upper_spread,
            lower_spread: self.lower_spread,
        }
    }
}

/// The split induced by the group occupying sorted positions `[a, b]`.
fn interval_split(s: &SortedMeans, a: usize, b: usize) -> Split {
    let n = s.n();
    let (upper_gap, upper_spread) = if b + 1 < n {
        (Some(s.y[b + 1] - s.y[b]), Some(s.max_gap(b + 1, n - 1)))
    } else {
        (None, None)
    };
    let (lower_gap, lower_spread) = if a > 0 {
        (Some(s.y[a] - s.y[a - 1]), Some(s.max_gap(0, a - 1)))
    } else {
        (None, None)
    };
    Split {
        upper_gap,
        lower_gap,
        upper_spread,
        lower_spread,
        upper_len: n - 1 - b,
        lower_len: a,
    }
}

fn interval_verdict(s: &SortedMeans, a: usize, b: usize, params: &Params) -> OutlierVerdict {
    let split = interval_split(s, a, b);
    let failed = split.first_failure(params, s.n());
    OutlierVerdict {
        group: s.arms(a, b + 1),
        upper_set: s.arms(b + 1, s.n()),
        lower_set: s.arms(0, a),
        certified: failed.is_none(),
        failed_constraint: failed,
        margins: split.margins(),
    }
}

fn validate_group(group: &[usize], n: usize) -> Result<Vec<usize>> {
    if group.is_empty() {
        return Err(Error::Input("outlier group must be non-empty".into()));
    }
    let mut g = group.to_vec();
    g.sort_unstable();
    g.dedup();
    if g.len() != group.len() {
        return Err(Error::Input("outlier group lists an arm twice".into()));
    }
    if let Some(&bad) = g.iter().find(|&&a| a >= n) {
        return Err(Error::Input(format!("arm {bad} out of range for n = {n}")));
    }
    if g.len() >= n {
        return Err(Error::Input(
            "outlier group must be a proper subset of the arms".into(),
        ));
    }
    Ok(g)
}

/// Checks whether `group` is an `(eps, rho)`-outlier group. The upper and
/// lower sides are the arms above the group's maximum and below its minimum.
pub fn check_group(group: &[usize], arm_set: &ArmSet, params: &Params) -> Result<OutlierVerdict> {
    let s = SortedMeans::new(arm_set)?;
    let g = validate_group(group, s.n())?;
    let a = g.iter().map(|&x| s.pos[x]).min().unwrap();
    let b = g.iter().map(|&x| s.pos[x]).max().unwrap();
    if b - a + 1 != g.len() {
        let mut v = interval_verdict(&s, a, b, params);
        v.group = g;
        v.certified = false;
        v.failed_constraint = Some(Constraint::Partition);
        return Ok(v);
    }
    Ok(interval_verdict(&s, a, b, params))
}

/// Checks whether arm `j` is an `(eps, rho)`-outlier arm: whether some
/// upper side drawn from the arms above `j` and lower side drawn from the
/// arms below `j` satisfy the separation and cardinality clauses.
///
/// Any witnessing side can be filled in to the contiguous run between its
/// extremes without breaking a clause (filling keeps the gap to `j` and can
/// only shrink neighborhood distances), and then grown away from `j` while
/// every new adjacent gap stays below the separation threshold. The search
/// therefore enumerates the side endpoints nearest `j` and grows each side
/// maximally, which is exact.
///
/// When the full complement split certifies `j`, that split is returned.
/// When nothing certifies, the full complement split's verdict (with its
/// first failing clause) is returned.
pub fn check_single(j: usize, arm_set: &ArmSet, params: &Params) -> Result<OutlierVerdict> {
    let s = SortedMeans::new(arm_set)?;
    validate_group(&[j], s.n())?;
    let n = s.n();
    let p = s.pos[j];
    let full = interval_verdict(&s, p, p, params);
    if full.certified {
        return Ok(full);
    }
    let k = 1.0 + params.epsilon;
    let upper_starts = std::iter::once(None).chain((p + 1..n).map(Some));
    for ua in upper_starts {
        let du = ua.map(|a| s.y[a] - s.y[p]);
        let lower_ends = std::iter::once(None).chain((0..p).rev().map(Some));
        for le in lower_ends {
            let dl = le.map(|e| s.y[p] - s.y[e]);
            if du.is_none() && dl.is_none() {
                continue;
            }
            let d = du.unwrap_or(f64::INFINITY).min(dl.unwrap_or(f64::INFINITY));
            let upper = ua.map(|a| {
                let mut c = a;
                while c + 1 < n && d > k * s.gaps[c] {
                    c += 1;
                }
                (a, c)
            });
            let lower = le.map(|e| {
                let mut f = e;
                while f > 0 && d > k * s.gaps[f - 1] {
                    f -= 1;
                }
                (f, e)
            });
            let split = Split {
                upper_gap: du,
                lower_gap: dl,
                upper_spread: upper.map(|(a, c)| s.max_gap(a, c)),
                lower_spread: lower.map(|(f, e)| s.max_gap(f, e)),
                upper_len: upper.map_or(0, |(a, c)| c - a + 1),
                lower_len: lower.map_or(0, |(f, e)| e - f + 1),
            };
            if split.first_failure(params, n).is_none() {
                return Ok(OutlierVerdict {
                    group: vec![j],
                    upper_set: upper.map_or_else(Vec::new, |(a, c)| s.arms(a, c + 1)),
                    lower_set: lower.map_or_else(Vec::new, |(f, e)| s.arms(f, e + 1)),
                    certified: true,
                    failed_constraint: None,
                    margins: split.margins(),
                });
            }
        }
    }
    Ok(full)
}

/// Every certified outlier group. Candidates are the contiguous runs of the
/// sorted-mean order smaller than `n (1 - rho)`, in order of their lowest
/// position then length.
pub fn label_all(arm_set: &ArmSet, params: &Params) -> Result<Vec<OutlierVerdict>> {
    let s = SortedMeans::new(arm_set)?;
    let n = s.n();
    let budget = params.outlier_budget(n);
    // prefix_max[e] = largest gap among positions [0, e]; suffix_max[a] among [a, n-1].
    let mut prefix_max = vec![0.0_f64; n];
    for e in 1..n {
        prefix_max[e] = prefix_max[e - 1].max(s.gaps[e - 1]);
    }
    let mut suffix_max = vec![0.0_f64; n];
    for a in (0..n.saturating_sub(1)).rev() {
        suffix_max[a] = suffix_max[a + 1].max(s.gaps[a]);
    }
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            let len = b - a + 1;
            if len as f64 >= budget || len >= n {
                break;
            }
            let split = Split {
                upper_gap: (b + 1 < n).then(|| s.y[b + 1] - s.y[b]),
                lower_gap: (a > 0).then(|| s.y[a] - s.y[a - 1]),
                upper_spread: (b + 1 < n).then(|| suffix_max[b + 1]),
                lower_spread: (a > 0).then(|| prefix_max[a - 1]),
                upper_len: n - 1 - b,
                lower_len: a,
            };
            if split.first_failure(params, n).is_none() {
                out.push(OutlierVerdict {
                    group: s.arms(a, b + 1),
                    upper_set: s.arms(b + 1, n),
                    lower_set: s.arms(0, a),
                    certified: true,
                    failed_constraint: None,
                    margins: split.margins(),
                });
            }
        }
    }
    Ok(out)
}

/// Whether `ranking` puts every member of every certified group ahead of
/// all arms of that group's upper and lower sides.
pub fn validate_ranking(ranking: &[usize], verdicts: &[OutlierVerdict]) -> bool {
    let size = ranking.iter().copied().max().map_or(0, |m| m + 1);
    let mut rank = vec![usize::MAX; size];
    for (r, &arm) in ranking.iter().enumerate() {
        rank[arm] = r;
    }
    let rank_of = |a: usize| rank.get(a).copied().unwrap_or(usize::MAX);
    verdicts.iter().filter(|v| v.certified).all(|v| {
        let worst_member = v.group.iter().map(|&a| rank_of(a)).max().unwrap_or(0);
        if worst_member == usize::MAX {
            return false;
        }
        v.upper_set
            .iter()
            .chain(&v.lower_set)
            .all(|&i| rank_of(i) > worst_member && rank_of(i) != usize::MAX)
    })
}

/// Union of the members of all certified groups, ascending.
pub fn certified_union(verdicts: &[OutlierVerdict]) -> Vec<usize> {
    let mut all: Vec<usize> = verdicts
        .iter()
        .filter(|v| v.certified)
        .flat_map(|v| v.group.iter().copied())
        .collect();
    all.sort_unstable();
    all.dedup();
    all
}
