//! Reward environments, the synthetic instance generator and means-file
//! ingestion.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmSet, Params, RewardModel, RngSeed};
use crate::oracle::check_group;

/// Anything arms can be pulled from.
pub trait RewardSource {
    fn n_arms(&self) -> usize;
    fn model(&self) -> RewardModel;
    fn pull(&mut self, arm: usize) -> Result<f64>;
}

/// Default half-width of the uniform noise under the bounded model.
pub const DEFAULT_NOISE_WIDTH: f64 = 0.1;

/// Simulated arms with known means. Each arm draws from its own stream,
/// seeded from the trial seed and the arm index, so an arm's reward
/// sequence does not depend on the order in which arms are pulled.
#[derive(Debug, Clone)]
pub struct Environment {
    means: Vec<f64>,
    model: RewardModel,
    noise_width: f64,
    streams: Vec<ChaCha8Rng>,
}

impl Environment {
    pub fn new(arm_set: &ArmSet, model: RewardModel, seed: RngSeed) -> Result<Self> {
        let means = arm_set.require_means()?.to_vec();
        arm_set.check_support(&model)?;
        let streams = (0..means.len())
            .map(|i| ChaCha8Rng::seed_from_u64(seed.for_arm(i)))
            .collect();
        Ok(Environment {
            means,
            model,
            noise_width: DEFAULT_NOISE_WIDTH,
            streams,
        })
    }

    /// Half-width `w` of the bounded model's noise. Arm `i` draws uniformly
    /// from `[y_i - h, y_i + h]` with `h = min(w, y_i - lo, hi - y_i)`, which
    /// stays inside the support without moving the mean.
    pub fn with_noise_width(mut self, width: f64) -> Result<Self> {
        if !(width.is_finite() && width >= 0.0) {
            return Err(Error::Param(format!(
                "noise width must be non-negative, got {width}"
            )));
        }
        self.noise_width = width;
        Ok(self)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }
}

impl RewardSource for Environment {
    fn n_arms(&self) -> usize {
        self.means.len()
    }

    fn model(&self) -> RewardModel {
        self.model
    }

    #[inline]
    fn pull(&mut self, arm: usize) -> Result<f64> {
        let n = self.means.len();
        let (y, rng) = match (self.means.get(arm), self.streams.get_mut(arm)) {
            (Some(y), Some(rng)) => (*y, rng),
            _ => return Err(Error::Input(format!("arm {arm} out of range for n = {n}"))),
        };
        let u: f64 = rng.random();
        Ok(match self.model {
            RewardModel::Bernoulli => {
                if u < y {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::Bounded { lo, hi } => {
                let h = self.noise_width.min(y - lo).min(hi - y);
                (y + h * (2.0 * u - 1.0)).clamp(lo, hi)
            }
        })
    }
}

/// Where the injected outliers sit relative to the normal arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierType {
    /// Outliers above every normal arm; no upper side.
    UpperSide,
    /// Outliers between two normal bands.
    Intermediate,
}

impl std::fmt::Display for OutlierType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutlierType::UpperSide => "upper-side",
            OutlierType::Intermediate => "intermediate",
        })
    }
}

impl std::str::FromStr for OutlierType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper-side" | "upper" | "upper_side" => Ok(OutlierType::UpperSide),
            "intermediate" | "middle" => Ok(OutlierType::Intermediate),
            _ => Err(Error::Param(format!(
                "unknown outlier type {s:?} (expected upper-side or intermediate)"
            ))),
        }
    }
}

/// Largest mean an injected outlier may take.
const OUTLIER_CEILING: f64 = 0.99;

/// Recipe for a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub epsilon: f64,
    pub rho: f64,
    pub outlier_type: OutlierType,
    /// Defaults to the largest count below `n (1 - rho)`, at least 1.
    pub outlier_count: Option<usize>,
    pub seed: RngSeed,
    pub max_attempts: u64,
    /// Interval the normal means are drawn from. For intermediate instances
    /// this is the lower band; the upper band is its mirror image about 0.5.
    /// Defaults to `[0.05, 0.65]` (upper-side) and `[0.05, 0.20]`
    /// (intermediate).
    pub normal_band: Option<(f64, f64)>,
}

impl SyntheticSpec {
    pub fn new(n: usize, epsilon: f64, rho: f64, outlier_type: OutlierType, seed: RngSeed) -> Self {
        SyntheticSpec {
            n,
            epsilon,
            rho,
            outlier_type,
            outlier_count: None,
            seed,
            max_attempts: 100_000,
            normal_band: None,
        }
    }

    pub fn with_outlier_count(mut self, count: usize) -> Self {
        self.outlier_count = Some(count);
        self
    }

    pub fn outlier_count(&self) -> usize {
        self.outlier_count.unwrap_or_else(|| {
            let budget = crate::model::snap(self.n as f64 * (1.0 - self.rho));
            (budget.ceil() as usize).saturating_sub(1).max(1)
        })
    }

    pub fn band(&self) -> (f64, f64) {
        self.normal_band.unwrap_or(match self.outlier_type {
            OutlierType::UpperSide => (0.05, 0.65),
            OutlierType::Intermediate => (0.05, 0.20),
        })
    }

    fn params(&self) -> Result<Params> {
        Params::new(self.epsilon, self.rho, 0.1, RewardModel::Bernoulli)
    }
}

/// A generated instance and the group that was injected into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub arm_set: ArmSet,
    /// Injected arm ids, ascending.
    pub outliers: Vec<usize>,
    /// Attempts the rejection loop used.
    pub attempts: u64,
}

/// Draws normal means, places the outlier group in the room the separation
/// clauses leave, and retries until the group certifies.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    let params = spec.params()?;
    let n = spec.n;
    let count = spec.outlier_count();
    if n < 3 {
        return Err(Error::Param(format!(
            "synthetic instances need n >= 3, got {n}"
        )));
    }
    if count == 0 || count + 2 > n {
        return Err(Error::Param(format!(
            "outlier count {count} leaves too few normal arms for n = {n}"
        )));
    }
    let budget = params.outlier_budget(n);
    if !((count as f64) < budget) {
        return Err(Error::Param(format!(
            "a group of {count} outliers can never certify for n = {n}, rho = {}: \
             it must be smaller than n (1 - rho) = {budget}",
            spec.rho
        )));
    }
    let (band_lo, band_hi) = spec.band();
    if !(0.0 <= band_lo && band_lo < band_hi && band_hi <= 1.0) {
        return Err(Error::Param(format!(
            "normal band [{band_lo}, {band_hi}] must be a sub-interval of [0, 1]"
        )));
    }
    if spec.outlier_type == OutlierType::Intermediate && band_hi >= 0.5 {
        return Err(Error::Param(
            "intermediate normal band must lie below 0.5 so its mirror is disjoint".into(),
        ));
    }
    if spec.max_attempts == 0 {
        return Err(Error::Param("max_attempts must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.derive(0x6E65_7261_7465).0);
    let k = 1.0 + spec.epsilon;
    let normals = n - count;
    let mut last_reason = String::from("no attempt made");

    for attempt in 1..=spec.max_attempts {
        let draw_band = |rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64| -> Vec<f64> {
            let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(lo..hi)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let max_gap = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);

        let (normal_means, window) = match spec.outlier_type {
            OutlierType::UpperSide => {
                let v = draw_band(&mut rng, normals, band_lo, band_hi);
                let spread = max_gap(&v);
                let lo = v[v.len() - 1] + k * spread;
                (v, (lo, OUTLIER_CEILING))
            }
            OutlierType::Intermediate => {
                let below = normals / 2;
                let lower = draw_band(&mut rng, below, band_lo, band_hi);
                let upper = draw_band(&mut rng, normals - below, 1.0 - band_hi, 1.0 - band_lo);
                let spread = max_gap(&lower).max(max_gap(&upper));
                let window = (lower[lower.len() - 1] + k * spread, upper[0] - k * spread);
                let mut v = lower;
                v.extend(upper);
                (v, window)
            }
        };
        if !(window.0 < window.1) {
            last_reason = format!(
                "no room for the outlier group: window [{:.4}, {:.4}] is empty",
                window.0, window.1
            );
            continue;
        }
        let outlier_means: Vec<f64> = (0..count)
            .map(|_| rng.random_range(window.0..window.1))
            .collect();

        // Shuffle arm ids so the injected group is not always at the end.
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut rng);
        let mut means = vec![0.0; n];
        for (slot, &y) in ids.iter().zip(normal_means.iter().chain(&outlier_means)) {
            means[*slot] = y;
        }
        let mut outliers = ids[normals..].to_vec();
        outliers.sort_unstable();

        let arm_set = ArmSet::with_means(means)?;
        if arm_set.sorted_distinct().is_err() {
            last_reason = "duplicate means drawn".into();
            continue;
        }
        let verdict = check_group(&outliers, &arm_set, &params)?;
        let sides_ok = match spec.outlier_type {
            OutlierType::UpperSide => verdict.upper_set.is_empty(),
            OutlierType::Intermediate => {
                !verdict.upper_set.is_empty() && !verdict.lower_set.is_empty()
            }
        };
        if verdict.certified && sides_ok {
            return Ok(SyntheticInstance {
                arm_set,
                outliers,
                attempts: attempt,
            });
        }
        last_reason = match verdict.failed_constraint {
            Some(c) => format!("injected group failed constraint {c}"),
            None => "injected group has the wrong side structure".into(),
        };
    }
    Err(Error::Generation {
        attempts: spec.max_attempts,
        reason: last_reason,
    })
}

/// Parses an arm-means table: one `arm_id,mean` record per line, ids
/// `0..n` each exactly once, `#` comment lines and blank lines ignored.
/// Duplicate means are rejected.
pub fn parse_means(text: &str, model: &RewardModel, source: &str) -> Result<ArmSet> {
    let err = |line: usize, message: String| Error::Ingest {
        path: source.to_string(),
        line,
        message,
    };
    let mut records: Vec<(usize, f64, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, mean) = line
            .split_once(',')
            .ok_or_else(|| err(line_no, format!("expected `arm_id,mean`, got {line:?}")))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|e| err(line_no, format!("bad arm id {:?}: {e}", id.trim())))?;
        let mean: f64 = mean
            .trim()
            .parse()
            .map_err(|e| err(line_no, format!("bad mean {:?}: {e}", mean.trim())))?;
        if !model.admits_mean(mean) {
            return Err(err(
                line_no,
                format!(
                    "mean {mean} lies outside the reward support {:?}",
                    model.bounds()
                ),
            ));
        }
        records.push((id, mean, line_no));
    }
    if records.is_empty() {
        return Err(err(0, "no arm records found".into()));
    }
    let n = records.len();
    let mut means = vec![f64::NAN; n];
    let mut seen_at = vec![0usize; n];
    for &(id, mean, line_no) in &records {
        if id >= n {
            return Err(err(
                line_no,
                format!("arm id {id} out of range; ids must be 0..{n} for {n} records"),
            ));
        }
        if seen_at[id] != 0 {
            return Err(err(
                line_no,
                format!("arm id {id} already defined on line {}", seen_at[id]),
            ));
        }
        seen_at[id] = line_no;
        means[id] = mean;
    }
    let mut by_mean: Vec<&(usize, f64, usize)> = records.iter().collect();
    by_mean.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)));
    for w in by_mean.windows(2) {
        if w[0].1 == w[1].1 {
            return Err(err(
                w[1].2,
                format!(
                    "mean {} duplicates arm {} (line {}); distinct means are required",
                    w[1].1, w[0].0, w[0].2
                ),
            ));
        }
    }
    ArmSet::with_means(means)
}

/// Reads an arm-means file; see [`parse_means`].
pub fn load_means(path: impl AsRef<Path>, model: &RewardModel) -> Result<ArmSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_means(&text, model, &path.display().to_string())
}

/// Renders an arm set in the means-file format.
pub fn format_means(arm_set: &ArmSet) -> Result<String> {
    let means = arm_set.require_means()?;
    let mut out = String::from("# arm_id,mean\n");
    for (i, y) in means.iter().enumerate() {
        out.push_str(&format!("{i},{y}\n"));
    }
    Ok(out)
}
