//! Experiment harness: instance preparation, seeded trials, scoring and
//! tabular output.
//!
//! A trial is a pure function of `(config, trial index)`: its seed is
//! `base_seed + index`, and every arm's reward stream is split from that
//! seed. Trials run on the rayon pool and are collected in index order.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::run_rr;
use crate::env::{
    generate, load_means, Environment, OutlierType, SyntheticSpec, DEFAULT_NOISE_WIDTH,
};
use crate::error::{Error, Result};
use crate::gold::{run_with, FinishCheck, GoldObserver, GoldOptions, GoldState};
use crate::graph::PruneMode;
use crate::model::{ArmSet, Params, RngSeed};
use crate::oracle::{certified_union, label_all, validate_ranking, OutlierVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "gold")]
    Gold,
    #[serde(rename = "rr-ksigma")]
    RrKSigma,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Gold => "gold",
            Algorithm::RrKSigma => "rr-ksigma",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold" => Ok(Algorithm::Gold),
            "rr-ksigma" | "rr" => Ok(Algorithm::RrKSigma),
            _ => Err(Error::Param(format!(
                "unknown algorithm {s:?} (expected gold or rr-ksigma)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Synthetic(SyntheticSpec),
    MeansFile(PathBuf),
    Means(ArmSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub params: Params,
    pub instance: InstanceSource,
    pub trials: u64,
    pub base_seed: RngSeed,
    pub max_pulls: Option<u64>,
    /// Baseline multiplier of the standard deviation.
    pub k: f64,
    pub prune_mode: PruneMode,
    pub finish_check: FinishCheck,
    /// Half-width of the bounded model's reward noise.
    pub noise_width: f64,
    /// Collect a graph-dump line each time edges are deleted (GOLD only).
    pub graph_dump: bool,
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, params: Params, instance: InstanceSource) -> Self {
        ExperimentConfig {
            algorithm,
            params,
            instance,
            trials: 10,
            base_seed: RngSeed(0),
            max_pulls: None,
            k: 2.0,
            prune_mode: PruneMode::Incremental,
            finish_check: FinishCheck::PerSweep,
            noise_width: DEFAULT_NOISE_WIDTH,
            graph_dump: false,
            output_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(Error::Param("trials must be at least 1".into()));
        }
        if self.algorithm == Algorithm::RrKSigma && !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::Param(format!("k must be positive, got {}", self.k)));
        }
        Ok(())
    }
}

/// The arm set plus its oracle labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedInstance {
    pub arm_set: ArmSet,
    /// Every certified outlier group.
    pub verdicts: Vec<OutlierVerdict>,
    /// Union of the certified groups.
    pub truth: Vec<usize>,
    /// Injected group, for synthetic instances.
    pub injected: Option<Vec<usize>>,
}

/// Resolves the instance and labels it. All configuration and instance
/// errors surface here, before any trial runs.
pub fn prepare_instance(config: &ExperimentConfig) -> Result<PreparedInstance> {
    config.validate()?;
    let (arm_set, injected) = match &config.instance {
        InstanceSource::Synthetic(spec) => {
            let inst = generate(spec)?;
            (inst.arm_set, Some(inst.outliers))
        }
        InstanceSource::MeansFile(path) => (load_means(path, &config.params.reward_model)?, None),
        InstanceSource::Means(arms) => (arms.clone(), None),
    };
    arm_set.check_support(&config.params.reward_model)?;
    let verdicts = label_all(&arm_set, &config.params)?;
    let truth = certified_union(&verdicts);
    Ok(PreparedInstance {
        arm_set,
        verdicts,
        truth,
        injected,
    })
}

/// One trial's outcome. Everything except `wall_time_ms` and `graph_dump`
/// is a function of the configuration and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub total_pulls: u64,
    /// GOLD's ranking, most likely outlier first.
    pub ranking: Option<Vec<usize>>,
    /// The baseline's flagged set.
    pub flagged: Option<Vec<usize>>,
    /// GOLD's terminated set.
    pub terminated: Vec<usize>,
    pub s_scores: Vec<Option<u64>>,
    pub truncated: bool,
    pub correct: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub wall_time_ms: f64,
    #[serde(skip)]
    pub graph_dump: Vec<String>,
}

impl TrialResult {
    /// Equality on every field that a replay must reproduce.
    pub fn same_outcome(&self, other: &TrialResult) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.wall_time_ms = 0.0;
        b.wall_time_ms = 0.0;
        a.graph_dump.clear();
        b.graph_dump.clear();
        a == b
    }
}

/// Precision, recall and F1 of `predicted` against `truth`. An empty
/// prediction of an empty truth scores 1 on all three.
pub fn set_scores(predicted: &[usize], truth: &[usize]) -> (f64, f64, f64) {
    let tp = predicted.iter().filter(|a| truth.contains(a)).count() as f64;
    let precision = if predicted.is_empty() {
        if truth.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        tp / predicted.len() as f64
    };
    let recall = if truth.is_empty() {
        if predicted.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        tp / truth.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

struct GraphDump<'a> {
    lines: &'a mut Vec<String>,
}

impl GoldObserver for GraphDump<'_> {
    fn after_pull(&mut self, state: &GoldState, _arm: usize, removed: usize) {
        if removed > 0 || (self.lines.is_empty() && state.round() as usize == state.stats().len()) {
            self.lines
                .push(state.graph().dump_line(state.round(), state.partition()));
        }
    }
}

/// Runs trial `index` of `config` on a prepared instance.
pub fn run_trial(
    config: &ExperimentConfig,
    prepared: &PreparedInstance,
    index: u64,
) -> Result<TrialResult> {
    let seed = config.base_seed.trial(index);
    let mut env = Environment::new(&prepared.arm_set, config.params.reward_model, seed)?
        .with_noise_width(config.noise_width)?;
    let start = Instant::now();
    let mut dump = Vec::new();
    let mut result = match config.algorithm {
        Algorithm::Gold => {
            let options = GoldOptions {
                prune_mode: config.prune_mode,
                finish_check: config.finish_check,
                max_pulls: config.max_pulls,
                record_pulls: false,
            };
            let (state, ranking) = if config.graph_dump {
                let mut obs = GraphDump { lines: &mut dump };
                run_with(
                    &prepared.arm_set,
                    &config.params,
                    &mut env,
                    &options,
                    &mut obs,
                )?
            } else {
                run_with(
                    &prepared.arm_set,
                    &config.params,
                    &mut env,
                    &options,
                    &mut (),
                )?
            };
            let terminated = state.terminated();
            let correct = validate_ranking(&ranking.order, &prepared.verdicts);
            let (precision, recall, f1) = set_scores(&terminated, &prepared.truth);
            TrialResult {
                trial: index,
                seed: seed.0,
                algorithm: Algorithm::Gold,
                total_pulls: state.round(),
                ranking: Some(ranking.order),
                flagged: None,
                terminated,
                s_scores: ranking.s_values,
                truncated: state.is_truncated(),
                correct,
                precision,
                recall,
                f1,
                wall_time_ms: 0.0,
                graph_dump: Vec::new(),
            }
        }
        Algorithm::RrKSigma => {
            let st = run_rr(
                &prepared.arm_set,
                config.k,
                &config.params,
                &mut env,
                config.max_pulls,
            )?;
            let correct = st.flagged == prepared.truth;
            let (precision, recall, f1) = set_scores(&st.flagged, &prepared.truth);
            TrialResult {
                trial: index,
                seed: seed.0,
                algorithm: Algorithm::RrKSigma,
                total_pulls: st.total_pulls,
                ranking: None,
                flagged: Some(st.flagged),
                terminated: Vec::new(),
                s_scores: Vec::new(),
                truncated: st.truncated,
                correct,
                precision,
                recall,
                f1,
                wall_time_ms: 0.0,
                graph_dump: Vec::new(),
            }
        }
    };
    result.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    result.graph_dump = dump;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub algorithm: Algorithm,
    pub trials: u64,
    /// Fraction of trials scored correct.
    pub correctness: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_pulls: f64,
    /// Sample standard deviation of the pull counts (0 for a single trial).
    pub stddev_pulls: f64,
    pub truncated_trials: u64,
}

impl MetricsSummary {
    pub fn from_trials(algorithm: Algorithm, trials: &[TrialResult]) -> Self {
        let count = trials.len() as f64;
        let mean = |f: &dyn Fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / count;
        let mean_pulls = mean(&|t| t.total_pulls as f64);
        let stddev_pulls = if trials.len() > 1 {
            (trials
                .iter()
                .map(|t| (t.total_pulls as f64 - mean_pulls).powi(2))
                .sum::<f64>()
                / (count - 1.0))
                .sqrt()
        } else {
            0.0
        };
        MetricsSummary {
            algorithm,
            trials: trials.len() as u64,
            correctness: mean(&|t| if t.correct { 1.0 } else { 0.0 }),
            precision: mean(&|t| t.precision),
            recall: mean(&|t| t.recall),
            f1: mean(&|t| t.f1),
            mean_pulls,
            stddev_pulls,
            truncated_trials: trials.iter().filter(|t| t.truncated).count() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub instance: PreparedInstance,
    pub trials: Vec<TrialResult>,
    pub summary: MetricsSummary,
}

/// Prepares the instance and runs every trial.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let instance = prepare_instance(config)?;
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, &instance, i))
        .collect::<Result<Vec<_>>>()?;
    let summary = MetricsSummary::from_trials(config.algorithm, &trials);
    Ok(ExperimentReport {
        instance,
        trials,
        summary,
    })
}

/// Per-trial records as JSON lines.
pub fn write_trial_records<W: Write>(mut out: W, trials: &[TrialResult]) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records written by [`write_trial_records`].
pub fn read_trial_records(text: &str) -> Result<Vec<TrialResult>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Summary as comma-separated text with a header row.
pub fn write_summary_csv<W: Write>(out: W, summary: &MetricsSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.serialize(summary)?;
    w.flush()?;
    Ok(())
}

/// A cartesian experiment grid over synthetic instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub ns: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub outlier_types: Vec<OutlierType>,
    pub algorithms: Vec<Algorithm>,
    /// Baseline `k` values; one row per value.
    pub ks: Vec<f64>,
    pub rho: f64,
    pub delta: f64,
    pub reward_model: crate::model::RewardModel,
    pub trials: u64,
    pub base_seed: RngSeed,
    pub max_pulls: Option<u64>,
    pub prune_mode: PruneMode,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            ns: vec![20, 50, 100, 200, 400],
            epsilons: vec![2.5, 5.0],
            outlier_types: vec![OutlierType::UpperSide, OutlierType::Intermediate],
            algorithms: vec![Algorithm::Gold, Algorithm::RrKSigma],
            ks: crate::baseline::DEFAULT_K_GRID.to_vec(),
            rho: 0.9,
            delta: 0.1,
            reward_model: crate::model::RewardModel::Bernoulli,
            trials: 10,
            base_seed: RngSeed(0),
            max_pulls: None,
            prune_mode: PruneMode::Incremental,
        }
    }
}

/// One grid cell's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub epsilon: f64,
    pub outlier_type: OutlierType,
    pub algorithm: Algorithm,
    pub k: Option<f64>,
    pub trials: u64,
    pub correctness: Option<f64>,
    pub f1: Option<f64>,
    pub mean_pulls: Option<f64>,
    pub error: Option<String>,
}

/// Seed of the synthetic instance for a grid cell. Shared by every
/// algorithm in the cell.
pub fn cell_seed(base: RngSeed, n: usize, epsilon: f64, outlier_type: OutlierType) -> RngSeed {
    let kind = match outlier_type {
        OutlierType::UpperSide => 1,
        OutlierType::Intermediate => 2,
    };
    base.derive((n as u64).wrapping_mul(0x1_0000_0001) ^ epsilon.to_bits().rotate_left(17) ^ kind)
}

/// The experiment configuration for one cell and algorithm.
pub fn cell_config(
    grid: &SweepGrid,
    n: usize,
    epsilon: f64,
    outlier_type: OutlierType,
    algorithm: Algorithm,
    k: f64,
) -> Result<ExperimentConfig> {
    let params = Params::new(epsilon, grid.rho, grid.delta, grid.reward_model)?;
    let spec = SyntheticSpec::new(
        n,
        epsilon,
        grid.rho,
        outlier_type,
        cell_seed(grid.base_seed, n, epsilon, outlier_type),
    );
    let mut config = ExperimentConfig::new(algorithm, params, InstanceSource::Synthetic(spec));
    config.trials = grid.trials;
    config.base_seed = grid.base_seed;
    config.max_pulls = grid.max_pulls;
    config.k = k;
    config.prune_mode = grid.prune_mode;
    Ok(config)
}

/// Runs every cell of the grid. A failing cell is recorded in its row and
/// the remaining cells still run.
pub fn run_sweep(grid: &SweepGrid) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &n in &grid.ns {
        for &epsilon in &grid.epsilons {
            for &outlier_type in &grid.outlier_types {
                let mut prepared: Option<Result<PreparedInstance>> = None;
                for &algorithm in &grid.algorithms {
                    let ks: Vec<Option<f64>> = match algorithm {
                        Algorithm::Gold => vec![None],
                        Algorithm::RrKSigma => grid.ks.iter().copied().map(Some).collect(),
                    };
                    for k in ks {
                        let mut row = SweepRow {
                            n,
                            epsilon,
                            outlier_type,
                            algorithm,
                            k,
                            trials: grid.trials,
                            correctness: None,
                            f1: None,
                            mean_pulls: None,
                            error: None,
                        };
                        let outcome = cell_config(
                            grid,
                            n,
                            epsilon,
                            outlier_type,
                            algorithm,
                            k.unwrap_or(2.0),
                        )
                        .and_then(|config| {
                            let inst = prepared
                                .get_or_insert_with(|| prepare_instance(&config))
                                .as_ref()
                                .map_err(|e| Error::State(e.to_string()))?;
                            let trials = (0..config.trials)
                                .into_par_iter()
                                .map(|i| run_trial(&config, inst, i))
                                .collect::<Result<Vec<_>>>()?;
                            Ok(MetricsSummary::from_trials(algorithm, &trials))
                        });
                        match outcome {
                            Ok(summary) => {
                                row.correctness = Some(summary.correctness);
                                row.f1 = Some(summary.f1);
                                row.mean_pulls = Some(summary.mean_pulls);
                            }
                            Err(e) => row.error = Some(e.to_string()),
                        }
                        rows.push(row);
                    }
                }
            }
        }
    }
    rows
}

/// Sweep rows as comma-separated text with a header row.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n",
        "epsilon",
        "outlier_type",
        "algorithm",
        "k",
        "trials",
        "correctness",
        "f1",
        "mean_pulls",
        "error",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.epsilon.to_string(),
            r.outlier_type.to_string(),
            r.algorithm.to_string(),
            opt(r.k),
            r.trials.to_string(),
            opt(r.correctness),
            opt(r.f1),
            opt(r.mean_pulls),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
