//! `gold`: command-line front end for outlier-arm detection experiments.
//!
//! Every setting can come from a flat TOML file (`--config`) and is
//! overridden by the flag of the same name (dashes become underscores in
//! the file).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use outlier_bandit::bounds::{
    coefficient_b, delta_prime, lemma2_pull_bounds, theorem3_d3, theorem3_total_pull_bound_with,
    BoundContext, GapExponent,
};
use outlier_bandit::env::{format_means, generate, load_means, OutlierType, SyntheticSpec};
use outlier_bandit::experiment::{
    run_experiment, run_sweep, write_summary_csv, write_sweep_csv, write_trial_records, Algorithm,
    ExperimentConfig, InstanceSource, SweepGrid,
};
use outlier_bandit::gold::FinishCheck;
use outlier_bandit::graph::PruneMode;
use outlier_bandit::model::{Params, RewardModel, RngSeed};
use outlier_bandit::oracle::label_all;
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(
    name = "gold",
    version,
    about = "Outlier-arm detection in multi-armed bandits"
)]
struct Cli {
    /// Flat TOML file of default settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded trials of one algorithm on one instance.
    Run(Settings),
    /// List every certified outlier group of a means file.
    Label(Settings),
    /// Report the analytic pull-count bounds.
    Bound(Settings),
    /// Run a grid of synthetic experiments and emit one row per cell.
    Sweep(Settings),
    /// Emit a synthetic means file.
    Generate(Settings),
}

#[derive(Args, Deserialize, Debug, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// gold or rr-ksigma.
    #[arg(long)]
    algorithm: Option<String>,
    /// Baseline multiplier of the standard deviation.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    max_pulls: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the neighborhood graph each time an edge is removed.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    graph_dump: Option<bool>,
    /// Re-test only the edges of the pulled arm (default).
    #[arg(long, conflicts_with = "full_scan")]
    #[serde(skip)]
    incremental: bool,
    /// Re-test every edge after each pull.
    #[arg(long)]
    #[serde(skip)]
    full_scan: bool,
    /// incremental or full-scan (file only; the two flags override it).
    #[arg(skip)]
    prune: Option<PruneMode>,
    /// per-sweep or per-pull.
    #[arg(long)]
    finish_check: Option<String>,
    /// bernoulli or bounded.
    #[arg(long)]
    model: Option<String>,
    /// Lower end of the bounded reward support.
    #[arg(long)]
    lo: Option<f64>,
    /// Upper end of the bounded reward support.
    #[arg(long)]
    hi: Option<f64>,
    /// Half-width of bounded reward noise.
    #[arg(long)]
    noise_width: Option<f64>,
    /// Means file (`arm_id,mean` per line).
    #[arg(long)]
    means: Option<PathBuf>,
    /// Number of arms of a synthetic instance.
    #[arg(long)]
    n: Option<usize>,
    /// upper-side or intermediate.
    #[arg(long)]
    outlier_type: Option<String>,
    #[arg(long)]
    outlier_count: Option<usize>,
    /// Seed of a synthetic instance (defaults to the base seed).
    #[arg(long)]
    instance_seed: Option<u64>,
    /// Reward range R for `bound`.
    #[arg(long)]
    range: Option<f64>,
    /// Smallest gap between two means for `bound`.
    #[arg(long)]
    min_gap: Option<f64>,
    /// Use the unsquared gap in the termination bound.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    literal_gap: Option<bool>,
    /// Sweep: arm counts.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Sweep: epsilon values.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Sweep: outlier types.
    #[arg(long, value_delimiter = ',')]
    types: Option<Vec<String>>,
    /// Sweep: algorithms.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// Sweep: baseline k values.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($flags:ident, $file:ident; $($field:ident),* $(,)?) => {
        Settings {
            $($field: $flags.$field.or($file.$field),)*
            incremental: $flags.incremental,
            full_scan: $flags.full_scan,
        }
    };
}

impl Settings {
    /// Flags first, then the file.
    fn over(self, file: Settings) -> Settings {
        let flags = self;
        overlay!(flags, file;
            epsilon, rho, delta, seed, trials, algorithm, k, max_pulls, out, graph_dump,
            prune, finish_check, model, lo, hi, noise_width, means, n, outlier_type,
            outlier_count, instance_seed, range, min_gap, literal_gap, ns, epsilons, types,
            algorithms, ks,
        )
    }

    fn epsilon(&self) -> Result<f64> {
        self.epsilon.ok_or_else(|| anyhow!("--epsilon is required"))
    }

    fn model(&self) -> Result<RewardModel> {
        match self.model.as_deref().unwrap_or("bernoulli") {
            "bernoulli" => {
                if self.lo.is_some() || self.hi.is_some() {
                    bail!("--lo/--hi apply only to --model bounded");
                }
                Ok(RewardModel::Bernoulli)
            }
            "bounded" => Ok(RewardModel::Bounded {
                lo: self.lo.unwrap_or(0.0),
                hi: self.hi.unwrap_or(1.0),
            }),
            other => bail!("unknown reward model {other:?} (expected bernoulli or bounded)"),
        }
    }

    fn params(&self, epsilon: f64) -> Result<Params> {
        Ok(Params::new(
            epsilon,
            self.rho.unwrap_or(0.9),
            self.delta.unwrap_or(0.1),
            self.model()?,
        )?)
    }

    fn prune_mode(&self) -> PruneMode {
        if self.full_scan {
            PruneMode::FullScan
        } else if self.incremental {
            PruneMode::Incremental
        } else {
            self.prune.unwrap_or_default()
        }
    }

    fn finish_check(&self) -> Result<FinishCheck> {
        match self.finish_check.as_deref().unwrap_or("per-sweep") {
            "per-sweep" => Ok(FinishCheck::PerSweep),
            "per-pull" => Ok(FinishCheck::PerPull),
            other => bail!("unknown finish check {other:?} (expected per-sweep or per-pull)"),
        }
    }

    fn seed(&self) -> RngSeed {
        RngSeed(self.seed.unwrap_or(0))
    }

    fn synthetic_spec(&self, epsilon: f64) -> Result<SyntheticSpec> {
        let n = self
            .n
            .ok_or_else(|| anyhow!("either --means or --n (synthetic instance) is required"))?;
        let outlier_type: OutlierType = self
            .outlier_type
            .as_deref()
            .unwrap_or("upper-side")
            .parse()?;
        let seed = RngSeed(self.instance_seed.or(self.seed).unwrap_or(0));
        let mut spec = SyntheticSpec::new(n, epsilon, self.rho.unwrap_or(0.9), outlier_type, seed);
        if let Some(c) = self.outlier_count {
            spec = spec.with_outlier_count(c);
        }
        Ok(spec)
    }
}

fn load_settings(path: Option<&Path>) -> Result<Settings> {
    let Some(path) = path else {
        return Ok(Settings::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// The `--out` file, or standard output.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_run(s: &Settings) -> Result<()> {
    let epsilon = s.epsilon()?;
    let params = s.params(epsilon)?;
    let algorithm: Algorithm = s.algorithm.as_deref().unwrap_or("gold").parse()?;
    let instance = match &s.means {
        Some(p) => InstanceSource::MeansFile(p.clone()),
        None => InstanceSource::Synthetic(s.synthetic_spec(epsilon)?),
    };
    let mut config = ExperimentConfig::new(algorithm, params, instance);
    config.trials = s.trials.unwrap_or(config.trials);
    config.base_seed = s.seed();
    config.max_pulls = s.max_pulls;
    config.k = s.k.unwrap_or(config.k);
    config.prune_mode = s.prune_mode();
    config.finish_check = s.finish_check()?;
    config.noise_width = s.noise_width.unwrap_or(config.noise_width);
    config.graph_dump = s.graph_dump.unwrap_or(false);
    config.output_path = s.out.clone();

    let report = run_experiment(&config)?;
    match &config.output_path {
        Some(path) => {
            let mut w = output(Some(path))?;
            write_trial_records(&mut w, &report.trials)?;
            w.flush()?;
        }
        None => eprintln!("(per-trial records not written; pass --out to keep them)"),
    }
    if config.graph_dump {
        let mut w: Box<dyn Write> = match &config.output_path {
            Some(p) => {
                let mut g = p.clone().into_os_string();
                g.push(".graph");
                output(Some(Path::new(&g)))?
            }
            None => Box::new(io::stderr().lock()),
        };
        for t in &report.trials {
            for line in &t.graph_dump {
                writeln!(w, "trial={} {line}", t.trial)?;
            }
        }
        w.flush()?;
    }
    let stdout = io::stdout().lock();
    write_summary_csv(stdout, &report.summary)?;
    Ok(())
}

fn cmd_label(s: &Settings) -> Result<()> {
    let path = s
        .means
        .as_ref()
        .ok_or_else(|| anyhow!("--means is required"))?;
    let params = s.params(s.epsilon()?)?;
    let arms = load_means(path, &params.reward_model)?;
    let verdicts = label_all(&arms, &params)?;
    let mut w = output(s.out.as_deref())?;
    if verdicts.is_empty() {
        writeln!(w, "no certified groups")?;
        return Ok(w.flush()?);
    }
    writeln!(
        w,
        "group,upper_size,lower_size,upper_gap,lower_gap,upper_spread,lower_spread,binding_margin"
    )?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for v in &verdicts {
        let group: Vec<String> = v.group.iter().map(usize::to_string).collect();
        let m = &v.margins;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            group.join(" "),
            v.upper_set.len(),
            v.lower_set.len(),
            opt(m.upper_gap),
            opt(m.lower_gap),
            opt(m.upper_spread),
            opt(m.lower_spread),
            m.binding_margin(params.epsilon),
        )?;
    }
    Ok(w.flush()?)
}

fn cmd_bound(s: &Settings) -> Result<()> {
    let epsilon = s.epsilon()?;
    let mut params = s.params(epsilon)?;
    if let Some(r) = s.range {
        if !(r.is_finite() && r > 0.0) {
            bail!("--range must be positive, got {r}");
        }
        params.reward_model = RewardModel::Bounded { lo: 0.0, hi: r };
    }
    let n = s.n.ok_or_else(|| anyhow!("--n is required"))?;
    let gap = s.min_gap.ok_or_else(|| anyhow!("--min-gap is required"))?;
    let exponent = if s.literal_gap.unwrap_or(false) {
        GapExponent::Literal
    } else {
        GapExponent::Squared
    };
    let b = coefficient_b(epsilon)?;
    let dp1 = delta_prime(&BoundContext::new(params, n, 1)?);
    let lemma = lemma2_pull_bounds(gap, &params, n)?;
    let d3 = theorem3_d3(gap, &params, exponent)?;
    let total = theorem3_total_pull_bound_with(gap, &params, n, exponent)?;
    let mut w = output(s.out.as_deref())?;
    writeln!(w, "quantity,value")?;
    for (name, value) in [
        ("b", b),
        ("delta_prime_1", dp1),
        ("d1", lemma.d1),
        ("d2", lemma.d2),
        ("arm_pulls_lower", lemma.lower),
        ("arm_pulls_upper", lemma.upper),
        ("d3", d3),
        ("total_pulls_bound", total),
    ] {
        writeln!(w, "{name},{value}")?;
    }
    Ok(w.flush()?)
}

fn cmd_sweep(s: &Settings) -> Result<()> {
    let mut grid = SweepGrid::default();
    if let Some(v) = &s.ns {
        grid.ns = v.clone();
    }
    if let Some(v) = &s.epsilons {
        grid.epsilons = v.clone();
    } else if let Some(e) = s.epsilon {
        grid.epsilons = vec![e];
    }
    if let Some(v) = &s.types {
        grid.outlier_types = v.iter().map(|t| t.parse()).collect::<Result<_, _>>()?;
    }
    if let Some(v) = &s.algorithms {
        grid.algorithms = v.iter().map(|a| a.parse()).collect::<Result<_, _>>()?;
    } else if let Some(a) = &s.algorithm {
        grid.algorithms = vec![a.parse()?];
    }
    if let Some(v) = &s.ks {
        grid.ks = v.clone();
    } else if let Some(k) = s.k {
        grid.ks = vec![k];
    }
    grid.rho = s.rho.unwrap_or(grid.rho);
    grid.delta = s.delta.unwrap_or(grid.delta);
    grid.reward_model = s.model()?;
    grid.trials = s.trials.unwrap_or(grid.trials);
    grid.base_seed = s.seed();
    grid.max_pulls = s.max_pulls;
    grid.prune_mode = s.prune_mode();
    if grid.ns.is_empty() || grid.epsilons.is_empty() || grid.outlier_types.is_empty() {
        bail!("the sweep grid is empty");
    }
    let rows = run_sweep(&grid);
    let mut w = output(s.out.as_deref())?;
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} cells failed; see the error column",
            rows.len()
        );
    }
    Ok(())
}

fn cmd_generate(s: &Settings) -> Result<()> {
    let epsilon = s.epsilon()?;
    let spec = s.synthetic_spec(epsilon)?;
    let inst = generate(&spec)?;
    let mut w = output(s.out.as_deref())?;
    writeln!(
        w,
        "# {} instance: n={} epsilon={} rho={} seed={}",
        spec.outlier_type, spec.n, spec.epsilon, spec.rho, spec.seed.0
    )?;
    let ids: Vec<String> = inst.outliers.iter().map(usize::to_string).collect();
    writeln!(w, "# injected outliers: {}", ids.join(" "))?;
    w.write_all(format_means(&inst.arm_set)?.as_bytes())?;
    Ok(w.flush()?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_settings(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Run(s) => cmd_run(&s.over(file)),
        Command::Label(s) => cmd_label(&s.over(file)),
        Command::Bound(s) => cmd_bound(&s.over(file)),
        Command::Sweep(s) => cmd_sweep(&s.over(file)),
        Command::Generate(s) => cmd_generate(&s.over(file)),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gold: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
