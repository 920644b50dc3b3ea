//! `bidshade` — build datasets, replay bid policies, compare trajectories.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error. All randomness
//! flows from `--seed`; identical invocations on identical inputs produce
//! byte-identical outputs. The only environment influence is log verbosity
//! (`RUST_LOG`).

use anyhow::Context as _;
use bidshade::context::DEFAULT_NUM_CONTEXTS;
use bidshade::data::{
    self, build_ab_split, dataset_stats, generate_synthetic, AbSplitConfig, ContextTruth,
    SyntheticEnvConfig, Trajectory,
};
use bidshade::filter::FilterConfig;
use bidshade::policy::{BidPolicy, Exp3, FixedShading, ThompsonSampling, Ucb1};
use bidshade::sim::{
    compare, fit_binner, write_metrics_csv, Order, ResumableRun, RunConfig, RunMetrics,
    DEFAULT_CHECKPOINT_EVERY,
};
use bidshade::{ContextBinner, Impression, LognormalParams};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bidshade",
    version,
    about = "Bid-shading policies replayed over first-price auction logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic impression log with known ground truth.
    GenSynthetic(GenSyntheticArgs),
    /// Build an impression log from a raw bid log via the A/B advertiser split.
    BuildAb(BuildAbArgs),
    /// Print headline statistics of an impression log.
    Stats(StatsArgs),
    /// Replay one policy over a dataset and write its metrics CSV.
    Run(RunArgs),
    /// Replay several policies over the identical impression order.
    Compare(CompareArgs),
    /// Inspect or verify snapshot files.
    SnapshotTools(SnapshotToolsArgs),
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Output impressions CSV (gzip when the name ends in .gz).
    #[arg(long)]
    out: PathBuf,
    /// Full environment description as TOML; conflicts with the shape flags
    /// below, while --seed/--horizon still override the file.
    #[arg(long, conflicts_with_all = [
        "contexts", "mu_lo", "mu_hi", "sigma", "rho", "price_mu_offset",
        "price_sigma", "trajectory", "amplitude", "step",
    ])]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of contexts; base μ values are spread evenly over [mu-lo, mu-hi].
    #[arg(long)]
    contexts: Option<usize>,
    #[arg(long)]
    mu_lo: Option<f64>,
    #[arg(long)]
    mu_hi: Option<f64>,
    /// Shared competing-bid σ.
    #[arg(long)]
    sigma: Option<f64>,
    /// Correlation between ln p and ln x.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    price_mu_offset: Option<f64>,
    #[arg(long)]
    price_sigma: Option<f64>,
    /// constant | sinusoidal | random-walk
    #[arg(long)]
    trajectory: Option<String>,
    /// Sinusoidal μ amplitude.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Random-walk μ step.
    #[arg(long)]
    step: Option<f64>,
    /// Also write per-impression ground truth as JSONL.
    #[arg(long)]
    truths_out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildAbArgs {
    /// Raw bid log CSV `auction_id,advertiser_id,bid,timestamp_ms` (.gz ok).
    #[arg(long)]
    input: PathBuf,
    /// Output impressions CSV.
    #[arg(long)]
    out: PathBuf,
    /// Seed of the per-advertiser group coin.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability an advertiser lands in group A.
    #[arg(long, default_value_t = 0.5)]
    bias: f64,
    /// Multiplicative price rescale applied on export.
    #[arg(long, default_value_t = 1.0)]
    rescale: f64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Also fit a price binner and report per-context counts.
    #[arg(long)]
    contexts: Option<usize>,
}

/// Flags shared by `run` and `compare`; every one can also come from the
/// TOML file given with --config, with explicit flags taking precedence.
#[derive(Args, Clone)]
struct ReplayArgs {
    /// TOML file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// shuffled | chronological
    #[arg(long)]
    order: Option<String>,
    /// Master seed for policy randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Permutation seed; defaults to --seed so runs are self-contained,
    /// while an explicit value lets one ordering serve many policy seeds.
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Price-quantile contexts to fit.
    #[arg(long)]
    contexts: Option<usize>,
    /// Fit the binner on the first N impressions instead of the whole log.
    #[arg(long)]
    warmup: Option<usize>,
    /// Thompson sampling: particles per context.
    #[arg(long)]
    particles: Option<usize>,
    /// Thompson sampling: parameter drift scale.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Bandit baselines: number of shading arms.
    #[arg(long)]
    arms: Option<usize>,
    /// Exp3 mixing rate.
    #[arg(long)]
    gamma: Option<f64>,
    /// Bandit reward bound; defaults to the dataset's maximum price.
    #[arg(long)]
    bound: Option<f64>,
    /// Shading factor for `fixed` (also spellable inline as fixed@0.8).
    #[arg(long)]
    alpha: Option<f64>,
    /// Share one bandit state across contexts instead of one per context.
    #[arg(long)]
    global: bool,
    /// Metrics CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    replay: ReplayArgs,
    /// ts | ucb | exp3 | fixed[@alpha]
    #[arg(long)]
    policy: Option<String>,
    /// Write a run snapshot here (after --snapshot-at, or at the end).
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    /// Pause and snapshot after this many impressions, then continue.
    #[arg(long, requires = "snapshot_out")]
    snapshot_at: Option<usize>,
    /// Resume from a run snapshot instead of starting a fresh policy.
    #[arg(long, conflicts_with = "policy")]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    replay: ReplayArgs,
    /// Comma-separated list, e.g. ts,ucb,exp3 or fixed@0.5,fixed@1.0.
    #[arg(long)]
    policies: Option<String>,
}

#[derive(Args)]
struct SnapshotToolsArgs {
    /// Snapshot file to inspect.
    #[arg(long)]
    snapshot: PathBuf,
    /// Verify the snapshot restores cleanly against this dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

/// Post-parse failures split by exit code: wrong invocation vs. bad data.
enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
        Command::BuildAb(args) => cmd_build_ab(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::SnapshotTools(args) => cmd_snapshot_tools(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("Run `bidshade <COMMAND> --help` for usage.");
            ExitCode::from(1)
        }
        Err(CliError::Data(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn data_err<T>(result: anyhow::Result<T>) -> Result<T, CliError> {
    result.map_err(CliError::Data)
}

// ---------------------------------------------------------------------------
// gen-synthetic

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<(), CliError> {
    if let Some(t) = &args.trajectory {
        if !matches!(t.as_str(), "constant" | "sinusoidal" | "random-walk") {
            return Err(CliError::usage(format!(
                "unknown trajectory {t:?} (expected constant, sinusoidal, or random-walk)"
            )));
        }
    }
    let config = data_err(resolve_synthetic_config(&args))?;
    let dataset = data_err(generate_synthetic(&config).map_err(Into::into))?;
    data_err(
        data::save_impressions(&args.out, &dataset.impressions)
            .with_context(|| format!("writing {}", args.out.display())),
    )?;
    if let Some(path) = &args.truths_out {
        data_err(write_truths(path, &dataset.truths))?;
    }
    println!("wrote {} impressions to {}", dataset.impressions.len(), args.out.display());
    Ok(())
}

fn resolve_synthetic_config(args: &GenSyntheticArgs) -> anyhow::Result<SyntheticEnvConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SyntheticEnvConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let contexts = args.contexts.unwrap_or(10);
            let mu_lo = args.mu_lo.unwrap_or(0.0);
            let mu_hi = args.mu_hi.unwrap_or(1.0);
            let sigma = args.sigma.unwrap_or(0.4);
            let trajectory = match args.trajectory.as_deref() {
                None | Some("constant") => Trajectory::Constant,
                Some("sinusoidal") => {
                    Trajectory::SinusoidalMu { amplitude: args.amplitude.unwrap_or(0.5) }
                }
                Some("random-walk") => Trajectory::RandomWalk { step: args.step.unwrap_or(0.01) },
                Some(other) => anyhow::bail!("unknown trajectory {other:?}"),
            };
            let spread = |i: usize| {
                if contexts <= 1 {
                    mu_lo
                } else {
                    mu_lo + (mu_hi - mu_lo) * i as f64 / (contexts - 1) as f64
                }
            };
            SyntheticEnvConfig {
                contexts: (0..contexts)
                    .map(|i| {
                        Ok(ContextTruth { base: LognormalParams::new(spread(i), sigma)?, trajectory })
                    })
                    .collect::<bidshade::Result<_>>()?,
                rho: args.rho.unwrap_or(0.5),
                price_mu_offset: args.price_mu_offset.unwrap_or(0.7),
                price_sigma: args.price_sigma.unwrap_or(0.4),
                horizon: 0, // filled below
                seed: 0,
            }
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.config.is_none() {
        config.horizon = args.horizon.unwrap_or(100_000);
    } else if let Some(horizon) = args.horizon {
        config.horizon = horizon;
    }
    Ok(config)
}

fn write_truths(path: &Path, truths: &[data::SyntheticTruth]) -> anyhow::Result<()> {
    let mut writer = BufWriter::new(
        File::create(path).with_context(|| format!("writing {}", path.display()))?,
    );
    for truth in truths {
        serde_json::to_writer(&mut writer, truth)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// build-ab / stats

fn cmd_build_ab(args: BuildAbArgs) -> Result<(), CliError> {
    let records = data_err(
        data::load_bid_records(&args.input)
            .with_context(|| format!("reading {}", args.input.display())),
    )?;
    let auctions: std::collections::HashSet<&str> =
        records.iter().map(|r| r.auction_id.as_str()).collect();
    let config = AbSplitConfig { seed: args.seed, bias: args.bias, rescale: args.rescale };
    let impressions = data_err(build_ab_split(&records, config).map_err(Into::into))?;
    data_err(
        data::save_impressions(&args.out, &impressions)
            .with_context(|| format!("writing {}", args.out.display())),
    )?;
    println!(
        "kept {} of {} auctions -> {}",
        impressions.len(),
        auctions.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let impressions = data_err(
        data::load_impressions(&args.dataset)
            .with_context(|| format!("reading {}", args.dataset.display())),
    )?;
    let binner = match args.contexts {
        Some(c) => Some(data_err(fit_binner(&impressions, c, None).map_err(Into::into))?),
        None => None,
    };
    let stats = data_err(dataset_stats(&impressions, binner.as_ref()).map_err(Into::into))?;
    println!("n: {}", stats.n);
    println!("share(x <= p): {}", stats.share_percent());
    if let Some(counts) = &stats.per_context_counts {
        for (context, count) in counts.iter().enumerate() {
            println!("context {context}: {count}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run / compare

/// File counterpart of [`ReplayArgs`] plus the policy selectors.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    policy: Option<String>,
    policies: Option<Vec<String>>,
    order: Option<String>,
    seed: Option<u64>,
    shuffle_seed: Option<u64>,
    checkpoint_every: Option<usize>,
    contexts: Option<usize>,
    warmup: Option<usize>,
    particles: Option<usize>,
    epsilon: Option<f64>,
    arms: Option<usize>,
    gamma: Option<f64>,
    bound: Option<f64>,
    alpha: Option<f64>,
    global: Option<bool>,
    out: Option<PathBuf>,
}

/// Everything a replay needs, after flag/file/default resolution.
struct ReplaySetup {
    dataset: PathBuf,
    out: PathBuf,
    run_config: RunConfig,
    contexts: usize,
    warmup: Option<usize>,
    seed: u64,
    particles: usize,
    epsilon: Option<f64>,
    arms: usize,
    gamma: f64,
    bound: Option<f64>,
    alpha: f64,
    contextual: bool,
}

fn resolve_replay(args: &ReplayArgs) -> Result<(ReplaySetup, FileConfig), CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = data_err(
                std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display())),
            )?;
            data_err(
                toml::from_str::<FileConfig>(&text)
                    .with_context(|| format!("parsing {}", path.display())),
            )?
        }
        None => FileConfig::default(),
    };

    let order_name =
        args.order.clone().or_else(|| file.order.clone()).unwrap_or_else(|| "shuffled".into());
    let order = match order_name.as_str() {
        "shuffled" => Order::Shuffled,
        "chronological" => Order::Chronological,
        other => {
            return Err(CliError::usage(format!(
                "unknown order {other:?} (expected shuffled or chronological)"
            )))
        }
    };
    let dataset = args
        .dataset
        .clone()
        .or_else(|| file.dataset.clone())
        .ok_or_else(|| CliError::usage("missing --dataset (flag or config file)"))?;
    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| CliError::usage("missing --out (flag or config file)"))?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let setup = ReplaySetup {
        dataset,
        out,
        run_config: RunConfig {
            order,
            shuffle_seed: args.shuffle_seed.or(file.shuffle_seed).unwrap_or(seed),
            checkpoint_every: args
                .checkpoint_every
                .or(file.checkpoint_every)
                .unwrap_or(DEFAULT_CHECKPOINT_EVERY),
        },
        contexts: args.contexts.or(file.contexts).unwrap_or(DEFAULT_NUM_CONTEXTS),
        warmup: args.warmup.or(file.warmup),
        seed,
        particles: args.particles.or(file.particles).unwrap_or(100),
        epsilon: args.epsilon.or(file.epsilon),
        arms: args.arms.or(file.arms).unwrap_or(10),
        gamma: args.gamma.or(file.gamma).unwrap_or(0.05),
        bound: args.bound.or(file.bound),
        alpha: args.alpha.or(file.alpha).unwrap_or(0.8),
        contextual: !(args.global || file.global.unwrap_or(false)),
    };
    Ok((setup, file))
}

/// A validated policy selector: the kind plus an inline fixed-α override.
struct PolicySpec {
    token: String,
    inline_alpha: Option<f64>,
}

fn parse_policy_spec(token: &str) -> Result<PolicySpec, CliError> {
    let (kind, inline_alpha) = match token.split_once('@') {
        Some((kind, alpha)) => {
            let alpha: f64 = alpha.parse().map_err(|_| {
                CliError::usage(format!("bad shading factor in policy spec {token:?}"))
            })?;
            (kind, Some(alpha))
        }
        None => (token, None),
    };
    if !matches!(kind, "ts" | "ucb" | "ucb1" | "exp3" | "fixed") {
        return Err(CliError::usage(format!(
            "unknown policy {token:?} (expected ts, ucb, exp3, or fixed[@alpha])"
        )));
    }
    if inline_alpha.is_some() && kind != "fixed" {
        return Err(CliError::usage(format!("only fixed takes an inline @alpha ({token:?})")));
    }
    Ok(PolicySpec { token: kind.to_string(), inline_alpha })
}

fn build_policy(
    spec: &PolicySpec,
    setup: &ReplaySetup,
    bound: f64,
) -> anyhow::Result<Box<dyn BidPolicy>> {
    let policy: Box<dyn BidPolicy> = match spec.token.as_str() {
        "ts" => {
            let mut config = FilterConfig::for_particles(setup.particles);
            if let Some(epsilon) = setup.epsilon {
                config.epsilon = epsilon;
            }
            Box::new(ThompsonSampling::new(config, setup.contexts, setup.seed)?)
        }
        "ucb" | "ucb1" => {
            Box::new(Ucb1::new(setup.arms, bound, setup.contexts, setup.contextual)?)
        }
        "exp3" => Box::new(Exp3::new(
            setup.arms,
            setup.gamma,
            bound,
            setup.contexts,
            setup.contextual,
            setup.seed,
        )?),
        "fixed" => Box::new(FixedShading::new(spec.inline_alpha.unwrap_or(setup.alpha))?),
        other => unreachable!("validated spec {other:?}"),
    };
    Ok(policy)
}

fn load_replay_data(setup: &ReplaySetup) -> anyhow::Result<(Vec<Impression>, ContextBinner, f64)> {
    let impressions = data::load_impressions(&setup.dataset)
        .with_context(|| format!("reading {}", setup.dataset.display()))?;
    let binner = fit_binner(&impressions, setup.contexts, setup.warmup)?;
    let bound = setup.bound.unwrap_or_else(|| {
        impressions.iter().map(|i| i.internal_price).fold(0.0f64, f64::max)
    });
    Ok((impressions, binner, bound))
}

fn print_run_summary(metrics: &RunMetrics) {
    if let Some(cp) = metrics.final_checkpoint() {
        println!(
            "policy {}: n={} avg_reward={:.6} success_rate={:.4} regret={:.3}",
            metrics.policy, cp.n, cp.avg_reward, cp.success_rate, cp.regret
        );
    }
    if let Some(n) = metrics.convergence_n {
        println!(
            "converged at n={n} (first checkpoint within {:.1}% of the final average)",
            metrics.convergence_tolerance * 100.0
        );
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let (setup, file) = resolve_replay(&args.replay)?;
    let policy_spec = match &args.resume {
        Some(_) => None,
        None => Some(parse_policy_spec(
            &args.policy.clone().or_else(|| file.policy.clone()).unwrap_or_else(|| "ts".into()),
        )?),
    };

    let (impressions, binner, bound) = data_err(load_replay_data(&setup))?;
    let mut sim = match &args.resume {
        Some(path) => {
            let reader = data_err(
                File::open(path)
                    .map(BufReader::new)
                    .with_context(|| format!("opening {}", path.display())),
            )?;
            let sim =
                data_err(ResumableRun::read_snapshot(reader, &impressions).map_err(Into::into))?;
            println!("resumed {} at n={}", sim.policy().name(), sim.position());
            sim
        }
        None => {
            let policy =
                data_err(build_policy(policy_spec.as_ref().expect("spec set"), &setup, bound))?;
            data_err(
                ResumableRun::new(policy, &impressions, binner, setup.run_config)
                    .map_err(Into::into),
            )?
        }
    };

    if let (Some(at), Some(snap_path)) = (args.snapshot_at, &args.snapshot_out) {
        let remaining = at.saturating_sub(sim.position());
        data_err(sim.step_many(&impressions, remaining).map_err(Into::into))?;
        data_err(write_snapshot_file(&sim, snap_path))?;
        println!("snapshot at n={} -> {}", sim.position(), snap_path.display());
    }

    data_err(sim.run_to_end(&impressions).map_err(Into::into))?;
    if args.snapshot_at.is_none() {
        if let Some(snap_path) = &args.snapshot_out {
            data_err(write_snapshot_file(&sim, snap_path))?;
            println!("snapshot at n={} -> {}", sim.position(), snap_path.display());
        }
    }

    let metrics = sim.metrics();
    data_err(write_metrics_file(&setup.out, std::slice::from_ref(&metrics)))?;
    print_run_summary(&metrics);
    println!("wrote metrics to {}", setup.out.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let (setup, file) = resolve_replay(&args.replay)?;
    let tokens: Vec<String> = match args.policies.clone() {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => file
            .policies
            .clone()
            .unwrap_or_else(|| vec!["ts".into(), "ucb".into(), "exp3".into()]),
    };
    if tokens.is_empty() || tokens.iter().any(|t| t.is_empty()) {
        return Err(CliError::usage("empty policy list"));
    }
    let specs: Vec<PolicySpec> =
        tokens.iter().map(|t| parse_policy_spec(t)).collect::<Result<_, _>>()?;

    let (impressions, binner, bound) = data_err(load_replay_data(&setup))?;
    let policies: Vec<Box<dyn BidPolicy>> = data_err(
        specs.iter().map(|s| build_policy(s, &setup, bound)).collect::<anyhow::Result<_>>(),
    )?;
    let report =
        data_err(compare(policies, &impressions, &binner, &setup.run_config).map_err(Into::into))?;
    data_err(write_metrics_file(&setup.out, &report.runs))?;
    print!("{}", report.report());
    println!("wrote metrics to {}", setup.out.display());
    Ok(())
}

fn write_metrics_file(path: &Path, runs: &[RunMetrics]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    write_metrics_csv(BufWriter::new(file), runs)?;
    Ok(())
}

fn write_snapshot_file(sim: &ResumableRun, path: &Path) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    sim.write_snapshot(BufWriter::new(file))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// snapshot-tools

fn cmd_snapshot_tools(args: SnapshotToolsArgs) -> Result<(), CliError> {
    let text = data_err(
        std::fs::read_to_string(&args.snapshot)
            .with_context(|| format!("reading {}", args.snapshot.display())),
    )?;
    let mut lines = text.lines();
    let header: serde_json::Value = data_err(
        lines
            .next()
            .ok_or_else(|| anyhow::anyhow!("empty snapshot file"))
            .and_then(|l| serde_json::from_str(l).map_err(|e| anyhow::anyhow!("bad header: {e}"))),
    )?;
    let format = header.get("format").and_then(|v| v.as_str()).unwrap_or("?");
    let version = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    println!("format: {format}");
    println!("version: {version}");

    match format {
        bidshade::sim::RUN_SNAPSHOT_FORMAT => {
            let body: serde_json::Value = data_err(
                lines
                    .next()
                    .ok_or_else(|| anyhow::anyhow!("missing snapshot body"))
                    .and_then(|l| {
                        serde_json::from_str(l).map_err(|e| anyhow::anyhow!("bad body: {e}"))
                    }),
            )?;
            let field = |k: &str| body.get(k).cloned().unwrap_or(serde_json::Value::Null);
            println!("policy: {}", field("policy_name").as_str().unwrap_or("?"));
            println!("position: {}", field("position"));
            println!("dataset_len: {}", field("dataset_len"));
            println!("dataset_fingerprint: {:016x}", field("dataset_fingerprint").as_u64().unwrap_or(0));
            println!(
                "checkpoints: {}",
                field("checkpoints").as_array().map(|a| a.len()).unwrap_or(0)
            );
            if let Some(path) = &args.dataset {
                let impressions = data_err(
                    data::load_impressions(path)
                        .with_context(|| format!("reading {}", path.display())),
                )?;
                let sim = data_err(
                    ResumableRun::read_snapshot(text.as_bytes(), &impressions).map_err(Into::into),
                )?;
                println!(
                    "verified: restores cleanly against {} at n={}",
                    path.display(),
                    sim.position()
                );
            }
        }
        bidshade::filter::FILTER_SNAPSHOT_FORMAT => {
            let (config, sets) = data_err(
                bidshade::filter::read_filter_snapshot(BufReader::new(text.as_bytes()))
                    .map_err(Into::into),
            )?;
            println!("contexts: {}", sets.len());
            println!("particles per context: {}", config.num_particles);
        }
        other => {
            return Err(CliError::Data(anyhow::anyhow!("unrecognized snapshot format {other:?}")))
        }
    }
    Ok(())
}
