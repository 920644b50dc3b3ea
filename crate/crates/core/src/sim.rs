//! Deterministic replay harness.
//!
//! Streams a logged impression sequence through a [`BidPolicy`] under the
//! censorship contract — the policy sees only `(context, p)` before bidding
//! and only `(won, revenue)` after — adjudicates every auction against the
//! logged competing bid, and tracks checkpointed metrics against the
//! hindsight oracle. Runs are pure functions of `(dataset, policy, seed)`.
//!
//! A run is sequential by definition (online learning). [`compare`] replays
//! each policy on the identical permutation with fully isolated state, so
//! trajectories are directly comparable.

use crate::auction::{adjudicate, Impression};
use crate::context::ContextBinner;
use crate::error::{Error, Result};
use crate::policy::{policy_from_state, BidPolicy, PolicyState};
use crate::rng::{self, fnv1a64, STREAM_SHUFFLE};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::time::Instant;

/// Metrics checkpoint cadence, in impressions.
pub const DEFAULT_CHECKPOINT_EVERY: usize = 1_000;

/// Relative tolerance used when reporting convergence: the reported n is
/// the first checkpoint whose average reward is within this fraction of the
/// final average. The threshold is a reporting convention, not a model
/// property, so it is carried alongside the number it produced.
pub const CONVERGENCE_TOLERANCE: f64 = 0.01;

/// Replay order over the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    /// A seeded permutation — makes logged data exchangeable (stationary).
    Shuffled,
    /// Stable sort by timestamp — preserves drift (non-stationary).
    Chronological,
}

/// Replay settings shared by [`run`], [`compare`], and [`ResumableRun`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub order: Order,
    /// Drives the shuffle permutation only, so an ordering can be reused
    /// across policies with different policy seeds.
    pub shuffle_seed: u64,
    /// Checkpoint cadence M; a trailing partial checkpoint is emitted at
    /// the end of data, giving ⌈n/M⌉ checkpoints total.
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            order: Order::Shuffled,
            shuffle_seed: 0,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidConfig("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Running aggregates at one point of the replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Impressions processed so far.
    pub n: usize,
    pub cum_revenue: f64,
    /// Exactly `cum_revenue / n`.
    pub avg_reward: f64,
    /// Share of auctions won so far.
    pub success_rate: f64,
    /// Hindsight-oracle average over the same impressions.
    pub oracle_avg_reward: f64,
    /// Oracle cumulative revenue minus policy cumulative revenue.
    pub regret: f64,
}

/// Wall-clock decide+feedback cost per impression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyQuantiles {
    pub samples: usize,
    pub median_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

impl LatencyQuantiles {
    fn from_samples(mut samples: Vec<u64>) -> Self {
        if samples.is_empty() {
            return LatencyQuantiles { samples: 0, median_ns: 0, p99_ns: 0, max_ns: 0 };
        }
        samples.sort_unstable();
        let nearest = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
        LatencyQuantiles {
            samples: samples.len(),
            median_ns: nearest(0.5),
            p99_ns: nearest(0.99),
            max_ns: *samples.last().unwrap(),
        }
    }
}

/// Everything a finished (or interrupted) replay produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub policy: String,
    pub checkpoints: Vec<Checkpoint>,
    pub decision_time: LatencyQuantiles,
    /// The tolerance behind `convergence_n`, for honest labeling.
    pub convergence_tolerance: f64,
    /// First checkpoint whose average reward is within the tolerance of
    /// the final average.
    pub convergence_n: Option<usize>,
}

impl RunMetrics {
    pub fn final_checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    pub fn final_avg_reward(&self) -> Option<f64> {
        self.final_checkpoint().map(|cp| cp.avg_reward)
    }
}

/// First checkpoint whose average reward is within `tolerance` (relative)
/// of the final average. The final checkpoint always qualifies.
pub fn convergence_n(checkpoints: &[Checkpoint], tolerance: f64) -> Option<usize> {
    let last = checkpoints.last()?;
    checkpoints
        .iter()
        .find(|cp| (cp.avg_reward - last.avg_reward).abs() <= tolerance * last.avg_reward.abs())
        .map(|cp| cp.n)
}

/// The replay order as dataset indices.
pub fn replay_order(impressions: &[Impression], config: &RunConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..impressions.len()).collect();
    match config.order {
        Order::Shuffled => {
            let mut rng = rng::stream_rng(config.shuffle_seed, STREAM_SHUFFLE);
            order.shuffle(&mut rng);
        }
        Order::Chronological => {
            order.sort_by_key(|&i| impressions[i].timestamp_ms);
        }
    }
    order
}

/// Fit the context binner offline: on the full dataset by default, or on
/// the first `warmup` impressions (in the order given) for a streaming
/// protocol.
pub fn fit_binner(
    impressions: &[Impression],
    num_contexts: usize,
    warmup: Option<usize>,
) -> Result<ContextBinner> {
    let take = match warmup {
        Some(0) => return Err(Error::InvalidConfig("warmup window must be at least 1".into())),
        Some(w) => w.min(impressions.len()),
        None => impressions.len(),
    };
    let prices: Vec<f64> = impressions[..take].iter().map(|i| i.internal_price).collect();
    ContextBinner::fit(&prices, num_contexts)
}

/// Order- and content-sensitive dataset digest, used to refuse resuming a
/// snapshot against the wrong data.
pub fn dataset_fingerprint(impressions: &[Impression]) -> u64 {
    let mut bytes = Vec::with_capacity(impressions.len() * 33);
    for imp in impressions {
        bytes.extend_from_slice(&imp.id.to_le_bytes());
        bytes.extend_from_slice(&imp.timestamp_ms.to_le_bytes());
        bytes.extend_from_slice(&imp.internal_price.to_bits().to_le_bytes());
        match imp.competitor_max {
            Some(x) => {
                bytes.push(1);
                bytes.extend_from_slice(&x.to_bits().to_le_bytes());
            }
            None => bytes.extend_from_slice(&[0; 9]),
        }
    }
    fnv1a64(&bytes)
}

#[derive(Debug, Clone, Default)]
struct Accum {
    position: usize,
    cum_revenue: f64,
    wins: usize,
    cum_oracle_revenue: f64,
    checkpoints: Vec<Checkpoint>,
    latencies_ns: Vec<u64>,
}

impl Accum {
    fn push_checkpoint(&mut self) {
        let n = self.position as f64;
        self.checkpoints.push(Checkpoint {
            n: self.position,
            cum_revenue: self.cum_revenue,
            avg_reward: self.cum_revenue / n,
            success_rate: self.wins as f64 / n,
            oracle_avg_reward: self.cum_oracle_revenue / n,
            regret: self.cum_oracle_revenue - self.cum_revenue,
        });
    }
}

/// Advance up to `max_steps` impressions. Only `policy.decide` and
/// `policy.feedback` are timed; adjudication is harness work.
fn advance(
    policy: &mut dyn BidPolicy,
    impressions: &[Impression],
    binner: &ContextBinner,
    order: &[usize],
    acc: &mut Accum,
    max_steps: usize,
    checkpoint_every: usize,
) -> Result<usize> {
    let total = order.len();
    let mut stepped = 0;
    while acc.position < total && stepped < max_steps {
        let imp = &impressions[order[acc.position]];
        let x = imp.competitor_max.ok_or_else(|| {
            Error::CannotAdjudicate(format!("impression {} lacks a competing bid", imp.id))
        })?;
        let context = binner.bin(imp.internal_price);

        let t0 = Instant::now();
        let decision = policy.decide(context, imp.internal_price);
        let decide_ns = t0.elapsed().as_nanos() as u64;

        let outcome = adjudicate(decision.bid, imp.internal_price, x);

        let t1 = Instant::now();
        policy.feedback(context, &decision, outcome.won, outcome.revenue);
        let feedback_ns = t1.elapsed().as_nanos() as u64;

        acc.latencies_ns.push(decide_ns.saturating_add(feedback_ns));
        acc.cum_revenue += outcome.revenue;
        acc.wins += outcome.won as usize;
        acc.cum_oracle_revenue += (imp.internal_price - x).max(0.0);
        acc.position += 1;
        stepped += 1;

        if acc.position % checkpoint_every == 0 || acc.position == total {
            acc.push_checkpoint();
        }
    }
    Ok(stepped)
}

fn finalize(policy_name: &str, acc: &Accum) -> RunMetrics {
    RunMetrics {
        policy: policy_name.to_string(),
        checkpoints: acc.checkpoints.clone(),
        decision_time: LatencyQuantiles::from_samples(acc.latencies_ns.clone()),
        convergence_tolerance: CONVERGENCE_TOLERANCE,
        convergence_n: convergence_n(&acc.checkpoints, CONVERGENCE_TOLERANCE),
    }
}

/// Replay the whole dataset through one policy.
pub fn run(
    policy: &mut dyn BidPolicy,
    impressions: &[Impression],
    binner: &ContextBinner,
    config: &RunConfig,
) -> Result<RunMetrics> {
    config.validate()?;
    if impressions.is_empty() {
        return Err(Error::NoData);
    }
    let order = replay_order(impressions, config);
    let mut acc = Accum::default();
    advance(policy, impressions, binner, &order, &mut acc, usize::MAX, config.checkpoint_every)?;
    Ok(finalize(policy.name(), &acc))
}

/// Side-by-side comparison of several policies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub runs: Vec<RunMetrics>,
    /// Index into `runs` of the best final average reward (first on ties).
    pub winner: usize,
}

impl CompareReport {
    pub fn winner_metrics(&self) -> &RunMetrics {
        &self.runs[self.winner]
    }

    /// Human-readable standings, one line per policy plus the verdict.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for run in &self.runs {
            let cp = run.final_checkpoint().expect("non-empty run");
            out.push_str(&format!(
                "{}: n={} avg_reward={:.6} success_rate={:.4} regret={:.3}\n",
                run.policy, cp.n, cp.avg_reward, cp.success_rate, cp.regret
            ));
        }
        let best = self.winner_metrics();
        out.push_str(&format!(
            "winner: {} (final avg reward {:.6})\n",
            best.policy,
            best.final_avg_reward().expect("non-empty run")
        ));
        out
    }
}

/// Replay every policy over the identical impression order (the permutation
/// depends only on the shuffle seed, never on the policy), sequentially and
/// with isolated state.
pub fn compare(
    mut policies: Vec<Box<dyn BidPolicy>>,
    impressions: &[Impression],
    binner: &ContextBinner,
    config: &RunConfig,
) -> Result<CompareReport> {
    if policies.is_empty() {
        return Err(Error::InvalidConfig("need at least one policy to compare".into()));
    }
    let mut runs = Vec::with_capacity(policies.len());
    for policy in policies.iter_mut() {
        runs.push(run(policy.as_mut(), impressions, binner, config)?);
    }
    let mut winner = 0;
    for (i, metrics) in runs.iter().enumerate() {
        let avg = metrics.final_avg_reward().unwrap_or(f64::NEG_INFINITY);
        if avg > runs[winner].final_avg_reward().unwrap_or(f64::NEG_INFINITY) {
            winner = i;
        }
    }
    Ok(CompareReport { runs, winner })
}

/// Write checkpoint trajectories as plot-ready CSV
/// (`policy,n,avg_reward,success_rate,oracle_avg_reward,regret`).
pub fn write_metrics_csv<W: Write>(writer: W, runs: &[RunMetrics]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        policy: &'a str,
        n: usize,
        avg_reward: f64,
        success_rate: f64,
        oracle_avg_reward: f64,
        regret: f64,
    }
    let mut csv = csv::Writer::from_writer(writer);
    for run in runs {
        for cp in &run.checkpoints {
            csv.serialize(Row {
                policy: &run.policy,
                n: cp.n,
                avg_reward: cp.avg_reward,
                success_rate: cp.success_rate,
                oracle_avg_reward: cp.oracle_avg_reward,
                regret: cp.regret,
            })?;
        }
    }
    csv.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Resumable runs

pub const RUN_SNAPSHOT_FORMAT: &str = "bidshade-run-snapshot";
pub const RUN_SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RunSnapshotHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct RunSnapshotBody {
    policy_name: String,
    config: RunConfig,
    dataset_len: usize,
    dataset_fingerprint: u64,
    position: usize,
    cum_revenue: f64,
    wins: usize,
    cum_oracle_revenue: f64,
    checkpoints: Vec<Checkpoint>,
    binner: ContextBinner,
    policy: PolicyState,
}

/// A replay that owns its policy and can be checkpointed to disk mid-run.
///
/// Restoring a snapshot and finishing the run produces bit-identical
/// metrics and policy state to an uninterrupted run. Wall-clock latency is
/// a measurement, not state: a restored run reports timings only for the
/// impressions it processed itself.
pub struct ResumableRun {
    policy: Box<dyn BidPolicy>,
    binner: ContextBinner,
    config: RunConfig,
    order: Vec<usize>,
    fingerprint: u64,
    acc: Accum,
}

impl ResumableRun {
    pub fn new(
        policy: Box<dyn BidPolicy>,
        impressions: &[Impression],
        binner: ContextBinner,
        config: RunConfig,
    ) -> Result<Self> {
        config.validate()?;
        if impressions.is_empty() {
            return Err(Error::NoData);
        }
        let order = replay_order(impressions, &config);
        Ok(ResumableRun {
            policy,
            binner,
            config,
            order,
            fingerprint: dataset_fingerprint(impressions),
            acc: Accum::default(),
        })
    }

    /// Impressions processed so far.
    pub fn position(&self) -> usize {
        self.acc.position
    }

    pub fn is_finished(&self) -> bool {
        self.acc.position == self.order.len()
    }

    pub fn policy(&self) -> &dyn BidPolicy {
        self.policy.as_ref()
    }

    /// Process up to `steps` impressions; returns how many actually ran.
    pub fn step_many(&mut self, impressions: &[Impression], steps: usize) -> Result<usize> {
        if dataset_fingerprint(impressions) != self.fingerprint {
            return Err(Error::CannotAdjudicate(
                "dataset does not match the one this run started on".into(),
            ));
        }
        advance(
            self.policy.as_mut(),
            impressions,
            &self.binner,
            &self.order,
            &mut self.acc,
            steps,
            self.config.checkpoint_every,
        )
    }

    pub fn run_to_end(&mut self, impressions: &[Impression]) -> Result<()> {
        self.step_many(impressions, usize::MAX)?;
        Ok(())
    }

    /// Metrics over everything processed so far.
    pub fn metrics(&self) -> RunMetrics {
        finalize(self.policy.name(), &self.acc)
    }

    /// Persist the full run state (accumulators, binner, policy posterior /
    /// bandit state, RNG positions) as a two-line JSONL document. Size
    /// grows with contexts × particles, not with impressions processed.
    pub fn write_snapshot<W: Write>(&self, mut writer: W) -> Result<()> {
        let header =
            RunSnapshotHeader { format: RUN_SNAPSHOT_FORMAT.to_string(), version: RUN_SNAPSHOT_VERSION };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        let body = RunSnapshotBody {
            policy_name: self.policy.name().to_string(),
            config: self.config,
            dataset_len: self.order.len(),
            dataset_fingerprint: self.fingerprint,
            position: self.acc.position,
            cum_revenue: self.acc.cum_revenue,
            wins: self.acc.wins,
            cum_oracle_revenue: self.acc.cum_oracle_revenue,
            checkpoints: self.acc.checkpoints.clone(),
            binner: self.binner.clone(),
            policy: self.policy.snapshot_state(),
        };
        serde_json::to_writer(&mut writer, &body)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    /// Load a snapshot against the dataset it was taken on. Every check runs
    /// before any state is constructed — a corrupt file loads nothing.
    pub fn read_snapshot<R: BufRead>(reader: R, impressions: &[Impression]) -> Result<Self> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::CorruptSnapshot("empty snapshot file".into()))??;
        let header: RunSnapshotHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::CorruptSnapshot(format!("unreadable header: {e}")))?;
        if header.format != RUN_SNAPSHOT_FORMAT {
            return Err(Error::CorruptSnapshot(format!(
                "not a run snapshot (format {:?})",
                header.format
            )));
        }
        if header.version != RUN_SNAPSHOT_VERSION {
            return Err(Error::SnapshotVersion {
                found: header.version,
                expected: RUN_SNAPSHOT_VERSION,
            });
        }
        let body_line = lines
            .next()
            .ok_or_else(|| Error::CorruptSnapshot("missing snapshot body".into()))??;
        let body: RunSnapshotBody = serde_json::from_str(&body_line)
            .map_err(|e| Error::CorruptSnapshot(format!("unreadable body: {e}")))?;

        body.config.validate()?;
        if body.dataset_len != impressions.len() {
            return Err(Error::CorruptSnapshot(format!(
                "snapshot covers {} impressions but the dataset has {}",
                body.dataset_len,
                impressions.len()
            )));
        }
        if body.dataset_fingerprint != dataset_fingerprint(impressions) {
            return Err(Error::CorruptSnapshot(
                "dataset fingerprint mismatch: snapshot was taken on different data".into(),
            ));
        }
        if body.position > body.dataset_len || body.wins > body.position {
            return Err(Error::CorruptSnapshot("inconsistent run counters".into()));
        }
        if !body.cum_revenue.is_finite() || !body.cum_oracle_revenue.is_finite() {
            return Err(Error::CorruptSnapshot("non-finite accumulators".into()));
        }
        let m = body.config.checkpoint_every;
        let expected_checkpoints = body.position / m
            + usize::from(body.position == body.dataset_len && body.position % m != 0);
        if body.checkpoints.len() != expected_checkpoints {
            return Err(Error::CorruptSnapshot(format!(
                "expected {} checkpoints at position {}, found {}",
                expected_checkpoints,
                body.position,
                body.checkpoints.len()
            )));
        }
        let policy = policy_from_state(body.policy)?;
        if policy.name() != body.policy_name {
            return Err(Error::CorruptSnapshot(format!(
                "policy name mismatch: state restores {:?}, snapshot says {:?}",
                policy.name(),
                body.policy_name
            )));
        }
        let order = replay_order(impressions, &body.config);
        Ok(ResumableRun {
            policy,
            binner: body.binner,
            config: body.config,
            order,
            fingerprint: body.dataset_fingerprint,
            acc: Accum {
                position: body.position,
                cum_revenue: body.cum_revenue,
                wins: body.wins,
                cum_oracle_revenue: body.cum_oracle_revenue,
                checkpoints: body.checkpoints,
                latencies_ns: Vec::new(),
            },
        })
    }
}
