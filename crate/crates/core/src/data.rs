//! Dataset construction: raw bid-log ingestion, the A/B advertiser split
//! that manufactures (p, x) pairs from a single SSP's log, and synthetic
//! environments with known ground truth.
//!
//! The A/B construction splits advertisers (not auctions) into two fixed
//! groups. Group A plays the role of "our" SSP: the second-highest A bid is
//! the internal closing price `p`. Group B stands in for the rest of the
//! world: its highest bid is the competing bid `x`. Auctions with fewer than
//! two A bids or no B bid carry no signal and are dropped.

use crate::auction::Impression;
use crate::dist::LognormalParams;
use crate::error::{Error, Result};
use crate::rng::{self, fnv1a64, splitmix64, STREAM_SYNTHETIC};
use rand::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// One row of a raw header-bidding log: a single advertiser's bid in a
/// single auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawBidRecord {
    pub auction_id: String,
    pub advertiser_id: String,
    pub bid: f64,
    pub timestamp_ms: i64,
}

/// Which side of the advertiser split an advertiser landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

/// Knobs of the A/B construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbSplitConfig {
    /// Drives the per-advertiser coin flips.
    pub seed: u64,
    /// Probability an advertiser lands in group A.
    pub bias: f64,
    /// Multiplicative price rescale applied to both p and x on export
    /// (unit anonymization).
    pub rescale: f64,
}

impl Default for AbSplitConfig {
    fn default() -> Self {
        AbSplitConfig { seed: 0, bias: 0.5, rescale: 1.0 }
    }
}

impl AbSplitConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bias) || !self.bias.is_finite() {
            return Err(Error::InvalidConfig("bias must lie in [0, 1]".into()));
        }
        if !self.rescale.is_finite() || self.rescale <= 0.0 {
            return Err(Error::InvalidConfig("rescale must be positive".into()));
        }
        Ok(())
    }
}

/// Assign every advertiser in `records` to a group, once, globally.
///
/// The flip is a pure function of `(advertiser_id, seed)` — hash the id,
/// mix in the seed, and compare a derived uniform against `bias` — so the
/// assignment does not depend on record order or on which auctions an
/// advertiser appears in.
pub fn assign_groups(records: &[RawBidRecord], seed: u64, bias: f64) -> BTreeMap<String, Group> {
    let mut groups = BTreeMap::new();
    for record in records {
        groups.entry(record.advertiser_id.clone()).or_insert_with(|| {
            let mixed = splitmix64(fnv1a64(record.advertiser_id.as_bytes()) ^ splitmix64(seed));
            let u = (mixed >> 11) as f64 / (1u64 << 53) as f64;
            if u < bias {
                Group::A
            } else {
                Group::B
            }
        });
    }
    groups
}

/// Build impressions from a bid log under a fixed advertiser assignment.
///
/// Per auction: `p` = second-highest group-A bid, `x` = highest group-B
/// bid; auctions with fewer than two A bids or no B bid are dropped. The
/// output is sorted by `(timestamp, auction_id)` — an auction's timestamp
/// is its earliest bid — and re-numbered 0..n.
pub fn split_with_assignment(
    records: &[RawBidRecord],
    groups: &BTreeMap<String, Group>,
    rescale: f64,
) -> Result<Vec<Impression>> {
    if records.is_empty() {
        return Err(Error::NoData);
    }
    for r in records {
        if !r.bid.is_finite() || r.bid < 0.0 {
            return Err(Error::MalformedRecord(format!(
                "bid {} in auction {:?} must be finite and non-negative",
                r.bid, r.auction_id
            )));
        }
    }

    struct Auction {
        timestamp_ms: i64,
        a_bids: Vec<f64>,
        b_max: Option<f64>,
    }
    let mut auctions: HashMap<&str, Auction> = HashMap::new();
    for r in records {
        let auction = auctions.entry(r.auction_id.as_str()).or_insert(Auction {
            timestamp_ms: r.timestamp_ms,
            a_bids: Vec::new(),
            b_max: None,
        });
        auction.timestamp_ms = auction.timestamp_ms.min(r.timestamp_ms);
        let group = groups.get(&r.advertiser_id).ok_or_else(|| {
            Error::MalformedRecord(format!("advertiser {:?} has no group", r.advertiser_id))
        })?;
        match group {
            Group::A => auction.a_bids.push(r.bid),
            Group::B => {
                auction.b_max = Some(auction.b_max.map_or(r.bid, |m: f64| m.max(r.bid)))
            }
        }
    }

    let mut rows: Vec<(i64, &str, f64, f64)> = Vec::new();
    for (id, mut auction) in auctions {
        let Some(x) = auction.b_max else { continue };
        if auction.a_bids.len() < 2 {
            continue;
        }
        auction.a_bids.sort_by(|a, b| b.total_cmp(a));
        let p = auction.a_bids[1];
        rows.push((auction.timestamp_ms, id, p * rescale, x * rescale));
    }
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (timestamp_ms, _, p, x))| Impression {
            id: i as u64,
            timestamp_ms,
            internal_price: p,
            competitor_max: Some(x),
            context_id: None,
        })
        .collect())
}

/// The full A/B construction: assign advertisers, then split.
pub fn build_ab_split(records: &[RawBidRecord], config: AbSplitConfig) -> Result<Vec<Impression>> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::NoData);
    }
    let groups = assign_groups(records, config.seed, config.bias);
    split_with_assignment(records, &groups, config.rescale)
}

// ---------------------------------------------------------------------------
// Synthetic environments

/// How one context's true parameters move over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Trajectory {
    /// Stationary truth.
    Constant,
    /// `μ(i) = μ₀ + amplitude · sin(2π i / horizon)` on the global
    /// impression index — one full cycle over the run.
    SinusoidalMu { amplitude: f64 },
    /// μ takes a `N(0, step)` kick each time the context is drawn.
    RandomWalk { step: f64 },
}

/// One context's ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextTruth {
    pub base: LognormalParams,
    pub trajectory: Trajectory,
}

/// Generator settings for a synthetic world with known competing bids.
///
/// Internal prices are correlated with competing bids through a shared
/// Gaussian factor: `ln x = μ_c + σ_c·z₁` and
/// `ln p = μ_c + price_mu_offset + price_sigma·(ρ·z₁ + √(1−ρ²)·z₂)`,
/// so `corr(ln p, ln x) = ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEnvConfig {
    pub contexts: Vec<ContextTruth>,
    /// Correlation between ln p and ln x.
    pub rho: f64,
    /// Location shift of ln p relative to the context's μ.
    pub price_mu_offset: f64,
    /// Scale of ln p.
    pub price_sigma: f64,
    /// Number of impressions to generate.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for SyntheticEnvConfig {
    /// Ten stationary contexts with base μ spread evenly over [0, 1],
    /// σ = 0.4, ρ = 0.5, and prices marked up by 0.7 in log space.
    fn default() -> Self {
        SyntheticEnvConfig {
            contexts: (0..10)
                .map(|c| ContextTruth {
                    base: LognormalParams { mu: c as f64 / 9.0, sigma: 0.4 },
                    trajectory: Trajectory::Constant,
                })
                .collect(),
            rho: 0.5,
            price_mu_offset: 0.7,
            price_sigma: 0.4,
            horizon: 100_000,
            seed: 0,
        }
    }
}

impl SyntheticEnvConfig {
    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.contexts.is_empty() {
            return Err(Error::InvalidConfig("need at least one context".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !self.rho.is_finite() || !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig("rho must lie in [-1, 1]".into()));
        }
        if !self.price_sigma.is_finite() || self.price_sigma < 0.0 {
            return Err(Error::InvalidConfig("price_sigma must be non-negative".into()));
        }
        if !self.price_mu_offset.is_finite() {
            return Err(Error::InvalidConfig("price_mu_offset must be finite".into()));
        }
        for (c, truth) in self.contexts.iter().enumerate() {
            truth.base.validate()?;
            match truth.trajectory {
                Trajectory::Constant => {}
                Trajectory::SinusoidalMu { amplitude } => {
                    if !amplitude.is_finite() {
                        return Err(Error::InvalidConfig(format!(
                            "context {c}: sinusoidal amplitude must be finite"
                        )));
                    }
                }
                Trajectory::RandomWalk { step } => {
                    if !step.is_finite() || step < 0.0 {
                        return Err(Error::InvalidConfig(format!(
                            "context {c}: random-walk step must be non-negative"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ground truth retained for one generated impression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// The true context the impression was drawn from (the replay harness
    /// re-bins by price and may disagree).
    pub context: usize,
    /// The parameters in force when the competing bid was drawn.
    pub theta: LognormalParams,
}

/// A generated world: replayable impressions plus per-impression truth.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub impressions: Vec<Impression>,
    pub truths: Vec<SyntheticTruth>,
}

/// Generate a synthetic impression stream. Deterministic in `config.seed`;
/// every impression carries its competing bid for later adjudication.
pub fn generate_synthetic(config: &SyntheticEnvConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = rng::stream_rng(config.seed, STREAM_SYNTHETIC);
    let n_contexts = config.contexts.len();
    // Random-walk trajectories carry per-context state.
    let mut walk_mu: Vec<f64> = config.contexts.iter().map(|c| c.base.mu).collect();
    let beta = (1.0 - config.rho * config.rho).sqrt();

    let mut impressions = Vec::with_capacity(config.horizon);
    let mut truths = Vec::with_capacity(config.horizon);
    for i in 0..config.horizon {
        let c = rng.random_range(0..n_contexts);
        let truth = &config.contexts[c];
        let theta = match truth.trajectory {
            Trajectory::Constant => truth.base,
            Trajectory::SinusoidalMu { amplitude } => {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / config.horizon as f64;
                LognormalParams { mu: truth.base.mu + amplitude * phase.sin(), ..truth.base }
            }
            Trajectory::RandomWalk { step } => {
                if step > 0.0 {
                    let kick: f64 = rng.sample(StandardNormal);
                    walk_mu[c] += step * kick;
                }
                LognormalParams { mu: walk_mu[c], ..truth.base }
            }
        };
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let x = (theta.mu + theta.sigma * z1).exp();
        let ln_p = theta.mu + config.price_mu_offset
            + config.price_sigma * (config.rho * z1 + beta * z2);
        impressions.push(Impression {
            id: i as u64,
            timestamp_ms: i as i64,
            internal_price: ln_p.exp(),
            competitor_max: Some(x),
            context_id: None,
        });
        truths.push(SyntheticTruth { context: c, theta });
    }
    Ok(SyntheticDataset { impressions, truths })
}

// ---------------------------------------------------------------------------
// Stats

/// Headline numbers of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n: usize,
    /// Share of auctions where the competing bid was at or below the
    /// internal price (ties count: those auctions are winnable at par).
    pub share_x_le_p: f64,
    /// Impressions per context, when a binner is supplied.
    pub per_context_counts: Option<Vec<usize>>,
}

impl DatasetStats {
    /// The share as a one-decimal percentage, e.g. `55.2%`.
    pub fn share_percent(&self) -> String {
        format!("{:.1}%", self.share_x_le_p * 100.0)
    }
}

/// Compute dataset stats. Every impression must carry its competing bid.
pub fn dataset_stats(
    impressions: &[Impression],
    binner: Option<&crate::context::ContextBinner>,
) -> Result<DatasetStats> {
    if impressions.is_empty() {
        return Err(Error::NoData);
    }
    let mut winnable = 0usize;
    for imp in impressions {
        let x = imp.competitor_max.ok_or_else(|| {
            Error::CannotAdjudicate(format!("impression {} lacks a competing bid", imp.id))
        })?;
        if x <= imp.internal_price {
            winnable += 1;
        }
    }
    let per_context_counts = binner.map(|b| {
        let mut counts = vec![0usize; b.num_contexts()];
        for imp in impressions {
            counts[b.bin(imp.internal_price)] += 1;
        }
        counts
    });
    Ok(DatasetStats {
        n: impressions.len(),
        share_x_le_p: winnable as f64 / impressions.len() as f64,
        per_context_counts,
    })
}

// ---------------------------------------------------------------------------
// CSV I/O (plain or gzip, chosen by file extension)

/// Flat CSV row for an impression; the context column is omitted because
/// contexts are assigned at replay time.
#[derive(Debug, Serialize, Deserialize)]
struct ImpressionRow {
    id: u64,
    timestamp_ms: i64,
    internal_price: f64,
    competitor_max: Option<f64>,
}

fn open_reader(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(flate2::read::MultiGzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn open_writer(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(flate2::write::GzEncoder::new(
            BufWriter::new(file),
            flate2::Compression::default(),
        )))
    } else {
        Ok(Box::new(BufWriter::new(file)))
    }
}

/// Read a raw bid log (`auction_id,advertiser_id,bid,timestamp_ms`).
pub fn read_bid_records<R: Read>(reader: R) -> Result<Vec<RawBidRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for row in csv.deserialize() {
        records.push(row.map_err(|e| Error::MalformedRecord(e.to_string()))?);
    }
    Ok(records)
}

/// Load a raw bid log from a path (`.gz` handled transparently).
pub fn load_bid_records(path: &Path) -> Result<Vec<RawBidRecord>> {
    read_bid_records(open_reader(path)?)
}

/// Write a raw bid log.
pub fn write_bid_records<W: Write>(writer: W, records: &[RawBidRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for r in records {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

/// Read impressions (`id,timestamp_ms,internal_price,competitor_max`; an
/// empty competitor field means unknown).
pub fn read_impressions<R: Read>(reader: R) -> Result<Vec<Impression>> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut impressions = Vec::new();
    for row in csv.deserialize() {
        let row: ImpressionRow = row.map_err(|e| Error::MalformedRecord(e.to_string()))?;
        if !row.internal_price.is_finite() || row.internal_price < 0.0 {
            return Err(Error::MalformedRecord(format!(
                "impression {}: internal_price must be finite and non-negative",
                row.id
            )));
        }
        if let Some(x) = row.competitor_max {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::MalformedRecord(format!(
                    "impression {}: competitor_max must be finite and non-negative",
                    row.id
                )));
            }
        }
        impressions.push(Impression {
            id: row.id,
            timestamp_ms: row.timestamp_ms,
            internal_price: row.internal_price,
            competitor_max: row.competitor_max,
            context_id: None,
        });
    }
    Ok(impressions)
}

/// Load impressions from a path (`.gz` handled transparently).
pub fn load_impressions(path: &Path) -> Result<Vec<Impression>> {
    read_impressions(open_reader(path)?)
}

/// Write impressions as CSV.
pub fn write_impressions<W: Write>(writer: W, impressions: &[Impression]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for imp in impressions {
        csv.serialize(ImpressionRow {
            id: imp.id,
            timestamp_ms: imp.timestamp_ms,
            internal_price: imp.internal_price,
            competitor_max: imp.competitor_max,
        })?;
    }
    csv.flush()?;
    Ok(())
}

/// Save impressions to a path (`.gz` handled transparently).
pub fn save_impressions(path: &Path, impressions: &[Impression]) -> Result<()> {
    let mut writer = open_writer(path)?;
    write_impressions(&mut writer, impressions)?;
    writer.flush()?;
    Ok(())
}
