//! Bid-shading engine for first-price header-bidding auctions.
//!
//! An SSP that resells an impression must answer one question per auction:
//! given the internal closing price `p`, which bid `q ≤ p` maximizes the
//! expected margin `(p − q) · P(win)` when the highest competing bid is never
//! observed directly? This crate implements the full loop:
//!
//! - [`auction`]: revenue semantics and the hindsight oracle;
//! - [`context`]: quantile binning of prices into categorical contexts;
//! - [`dist`]: the lognormal competing-bid model and the optimal-bid solver;
//! - [`filter`]: particle-filter posterior over model parameters from
//!   censored win/loss feedback;
//! - [`policy`]: Thompson sampling plus UCB1 / Exp3 / fixed-shading baselines;
//! - [`data`]: log construction (A/B advertiser split, synthetic worlds);
//! - [`sim`]: deterministic replay harness with metrics and resumable
//!   snapshots.

pub mod auction;
pub mod context;
pub mod data;
pub mod dist;
pub mod error;
pub mod filter;
pub mod policy;
pub mod rng;
pub mod sim;

pub use auction::{adjudicate, oracle_bid, revenue, AuctionOutcome, Impression};
pub use context::ContextBinner;
pub use data::{
    build_ab_split, dataset_stats, generate_synthetic, AbSplitConfig, RawBidRecord,
    SyntheticDataset, SyntheticEnvConfig,
};
pub use dist::{optimal_bid, BidDistribution, LognormalParams};
pub use error::{Error, Result};
pub use filter::{FilterConfig, ParticleSet};
pub use policy::{BidPolicy, Exp3, FixedShading, PolicyDecision, ThompsonSampling, Ucb1};
pub use sim::{
    compare, fit_binner, run, write_metrics_csv, CompareReport, Order, ResumableRun, RunConfig,
    RunMetrics,
};
