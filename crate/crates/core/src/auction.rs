//! Domain types and revenue semantics for a single header-bidding auction,
//! seen from the bidding SSP's side.
//!
//! The SSP closes its internal auction at price `p`, then submits a bid `q`
//! into a first-price auction against the other SSPs, whose highest bid is
//! `x`. It wins iff `q >= x` (ties win), collects `p` from the advertiser
//! and pays `q` to the publisher, so the auction revenue is
//! `1{q >= x} * (p - q)`. `x` is never observed directly; only the win/loss
//! indicator feeds back to the bidder.

use serde::{Deserialize, Serialize};

/// One auction opportunity in a replayed log.
///
/// `competitor_max` is the highest competing bid. It is present in
/// simulation logs so the harness can adjudicate wins, but it is never
/// shown to a policy before feedback. Deployment-style logs may omit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impression {
    /// Monotone sequence index within a log.
    pub id: u64,
    /// Milliseconds since epoch.
    pub timestamp_ms: i64,
    /// Closing price of the SSP's internal auction (`p`).
    pub internal_price: f64,
    /// Highest bid among the other SSPs (`x`), when known.
    pub competitor_max: Option<f64>,
    /// Context bin in `[0, C)`, assigned by the binner at replay time.
    pub context_id: Option<usize>,
}

/// Adjudicated result of submitting `bid` into one auction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    /// Whether `bid >= x`.
    pub won: bool,
    /// The bid that was submitted.
    pub bid: f64,
    /// `internal_price - bid` on a win, zero on a loss. May be negative:
    /// overbidding past `p` is representable and must not be clamped.
    pub revenue: f64,
}

/// Revenue of bidding `bid` when the internal auction closed at
/// `internal_price` and the best competing bid was `competitor_max`.
///
/// A tie (`bid == competitor_max`) counts as a win.
pub fn revenue(bid: f64, internal_price: f64, competitor_max: f64) -> f64 {
    if bid >= competitor_max {
        internal_price - bid
    } else {
        0.0
    }
}

/// Adjudicate one auction, packaging the win flag with the revenue.
pub fn adjudicate(bid: f64, internal_price: f64, competitor_max: f64) -> AuctionOutcome {
    let won = bid >= competitor_max;
    AuctionOutcome {
        won,
        bid,
        revenue: if won { internal_price - bid } else { 0.0 },
    }
}

/// Hindsight-optimal bid: pay exactly the competing price when the auction
/// is profitable (`x <= p`), otherwise abstain by bidding zero.
///
/// Feeding the result to [`revenue`] yields `max(0, p - x)`.
pub fn oracle_bid(internal_price: f64, competitor_max: f64) -> f64 {
    if competitor_max <= internal_price {
        competitor_max
    } else {
        0.0
    }
}
