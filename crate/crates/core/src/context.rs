//! Price-based context binning.
//!
//! The internal closing price is the only context feature: prices are mapped
//! to one of `C` bins by the empirical quantiles of a fitting sample, so each
//! bin covers roughly the same number of auctions. Bin `l` covers the
//! half-open interval `[edges[l-1], edges[l])`, with the first and last bins
//! extended to ±∞ so unseen prices always land somewhere.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default number of contexts for production-sized runs.
pub const DEFAULT_NUM_CONTEXTS: usize = 100;
/// Default warmup window for streaming fits (see [`ContextBinner::fit`]'s
/// offline counterpart in the simulation harness).
pub const DEFAULT_WARMUP_WINDOW: usize = 10_000;

/// A fitted price-to-context map: `num_contexts - 1` sorted thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBinner")]
pub struct ContextBinner {
    num_contexts: usize,
    edges: Vec<f64>,
}

/// Unvalidated wire form; [`ContextBinner`] deserializes through this.
#[derive(Deserialize)]
struct RawBinner {
    num_contexts: usize,
    edges: Vec<f64>,
}

impl TryFrom<RawBinner> for ContextBinner {
    type Error = Error;

    fn try_from(raw: RawBinner) -> Result<Self> {
        if raw.num_contexts == 0 {
            return Err(Error::InvalidConfig("num_contexts must be at least 1".into()));
        }
        if raw.edges.len() + 1 != raw.num_contexts {
            return Err(Error::InvalidConfig(format!(
                "expected {} edges for {} contexts, found {}",
                raw.num_contexts - 1,
                raw.num_contexts,
                raw.edges.len()
            )));
        }
        if raw.edges.iter().any(|e| !e.is_finite()) || raw.edges.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig("edges must be finite and sorted".into()));
        }
        Ok(ContextBinner { num_contexts: raw.num_contexts, edges: raw.edges })
    }
}

impl ContextBinner {
    /// Fit edges at quantile levels `l / C`, `l = 1..C-1`, using linear
    /// interpolation between order statistics.
    ///
    /// Ties in the data can collapse edges and unbalance bins; on
    /// all-distinct data every bin count is within 1 of `n / C`.
    pub fn fit(prices: &[f64], num_contexts: usize) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::NoData);
        }
        if num_contexts == 0 {
            return Err(Error::InvalidConfig("num_contexts must be at least 1".into()));
        }
        if let Some(bad) = prices.iter().find(|p| !p.is_finite()) {
            return Err(Error::MalformedRecord(format!("non-finite price {bad} in fit data")));
        }
        let mut sorted = prices.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let edges = (1..num_contexts)
            .map(|l| quantile_sorted(&sorted, l as f64 / num_contexts as f64))
            .collect();
        Ok(ContextBinner { num_contexts, edges })
    }

    /// Map a price to its context in `[0, num_contexts)`.
    ///
    /// Boundary prices belong to the bin on the right: a price equal to an
    /// edge starts the next bin. Prices at or above the last edge land in
    /// the last bin, prices below the first edge in bin 0.
    pub fn bin(&self, price: f64) -> usize {
        self.edges.partition_point(|e| *e <= price)
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
}

/// Linear-interpolation empirical quantile (the common "type 7" estimator):
/// at level `t`, interpolate between the order statistics flanking rank
/// `(n - 1) · t`.
fn quantile_sorted(sorted: &[f64], t: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * t;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
