//! Lognormal model of the highest competing bid, plus the expected-revenue
//! objective and the per-parameter optimal-bid solver.
//!
//! Everything downstream (filter, policies) talks to the distribution through
//! [`BidDistribution`], so an alternative family can be slotted in without
//! touching inference or bidding code. Only the lognormal ships today.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

/// Parameters θ = (σ, μ) of a lognormal competing-bid distribution:
/// `ln x ~ N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalParams {
    /// Location of `ln x`.
    pub mu: f64,
    /// Scale of `ln x`; strictly positive.
    pub sigma: f64,
}

impl LognormalParams {
    /// Build a validated parameter pair.
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let params = LognormalParams { mu, sigma };
        params.validate()?;
        Ok(params)
    }

    /// Check the family invariants: finite μ, finite positive σ.
    pub fn validate(&self) -> Result<()> {
        if self.mu.is_finite() && self.sigma.is_finite() && self.sigma > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameters)
        }
    }
}

/// Standard normal CDF Φ(z), computed through the complementary error
/// function: Φ(z) = erfc(−z/√2) / 2.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Upper tail 1 − Φ(z) without the cancellation `1.0 - cdf` would suffer
/// for large z; censored loss likelihoods live in this tail.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// A distribution over the highest competing bid, exposed through its CDF.
///
/// The expected-revenue objective and the bid solver are derived entirely
/// from the CDF, so implementors get both for free.
pub trait BidDistribution {
    /// P(X ≤ value) for the highest competing bid X.
    fn cdf(&self, value: f64) -> f64;

    /// P(X > value); override when the upper tail needs better precision
    /// than `1 − cdf`.
    fn survival(&self, value: f64) -> f64 {
        1.0 - self.cdf(value)
    }

    /// Expected revenue of bidding `bid` against this distribution when the
    /// internal auction closed at `internal_price`: `(p − q) · F(q)`.
    fn expected_revenue(&self, bid: f64, internal_price: f64) -> f64 {
        (internal_price - bid) * self.cdf(bid)
    }
}

impl BidDistribution for LognormalParams {
    fn cdf(&self, value: f64) -> f64 {
        if value <= 0.0 {
            0.0
        } else {
            std_normal_cdf((value.ln() - self.mu) / self.sigma)
        }
    }

    fn survival(&self, value: f64) -> f64 {
        if value <= 0.0 {
            1.0
        } else {
            std_normal_sf((value.ln() - self.mu) / self.sigma)
        }
    }
}

/// Number of equal cells in the coarse scan that brackets the maximum.
const GRID_CELLS: usize = 128;
/// The bracket is narrowed until it is this fraction of `p` wide.
const BRACKET_TOL: f64 = 1e-9;
/// Hard cap on golden-section iterations (floating-point stall guard).
const MAX_REFINE_ITERS: usize = 200;

/// Optimal bid for a validated lognormal: the smallest maximizer of
/// `(p − q) · F_θ(q)` over `q ∈ [0, p]`.
///
/// Errors with [`Error::InvalidParameters`] when θ or the price is
/// non-finite; a non-positive price trivially yields a zero bid.
pub fn optimal_bid(params: &LognormalParams, internal_price: f64) -> Result<f64> {
    params.validate()?;
    if !internal_price.is_finite() {
        return Err(Error::InvalidParameters);
    }
    Ok(optimal_bid_for(params, internal_price))
}

/// Generic bid solver over any [`BidDistribution`].
///
/// Coarse scan over `GRID_CELLS + 1` evenly spaced points brackets the
/// maximum (the objective is unimodal for log-concave CDFs such as the
/// lognormal), then golden-section search narrows the bracket to
/// `BRACKET_TOL · p`. Ties resolve to the smallest bid. The result always
/// lies in `[0, p]`.
pub fn optimal_bid_for<D: BidDistribution + ?Sized>(dist: &D, internal_price: f64) -> f64 {
    let p = internal_price;
    if p <= 0.0 {
        return 0.0;
    }

    // Coarse scan; strict improvement keeps the leftmost best cell.
    let mut best_i = 0;
    let mut best_v = dist.expected_revenue(0.0, p);
    for i in 1..=GRID_CELLS {
        let q = p * i as f64 / GRID_CELLS as f64;
        let v = dist.expected_revenue(q, p);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = p * best_i.saturating_sub(1) as f64 / GRID_CELLS as f64;
    let mut b = p * (best_i + 1).min(GRID_CELLS) as f64 / GRID_CELLS as f64;
    let grid_best = p * best_i as f64 / GRID_CELLS as f64;

    // Golden-section refinement; >= keeps the left sub-interval on ties.
    let invphi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = dist.expected_revenue(c, p);
    let mut fd = dist.expected_revenue(d, p);
    let tol = BRACKET_TOL * p;
    let mut iters = 0;
    while b - a > tol && iters < MAX_REFINE_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = dist.expected_revenue(c, p);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = dist.expected_revenue(d, p);
        }
        iters += 1;
    }

    // Smallest candidate achieving the best value wins.
    let mut candidates = [a, c, d, b, grid_best];
    candidates.sort_by(|x, y| x.total_cmp(y));
    let mut best_q = candidates[0];
    let mut best_v = dist.expected_revenue(best_q, p);
    for &q in &candidates[1..] {
        let v = dist.expected_revenue(q, p);
        if v > best_v {
            best_v = v;
            best_q = q;
        }
    }
    best_q.clamp(0.0, p)
}
