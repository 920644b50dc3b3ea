//! Bidding policies behind one censored-feedback interface.
//!
//! A policy sees the context and the internal price when deciding, and
//! afterwards only `(its own decision, won, revenue)` — never the competing
//! bid itself. That censorship is enforced by the [`BidPolicy`] signature:
//! there is simply no parameter through which the competitor's price could
//! arrive.
//!
//! Implementations:
//! - [`ThompsonSampling`]: per-context particle filters; sample θ, bid the
//!   θ-optimal amount.
//! - [`Ucb1`] / [`Exp3`]: classic bandits over `J` multiplicative shading
//!   arms, arm `j` bidding `(j/J) · p`.
//! - [`FixedShading`]: the constant-fraction control.
//!
//! The hindsight oracle is not a policy: it needs the competing bid, so it
//! lives harness-side where uncensored logs are available.

use crate::dist::{optimal_bid_for, LognormalParams};
use crate::error::{Error, Result};
use crate::filter::{FilterConfig, FilterSnapshotRecord, ParticleSet};
use crate::rng::{self, STREAM_EXP3_BASE};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a policy chose for one impression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    /// The submitted bid.
    pub bid: f64,
    /// Shading arm j ∈ 1..=J for bandit baselines (bid = (j/J)·p).
    pub arm: Option<usize>,
    /// The posterior draw behind a Thompson-sampling bid, for diagnostics.
    pub sampled_theta: Option<LognormalParams>,
}

/// The censored decision/feedback interface every policy implements.
///
/// The feedback channel echoes the policy's own decision (so bandits can
/// recover which arm they pulled) plus the win flag and realized revenue.
pub trait BidPolicy {
    /// Short stable name used in metrics output.
    fn name(&self) -> &str;

    /// Choose a bid for an impression in `context` with internal price `p`.
    fn decide(&mut self, context: usize, internal_price: f64) -> PolicyDecision;

    /// Absorb the outcome of the decision this policy made for `context`.
    fn feedback(&mut self, context: usize, decision: &PolicyDecision, won: bool, revenue: f64);

    /// Serializable state for run snapshots.
    fn snapshot_state(&self) -> PolicyState;
}

/// Serializable policy state; the run-snapshot payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum PolicyState {
    Ts {
        config: FilterConfig,
        filters: Vec<FilterSnapshotRecord>,
    },
    Ucb1 {
        arms: usize,
        bound: f64,
        num_contexts: usize,
        contextual: bool,
        states: Vec<UcbStateSnapshot>,
    },
    Exp3 {
        arms: usize,
        gamma: f64,
        bound: f64,
        num_contexts: usize,
        contextual: bool,
        states: Vec<Exp3StateSnapshot>,
    },
    Fixed {
        alpha: f64,
    },
}

/// Rebuild a policy from a snapshot, restoring bit-identical behavior.
pub fn policy_from_state(state: PolicyState) -> Result<Box<dyn BidPolicy>> {
    match state {
        PolicyState::Ts { config, filters } => {
            let mut sets = Vec::with_capacity(filters.len());
            for (i, record) in filters.iter().enumerate() {
                if record.context != i {
                    return Err(Error::CorruptSnapshot(format!(
                        "filter contexts out of order: expected {i}, found {}",
                        record.context
                    )));
                }
                sets.push(ParticleSet::from_snapshot_record(config.clone(), record)?);
            }
            Ok(Box::new(ThompsonSampling::from_filters(sets)?))
        }
        PolicyState::Ucb1 { arms, bound, num_contexts, contextual, states } => {
            let mut policy = Ucb1::new(arms, bound, num_contexts, contextual)?;
            if states.len() != policy.states.len() {
                return Err(Error::CorruptSnapshot("wrong UCB state count".into()));
            }
            for (slot, snap) in policy.states.iter_mut().zip(states) {
                if snap.counts.len() != arms || snap.means.len() != arms {
                    return Err(Error::CorruptSnapshot("wrong UCB arm count".into()));
                }
                slot.counts = snap.counts;
                slot.means = snap.means;
                slot.total = snap.total;
            }
            Ok(Box::new(policy))
        }
        PolicyState::Exp3 { arms, gamma, bound, num_contexts, contextual, states } => {
            // Seed is irrelevant here; every stream is overwritten below.
            let mut policy = Exp3::new(arms, gamma, bound, num_contexts, contextual, 0)?;
            if states.len() != policy.states.len() {
                return Err(Error::CorruptSnapshot("wrong Exp3 state count".into()));
            }
            for (slot, snap) in policy.states.iter_mut().zip(states) {
                if snap.weights.len() != arms {
                    return Err(Error::CorruptSnapshot("wrong Exp3 arm count".into()));
                }
                if snap.weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
                    return Err(Error::CorruptSnapshot("Exp3 weights must be positive".into()));
                }
                slot.weights = snap.weights;
                slot.rng = rng::rng_state_from_hex(&snap.rng)?;
            }
            Ok(Box::new(policy))
        }
        PolicyState::Fixed { alpha } => Ok(Box::new(FixedShading::new(alpha)?)),
    }
}

// ---------------------------------------------------------------------------
// Thompson sampling

/// The particle-filter policy: sample θ from the context's posterior, bid
/// the θ-optimal amount, and push the censored outcome back into the filter.
#[derive(Debug, Clone)]
pub struct ThompsonSampling {
    filters: Vec<ParticleSet>,
}

impl ThompsonSampling {
    /// One fresh filter per context, each on its own RNG stream derived
    /// from `(master_seed, context)`.
    pub fn new(config: FilterConfig, num_contexts: usize, master_seed: u64) -> Result<Self> {
        if num_contexts == 0 {
            return Err(Error::InvalidConfig("num_contexts must be at least 1".into()));
        }
        let filters = (0..num_contexts)
            .map(|c| ParticleSet::init(config.clone(), master_seed, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(ThompsonSampling { filters })
    }

    /// Adopt pre-built filters (snapshot restore, tests); index = context.
    pub fn from_filters(filters: Vec<ParticleSet>) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::InvalidConfig("need at least one context filter".into()));
        }
        if filters.windows(2).any(|w| w[0].config() != w[1].config()) {
            return Err(Error::InvalidConfig("context filters disagree on config".into()));
        }
        Ok(ThompsonSampling { filters })
    }

    pub fn filter(&self, context: usize) -> &ParticleSet {
        &self.filters[context]
    }

    pub fn filters(&self) -> &[ParticleSet] {
        &self.filters
    }

    pub fn num_contexts(&self) -> usize {
        self.filters.len()
    }
}

impl BidPolicy for ThompsonSampling {
    fn name(&self) -> &str {
        "ts"
    }

    fn decide(&mut self, context: usize, internal_price: f64) -> PolicyDecision {
        let theta = self.filters[context].sample_theta();
        PolicyDecision {
            bid: optimal_bid_for(&theta, internal_price),
            arm: None,
            sampled_theta: Some(theta),
        }
    }

    fn feedback(&mut self, context: usize, decision: &PolicyDecision, won: bool, _revenue: f64) {
        self.filters[context].update(decision.bid, won);
    }

    fn snapshot_state(&self) -> PolicyState {
        PolicyState::Ts {
            config: self.filters[0].config().clone(),
            filters: self
                .filters
                .iter()
                .enumerate()
                .map(|(c, f)| f.snapshot_record(c))
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Shading arms shared by the bandit baselines

/// Bid of shading arm `j ∈ 1..=arms`: `(j / J) · p`.
fn arm_bid(arm: usize, arms: usize, internal_price: f64) -> f64 {
    (arm as f64 / arms as f64) * internal_price
}

fn validate_bandit_inputs(arms: usize, bound: f64, num_contexts: usize) -> Result<()> {
    if arms == 0 {
        return Err(Error::InvalidConfig("need at least one arm".into()));
    }
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::InvalidConfig("reward bound must be positive".into()));
    }
    if num_contexts == 0 {
        return Err(Error::InvalidConfig("num_contexts must be at least 1".into()));
    }
    Ok(())
}

/// Scale a realized revenue into [0, 1] by the bound, clamping (and
/// warning) when it falls outside — the bandit analyses assume bounded
/// rewards.
fn scale_reward(revenue: f64, bound: f64) -> f64 {
    let scaled = revenue / bound;
    if !(0.0..=1.0).contains(&scaled) {
        log::warn!("reward {revenue} outside [0, {bound}]; clamping");
        return scaled.clamp(0.0, 1.0);
    }
    scaled
}

// ---------------------------------------------------------------------------
// UCB1

/// UCB1 exploration index: empirical mean plus `sqrt(2 ln t / n)`.
pub fn ucb1_index(mean: f64, pulls: u64, total: u64) -> f64 {
    mean + (2.0 * (total as f64).ln() / pulls as f64).sqrt()
}

#[derive(Debug, Clone)]
struct UcbState {
    counts: Vec<u64>,
    means: Vec<f64>,
    total: u64,
}

/// Per-arm statistics of one UCB1 bandit on the wire.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UcbStateSnapshot {
    pub counts: Vec<u64>,
    pub means: Vec<f64>,
    pub total: u64,
}

/// UCB1 over the shading grid. Runs one independent bandit per context by
/// default; `contextual = false` shares a single bandit across contexts.
#[derive(Debug, Clone)]
pub struct Ucb1 {
    arms: usize,
    bound: f64,
    num_contexts: usize,
    contextual: bool,
    states: Vec<UcbState>,
}

impl Ucb1 {
    pub fn new(arms: usize, bound: f64, num_contexts: usize, contextual: bool) -> Result<Self> {
        validate_bandit_inputs(arms, bound, num_contexts)?;
        let state_count = if contextual { num_contexts } else { 1 };
        Ok(Ucb1 {
            arms,
            bound,
            num_contexts,
            contextual,
            states: vec![
                UcbState { counts: vec![0; arms], means: vec![0.0; arms], total: 0 };
                state_count
            ],
        })
    }

    fn state_index(&self, context: usize) -> usize {
        if self.contextual {
            context
        } else {
            0
        }
    }

    /// Arm the bandit for `context` would pull next (1-based).
    fn choose_arm(&self, context: usize) -> usize {
        let state = &self.states[self.state_index(context)];
        // Forced exploration: lowest unplayed arm first.
        if let Some(idx) = state.counts.iter().position(|&n| n == 0) {
            return idx + 1;
        }
        let mut best = 0;
        let mut best_index = f64::NEG_INFINITY;
        for j in 0..self.arms {
            let index = ucb1_index(state.means[j], state.counts[j], state.total);
            // Strict improvement keeps the lowest arm on ties.
            if index > best_index {
                best_index = index;
                best = j;
            }
        }
        best + 1
    }
}

impl BidPolicy for Ucb1 {
    fn name(&self) -> &str {
        "ucb1"
    }

    fn decide(&mut self, context: usize, internal_price: f64) -> PolicyDecision {
        let arm = self.choose_arm(context);
        PolicyDecision {
            bid: arm_bid(arm, self.arms, internal_price),
            arm: Some(arm),
            sampled_theta: None,
        }
    }

    fn feedback(&mut self, context: usize, decision: &PolicyDecision, _won: bool, revenue: f64) {
        let Some(arm) = decision.arm else {
            log::warn!("UCB feedback without an arm; ignoring");
            return;
        };
        let reward = scale_reward(revenue, self.bound);
        let idx = self.state_index(context);
        let state = &mut self.states[idx];
        let j = arm - 1;
        state.counts[j] += 1;
        state.total += 1;
        state.means[j] += (reward - state.means[j]) / state.counts[j] as f64;
    }

    fn snapshot_state(&self) -> PolicyState {
        PolicyState::Ucb1 {
            arms: self.arms,
            bound: self.bound,
            num_contexts: self.num_contexts,
            contextual: self.contextual,
            states: self
                .states
                .iter()
                .map(|s| UcbStateSnapshot {
                    counts: s.counts.clone(),
                    means: s.means.clone(),
                    total: s.total,
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Exp3

#[derive(Debug, Clone)]
struct Exp3State {
    weights: Vec<f64>,
    rng: ChaCha8Rng,
}

/// One Exp3 bandit's weights and RNG stream on the wire.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exp3StateSnapshot {
    pub weights: Vec<f64>,
    pub rng: String,
}

/// Exp3 over the shading grid: exponential weights with a γ-uniform
/// exploration mixture. One independent bandit per context by default.
#[derive(Debug, Clone)]
pub struct Exp3 {
    arms: usize,
    gamma: f64,
    bound: f64,
    num_contexts: usize,
    contextual: bool,
    states: Vec<Exp3State>,
}

impl Exp3 {
    pub fn new(
        arms: usize,
        gamma: f64,
        bound: f64,
        num_contexts: usize,
        contextual: bool,
        master_seed: u64,
    ) -> Result<Self> {
        validate_bandit_inputs(arms, bound, num_contexts)?;
        if !gamma.is_finite() || !(0.0 < gamma && gamma <= 1.0) {
            return Err(Error::InvalidConfig("gamma must lie in (0, 1]".into()));
        }
        let state_count = if contextual { num_contexts } else { 1 };
        let states = (0..state_count)
            .map(|c| Exp3State {
                weights: vec![1.0; arms],
                rng: rng::stream_rng(master_seed, STREAM_EXP3_BASE + c as u64),
            })
            .collect();
        Ok(Exp3 { arms, gamma, bound, num_contexts, contextual, states })
    }

    /// The regret-optimal mixing rate for a known horizon:
    /// `min(1, sqrt(J ln J / ((e − 1) n)))`.
    pub fn theory_gamma(arms: usize, horizon: u64) -> f64 {
        let j = arms as f64;
        (j * j.ln() / ((std::f64::consts::E - 1.0) * horizon as f64)).sqrt().min(1.0)
    }

    fn state_index(&self, context: usize) -> usize {
        if self.contextual {
            context
        } else {
            0
        }
    }

    /// Current arm distribution for `context`:
    /// `p_j = (1 − γ) w_j / Σw + γ / J`.
    pub fn probabilities(&self, context: usize) -> Vec<f64> {
        let state = &self.states[self.state_index(context)];
        let total: f64 = state.weights.iter().sum();
        state
            .weights
            .iter()
            .map(|w| (1.0 - self.gamma) * w / total + self.gamma / self.arms as f64)
            .collect()
    }
}

impl BidPolicy for Exp3 {
    fn name(&self) -> &str {
        "exp3"
    }

    fn decide(&mut self, context: usize, internal_price: f64) -> PolicyDecision {
        let probs = self.probabilities(context);
        let idx = self.state_index(context);
        let state = &mut self.states[idx];
        let dist = WeightedIndex::new(&probs).expect("probabilities are positive");
        let arm = dist.sample(&mut state.rng) + 1;
        PolicyDecision {
            bid: arm_bid(arm, self.arms, internal_price),
            arm: Some(arm),
            sampled_theta: None,
        }
    }

    fn feedback(&mut self, context: usize, decision: &PolicyDecision, _won: bool, revenue: f64) {
        let Some(arm) = decision.arm else {
            log::warn!("Exp3 feedback without an arm; ignoring");
            return;
        };
        let reward = scale_reward(revenue, self.bound);
        // The state is untouched between a decide and its feedback, so the
        // arm's probability can be recomputed here instead of carried.
        let prob = self.probabilities(context)[arm - 1];
        let estimate = reward / prob;
        let idx = self.state_index(context);
        let state = &mut self.states[idx];
        state.weights[arm - 1] *= (self.gamma * estimate / self.arms as f64).exp();
        // Exponential weights only matter up to a common factor; rescale
        // before they overflow.
        let max = state.weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max > 1e300 {
            for w in &mut state.weights {
                *w /= max;
            }
        }
    }

    fn snapshot_state(&self) -> PolicyState {
        PolicyState::Exp3 {
            arms: self.arms,
            gamma: self.gamma,
            bound: self.bound,
            num_contexts: self.num_contexts,
            contextual: self.contextual,
            states: self
                .states
                .iter()
                .map(|s| Exp3StateSnapshot {
                    weights: s.weights.clone(),
                    rng: rng::rng_state_hex(&s.rng),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Fixed shading

/// The no-learning control: always bid `alpha · p`.
#[derive(Debug, Clone)]
pub struct FixedShading {
    alpha: f64,
    name: String,
}

impl FixedShading {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig("alpha must lie in [0, 1]".into()));
        }
        Ok(FixedShading { alpha, name: format!("fixed@{alpha}") })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl BidPolicy for FixedShading {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, _context: usize, internal_price: f64) -> PolicyDecision {
        PolicyDecision { bid: self.alpha * internal_price, arm: None, sampled_theta: None }
    }

    fn feedback(&mut self, _context: usize, _decision: &PolicyDecision, _won: bool, _revenue: f64) {}

    fn snapshot_state(&self) -> PolicyState {
        PolicyState::Fixed { alpha: self.alpha }
    }
}
