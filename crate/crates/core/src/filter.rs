//! Particle-filter posterior over competing-bid parameters.
//!
//! Each context keeps `K` weighted parameter particles. One censored
//! observation — "we bid `q` and won/lost" — reweights every particle by the
//! likelihood of that outcome under its parameters: `F_θ(q)` on a win,
//! `1 − F_θ(q)` on a loss. Particles drift by a Gaussian random walk on
//! `(μ, ln σ)` before each reweighting, which lets the posterior track a
//! slowly moving market. When the effective sample size collapses below a
//! threshold the cloud is resampled multinomially.

use crate::dist::{BidDistribution, LognormalParams};
use crate::error::{Error, Result};
use crate::rng::{self, STREAM_FILTER_BASE};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Tuning knobs of a per-context filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Particle count K.
    pub num_particles: usize,
    /// Standard deviation of the per-update random walk on μ and ln σ.
    pub epsilon: f64,
    /// Resample when the effective sample size drops below this.
    pub ess_threshold: f64,
    /// Uniform prior bounds for μ.
    pub prior_mu_range: (f64, f64),
    /// Uniform prior bounds for ln σ.
    pub prior_log_sigma_range: (f64, f64),
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig::for_particles(100)
    }
}

impl FilterConfig {
    /// Default configuration at a given particle count: ε = 0.005,
    /// resampling at K/2 (at least 1), and a prior wide enough to span
    /// several decades of price scale (μ over [ln 0.01, ln 1000], σ over
    /// [0.05, 5]).
    pub fn for_particles(num_particles: usize) -> Self {
        FilterConfig {
            num_particles,
            epsilon: 0.005,
            ess_threshold: (num_particles as f64 / 2.0).max(1.0),
            prior_mu_range: (0.01f64.ln(), 1000f64.ln()),
            prior_log_sigma_range: (0.05f64.ln(), 5f64.ln()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_particles < 1 {
            return Err(Error::InvalidConfig("num_particles must be at least 1".into()));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidConfig("epsilon must be finite and non-negative".into()));
        }
        if !(1.0..=self.num_particles as f64).contains(&self.ess_threshold) {
            return Err(Error::InvalidConfig(format!(
                "ess_threshold must lie in [1, {}]",
                self.num_particles
            )));
        }
        for (name, (lo, hi)) in [
            ("prior_mu_range", self.prior_mu_range),
            ("prior_log_sigma_range", self.prior_log_sigma_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!("{name} must satisfy lo < hi")));
            }
        }
        Ok(())
    }
}

/// Weighted particle approximation of one context's posterior.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    config: FilterConfig,
    particles: Vec<LognormalParams>,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
    rescue_count: u64,
    resample_count: u64,
}

impl ParticleSet {
    /// Fresh filter for `context`, drawing K particles from the uniform
    /// prior. The RNG stream is derived from `(master_seed, context)`, so
    /// contexts evolve on independent, individually reproducible streams.
    pub fn init(config: FilterConfig, master_seed: u64, context: usize) -> Result<Self> {
        let rng = rng::stream_rng(master_seed, STREAM_FILTER_BASE + context as u64);
        ParticleSet::from_rng(config, rng)
    }

    /// Fresh filter drawing its prior from a caller-supplied generator.
    pub fn from_rng(config: FilterConfig, mut rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let k = config.num_particles;
        let (mu_lo, mu_hi) = config.prior_mu_range;
        let (ls_lo, ls_hi) = config.prior_log_sigma_range;
        let particles = (0..k)
            .map(|_| {
                let mu = rng.random_range(mu_lo..mu_hi);
                let log_sigma = rng.random_range(ls_lo..ls_hi);
                LognormalParams { mu, sigma: log_sigma.exp() }
            })
            .collect();
        Ok(ParticleSet {
            weights: vec![1.0 / k as f64; k],
            particles,
            rng,
            config,
            rescue_count: 0,
            resample_count: 0,
        })
    }

    /// Reassemble a filter from snapshotted parts. Weights must already be
    /// normalized; they are stored verbatim so a restored filter replays
    /// bit-identically. Diagnostic counters restart at zero.
    pub fn from_parts(
        config: FilterConfig,
        particles: Vec<LognormalParams>,
        weights: Vec<f64>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        if particles.len() != config.num_particles || weights.len() != config.num_particles {
            return Err(Error::InvalidConfig(format!(
                "expected {} particles and weights, found {} and {}",
                config.num_particles,
                particles.len(),
                weights.len()
            )));
        }
        for p in &particles {
            p.validate()?;
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("weights must be normalized".into()));
        }
        Ok(ParticleSet {
            config,
            particles,
            weights,
            rng,
            rescue_count: 0,
            resample_count: 0,
        })
    }

    /// Random-walk step on every particle: `ln σ += N(0, ε)`, `μ += N(0, ε)`.
    /// Weights are untouched. A zero ε leaves the cloud bit-identical.
    pub fn drift(&mut self) {
        if self.config.epsilon == 0.0 {
            return;
        }
        let kernel = Normal::new(0.0, self.config.epsilon).expect("validated epsilon");
        for p in &mut self.particles {
            let d_log_sigma: f64 = kernel.sample(&mut self.rng);
            let d_mu: f64 = kernel.sample(&mut self.rng);
            p.sigma = (p.sigma.ln() + d_log_sigma).exp();
            p.mu += d_mu;
        }
    }

    /// Absorb one censored observation: drift, reweight every particle by
    /// the likelihood of the outcome, renormalize, then resample if the
    /// effective sample size has collapsed.
    ///
    /// If every particle finds the outcome (numerically) impossible and the
    /// total weight underflows below 1e−300, the weights reset to uniform
    /// and [`rescue_count`](Self::rescue_count) is bumped.
    pub fn update(&mut self, bid: f64, won: bool) {
        debug_assert!(bid >= 0.0, "bids are non-negative");
        self.drift();
        let mut total = 0.0;
        for (w, p) in self.weights.iter_mut().zip(&self.particles) {
            let likelihood = if won { p.cdf(bid) } else { p.survival(bid) };
            *w *= likelihood;
            total += *w;
        }
        if total < 1e-300 {
            let uniform = 1.0 / self.config.num_particles as f64;
            self.weights.fill(uniform);
            self.rescue_count += 1;
        } else {
            for w in &mut self.weights {
                *w /= total;
            }
        }
        self.resample_if_needed();
    }

    /// `1 / Σ w²`: the number of particles carrying real weight, in `[1, K]`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Multinomial resampling (K draws with replacement, weights reset to
    /// 1/K) whenever the effective sample size is below the configured
    /// threshold. Returns whether a resample happened.
    pub fn resample_if_needed(&mut self) -> bool {
        if self.effective_sample_size() >= self.config.ess_threshold {
            return false;
        }
        let index = WeightedIndex::new(&self.weights).expect("normalized weights");
        self.particles = (0..self.config.num_particles)
            .map(|_| self.particles[index.sample(&mut self.rng)])
            .collect();
        self.weights.fill(1.0 / self.config.num_particles as f64);
        self.resample_count += 1;
        true
    }

    /// Draw one particle from the posterior (particle k with probability
    /// w_k) — the Thompson sampling step.
    pub fn sample_theta(&mut self) -> LognormalParams {
        let index = WeightedIndex::new(&self.weights).expect("normalized weights");
        self.particles[index.sample(&mut self.rng)]
    }

    /// Posterior mean of μ.
    pub fn posterior_mean_mu(&self) -> f64 {
        self.weights.iter().zip(&self.particles).map(|(w, p)| w * p.mu).sum()
    }

    /// Posterior mean of σ.
    pub fn posterior_mean_sigma(&self) -> f64 {
        self.weights.iter().zip(&self.particles).map(|(w, p)| w * p.sigma).sum()
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn particles(&self) -> &[LognormalParams] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// How many times the underflow rescue reset the weights.
    pub fn rescue_count(&self) -> u64 {
        self.rescue_count
    }

    /// How many times the cloud was resampled.
    pub fn resample_count(&self) -> u64 {
        self.resample_count
    }

    /// Wire form of this filter for one context.
    pub fn snapshot_record(&self, context: usize) -> FilterSnapshotRecord {
        FilterSnapshotRecord {
            context,
            weights: self.weights.clone(),
            particles: self.particles.clone(),
            rng: rng::rng_state_hex(&self.rng),
        }
    }

    /// Rebuild a filter from its wire form.
    pub fn from_snapshot_record(config: FilterConfig, record: &FilterSnapshotRecord) -> Result<Self> {
        let rng = rng::rng_state_from_hex(&record.rng)?;
        ParticleSet::from_parts(config, record.particles.clone(), record.weights.clone(), rng)
    }
}

/// Identifies the filter snapshot container format.
pub const FILTER_SNAPSHOT_FORMAT: &str = "bidshade-filter-snapshot";
/// Current filter snapshot schema version.
pub const FILTER_SNAPSHOT_VERSION: u32 = 1;

/// First line of a filter snapshot file.
#[derive(Debug, Serialize, Deserialize)]
struct FilterSnapshotHeader {
    format: String,
    version: u32,
    config: FilterConfig,
}

/// One context's filter state on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSnapshotRecord {
    pub context: usize,
    pub weights: Vec<f64>,
    pub particles: Vec<LognormalParams>,
    /// Full RNG state as opaque hex; restoring it resumes the exact stream.
    pub rng: String,
}

/// Write a JSON-lines snapshot: a version header, then one record per
/// context. Restoring through [`read_filter_snapshot`] resumes bit-identical
/// behavior.
pub fn write_filter_snapshot<'a, W, I>(writer: &mut W, config: &FilterConfig, sets: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (usize, &'a ParticleSet)>,
{
    let header = FilterSnapshotHeader {
        format: FILTER_SNAPSHOT_FORMAT.to_string(),
        version: FILTER_SNAPSHOT_VERSION,
        config: config.clone(),
    };
    serde_json::to_writer(&mut *writer, &header)?;
    writer.write_all(b"\n")?;
    for (context, set) in sets {
        serde_json::to_writer(&mut *writer, &set.snapshot_record(context))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a snapshot produced by [`write_filter_snapshot`], returning the
/// config and the per-context filters in file order.
pub fn read_filter_snapshot<R: BufRead>(reader: R) -> Result<(FilterConfig, Vec<(usize, ParticleSet)>)> {
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::CorruptSnapshot("empty snapshot".into()))??;
    let header: FilterSnapshotHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::CorruptSnapshot(format!("bad header: {e}")))?;
    if header.format != FILTER_SNAPSHOT_FORMAT {
        return Err(Error::CorruptSnapshot(format!("unexpected format {:?}", header.format)));
    }
    if header.version != FILTER_SNAPSHOT_VERSION {
        return Err(Error::SnapshotVersion {
            found: header.version,
            expected: FILTER_SNAPSHOT_VERSION,
        });
    }
    let mut sets = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FilterSnapshotRecord = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptSnapshot(format!("bad record: {e}")))?;
        if !seen.insert(record.context) {
            return Err(Error::CorruptSnapshot(format!(
                "duplicate context {} in snapshot",
                record.context
            )));
        }
        let set = ParticleSet::from_snapshot_record(header.config.clone(), &record)?;
        sets.push((record.context, set));
    }
    Ok((header.config, sets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn test_config(k: usize) -> FilterConfig {
        FilterConfig::for_particles(k)
    }

    /// A config under which the particle cloud never moves: no drift, no
    /// resampling. Weight evolution is then a pure likelihood product.
    fn frozen_config(k: usize) -> FilterConfig {
        FilterConfig {
            epsilon: 0.0,
            ess_threshold: 1.0,
            ..FilterConfig::for_particles(k)
        }
    }

    fn fixed_rng() -> ChaCha8Rng {
        rng::stream_rng(7, 0)
    }

    #[test]
    fn init_starts_uniform_and_in_prior() {
        let set = ParticleSet::init(test_config(4), 42, 0).unwrap();
        assert_eq!(set.weights(), &[0.25; 4]);
        let cfg = set.config().clone();
        for p in set.particles() {
            assert!(p.mu >= cfg.prior_mu_range.0 && p.mu < cfg.prior_mu_range.1);
            let ls = p.sigma.ln();
            assert!(ls >= cfg.prior_log_sigma_range.0 && ls < cfg.prior_log_sigma_range.1);
        }
    }

    #[test]
    fn init_is_deterministic_per_seed_and_context() {
        let a = ParticleSet::init(test_config(16), 42, 3).unwrap();
        let b = ParticleSet::init(test_config(16), 42, 3).unwrap();
        assert_eq!(a.particles(), b.particles());
        let c = ParticleSet::init(test_config(16), 42, 4).unwrap();
        assert_ne!(a.particles(), c.particles());
    }

    #[test]
    fn single_particle_filter() {
        let mut set = ParticleSet::init(test_config(1), 1, 0).unwrap();
        assert_eq!(set.weights(), &[1.0]);
        // Any outcome renormalizes the lone weight straight back to 1.
        set.update(1.0, true);
        assert_eq!(set.weights(), &[1.0]);
        let theta = set.sample_theta();
        assert_eq!(theta, set.particles()[0]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ParticleSet::init(test_config(0), 1, 0).is_err());
        let mut bad = test_config(10);
        bad.epsilon = -0.1;
        assert!(bad.validate().is_err());
        let mut bad = test_config(10);
        bad.ess_threshold = 11.0;
        assert!(bad.validate().is_err());
        let mut bad = test_config(10);
        bad.prior_mu_range = (1.0, 1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_epsilon_drift_is_identity() {
        let mut set = ParticleSet::from_rng(frozen_config(8), fixed_rng()).unwrap();
        let before = set.particles().to_vec();
        set.drift();
        assert_eq!(set.particles(), &before[..]);
    }

    #[test]
    fn drift_preserves_sigma_positivity_and_weights() {
        let mut cfg = test_config(32);
        cfg.epsilon = 2.5; // savage kicks
        let mut set = ParticleSet::from_rng(cfg, fixed_rng()).unwrap();
        let weights = set.weights().to_vec();
        for _ in 0..200 {
            set.drift();
            assert!(set.particles().iter().all(|p| p.sigma > 0.0 && p.sigma.is_finite()));
        }
        assert_eq!(set.weights(), &weights[..]);
    }

    #[test]
    fn drift_kernel_scale_is_epsilon() {
        // Monte Carlo check: per-step mu increments should have std ≈ 0.005.
        let mut set = ParticleSet::from_rng(test_config(100), fixed_rng()).unwrap();
        let mut n = 0.0;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..10_000 {
            let before: Vec<f64> = set.particles().iter().map(|p| p.mu).collect();
            set.drift();
            for (p, b) in set.particles().iter().zip(&before) {
                let d = p.mu - b;
                n += 1.0;
                sum += d;
                sum_sq += d * d;
            }
        }
        let var = sum_sq / n - (sum / n).powi(2);
        let std = var.sqrt();
        assert!((0.003..=0.007).contains(&std), "kernel std {std}");
    }

    #[test]
    fn update_applies_censored_likelihoods() {
        // Two equal-weight particles; a win at bid q reweights them to
        // F_a/(F_a+F_b) and F_b/(F_a+F_b), a loss to the complements.
        let particles = vec![
            LognormalParams::new(0.0, 1.0).unwrap(),
            LognormalParams::new(1.0, 0.5).unwrap(),
        ];
        let cfg = frozen_config(2);
        let q = 1.7;
        let f: Vec<f64> = particles.iter().map(|p| p.cdf(q)).collect();

        let mut set =
            ParticleSet::from_parts(cfg.clone(), particles.clone(), vec![0.5, 0.5], fixed_rng())
                .unwrap();
        set.update(q, true);
        assert_abs_diff_eq!(set.weights()[0], f[0] / (f[0] + f[1]), epsilon = 1e-12);
        assert_abs_diff_eq!(set.weights()[1], f[1] / (f[0] + f[1]), epsilon = 1e-12);

        let mut set =
            ParticleSet::from_parts(cfg, particles, vec![0.5, 0.5], fixed_rng()).unwrap();
        set.update(q, false);
        let s: Vec<f64> = set.particles().iter().map(|p| p.survival(q)).collect();
        assert_abs_diff_eq!(set.weights()[0], s[0] / (s[0] + s[1]), epsilon = 1e-12);
        assert_abs_diff_eq!(set.weights()[1], s[1] / (s[0] + s[1]), epsilon = 1e-12);
    }

    #[test]
    fn weights_stay_normalized_through_updates() {
        let mut set = ParticleSet::init(test_config(100), 11, 2).unwrap();
        let mut rng = fixed_rng();
        for i in 0..500 {
            let bid = rng.random_range(0.05..20.0);
            set.update(bid, i % 3 == 0);
            let total: f64 = set.weights().iter().sum();
            assert!((total - 1.0).abs() <= 1e-12, "sum drifted to {total}");
            let ess = set.effective_sample_size();
            assert!((1.0 - 1e-9..=100.0 + 1e-9).contains(&ess));
        }
    }

    #[test]
    fn frozen_filter_weights_match_direct_likelihood_product() {
        // With the cloud frozen, t sequential updates must equal the
        // normalized t-term likelihood product computed in one shot.
        let cfg = frozen_config(8);
        let base = ParticleSet::from_rng(cfg.clone(), fixed_rng()).unwrap();
        let particles = base.particles().to_vec();

        let mut history = Vec::new();
        let mut rng = rng::stream_rng(99, 1);
        for i in 0..20 {
            history.push((rng.random_range(0.1..50.0), i % 2 == 0));
        }

        let mut set = base.clone();
        for &(q, won) in &history {
            set.update(q, won);
        }

        let mut direct: Vec<f64> = particles
            .iter()
            .map(|p| {
                history
                    .iter()
                    .map(|&(q, won)| if won { p.cdf(q) } else { p.survival(q) })
                    .product::<f64>()
            })
            .collect();
        let total: f64 = direct.iter().sum();
        for d in &mut direct {
            *d /= total;
        }

        for (w, d) in set.weights().iter().zip(&direct) {
            assert_abs_diff_eq!(w, d, epsilon = 1e-9);
        }
    }

    #[test]
    fn ess_examples() {
        let cfg = frozen_config(4);
        let particles = vec![LognormalParams::new(0.0, 1.0).unwrap(); 4];
        let set =
            ParticleSet::from_parts(cfg.clone(), particles.clone(), vec![0.25; 4], fixed_rng())
                .unwrap();
        assert_abs_diff_eq!(set.effective_sample_size(), 4.0, epsilon = 1e-12);

        let set = ParticleSet::from_parts(
            cfg.clone(),
            particles.clone(),
            vec![1.0, 0.0, 0.0, 0.0],
            fixed_rng(),
        )
        .unwrap();
        assert_abs_diff_eq!(set.effective_sample_size(), 1.0, epsilon = 1e-12);

        let set =
            ParticleSet::from_parts(cfg, particles, vec![0.5, 0.5, 0.0, 0.0], fixed_rng()).unwrap();
        assert_abs_diff_eq!(set.effective_sample_size(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn resample_noop_above_threshold() {
        let mut set = ParticleSet::init(test_config(4), 5, 0).unwrap();
        let before = set.particles().to_vec();
        assert!(!set.resample_if_needed());
        assert_eq!(set.particles(), &before[..]);
        assert_eq!(set.resample_count(), 0);
    }

    #[test]
    fn degenerate_weights_resample_to_copies() {
        let mut distinct = Vec::new();
        for i in 0..4 {
            distinct.push(LognormalParams::new(i as f64, 1.0 + i as f64).unwrap());
        }
        let mut cfg = test_config(4);
        cfg.ess_threshold = 2.0;
        let mut set =
            ParticleSet::from_parts(cfg, distinct.clone(), vec![1.0, 0.0, 0.0, 0.0], fixed_rng())
                .unwrap();
        assert!(set.resample_if_needed());
        assert_eq!(set.weights(), &[0.25; 4]);
        assert!(set.particles().iter().all(|p| *p == distinct[0]));
        assert_eq!(set.resample_count(), 1);
    }

    #[test]
    fn update_triggers_resampling_on_collapse() {
        // One particle finds a win at 1.0 near-certain, the other three
        // near-impossible, so a single update collapses the weights and the
        // resample inside update() must fire.
        let sure = LognormalParams::new(-3.0, 0.1).unwrap();
        let hopeless = LognormalParams::new(3.0, 0.1).unwrap();
        let particles = vec![sure, hopeless, hopeless, hopeless];
        let mut cfg = frozen_config(4);
        cfg.ess_threshold = 2.0;
        let mut set =
            ParticleSet::from_parts(cfg, particles.clone(), vec![0.25; 4], fixed_rng()).unwrap();
        set.update(1.0, true);
        assert_eq!(set.resample_count(), 1);
        assert_eq!(set.weights(), &[0.25; 4]);
        for p in set.particles() {
            assert!(particles.contains(p));
            assert_eq!(*p, sure);
        }
    }

    #[test]
    fn underflow_rescue_resets_to_uniform() {
        // Both particles treat a loss at a stratospheric bid as impossible:
        // survival underflows to zero and the rescue kicks in.
        let particles = vec![
            LognormalParams::new(0.0, 0.05).unwrap(),
            LognormalParams::new(0.1, 0.05).unwrap(),
        ];
        let mut set =
            ParticleSet::from_parts(frozen_config(2), particles, vec![0.5, 0.5], fixed_rng())
                .unwrap();
        set.update(1e6, false);
        assert_eq!(set.weights(), &[0.5, 0.5]);
        assert_eq!(set.rescue_count(), 1);
    }

    #[test]
    fn sample_theta_respects_weights() {
        let particles = vec![
            LognormalParams::new(0.0, 1.0).unwrap(),
            LognormalParams::new(3.0, 2.0).unwrap(),
        ];
        let mut set = ParticleSet::from_parts(
            frozen_config(2),
            particles.clone(),
            vec![1.0, 0.0],
            fixed_rng(),
        )
        .unwrap();
        for _ in 0..100 {
            assert_eq!(set.sample_theta(), particles[0]);
        }

        let mut set =
            ParticleSet::from_parts(frozen_config(2), particles.clone(), vec![0.25, 0.75], fixed_rng())
                .unwrap();
        let mut hits = 0u32;
        for _ in 0..100_000 {
            if set.sample_theta() == particles[1] {
                hits += 1;
            }
        }
        let freq = hits as f64 / 100_000.0;
        assert!((0.745..=0.755).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn from_parts_validates_shape_and_normalization() {
        let cfg = frozen_config(2);
        let particles = vec![LognormalParams::new(0.0, 1.0).unwrap(); 2];
        assert!(ParticleSet::from_parts(
            cfg.clone(),
            particles.clone(),
            vec![0.5, 0.5, 0.0],
            fixed_rng()
        )
        .is_err());
        assert!(
            ParticleSet::from_parts(cfg.clone(), particles.clone(), vec![0.9, 0.9], fixed_rng())
                .is_err()
        );
        assert!(
            ParticleSet::from_parts(cfg, particles, vec![1.5, -0.5], fixed_rng()).is_err()
        );
    }

    #[test]
    fn snapshot_restores_bit_identical_behavior() {
        let cfg = test_config(16);
        let mut original = ParticleSet::init(cfg.clone(), 31, 7).unwrap();
        let mut rng = fixed_rng();
        for _ in 0..100 {
            original.update(rng.random_range(0.1..10.0), rng.random());
        }

        let mut buf = Vec::new();
        write_filter_snapshot(&mut buf, &cfg, [(7usize, &original)]).unwrap();
        let (read_cfg, mut sets) = read_filter_snapshot(buf.as_slice()).unwrap();
        assert_eq!(read_cfg, cfg);
        assert_eq!(sets.len(), 1);
        let (ctx, mut restored) = sets.pop().unwrap();
        assert_eq!(ctx, 7);
        assert_eq!(restored.particles(), original.particles());
        assert_eq!(restored.weights(), original.weights());

        // Both copies must continue identically: same updates, same draws.
        for _ in 0..50 {
            let bid = rng.random_range(0.1..10.0);
            let won: bool = rng.random();
            original.update(bid, won);
            restored.update(bid, won);
            assert_eq!(original.sample_theta(), restored.sample_theta());
        }
        assert_eq!(restored.particles(), original.particles());
        assert_eq!(restored.weights(), original.weights());
    }

    #[test]
    fn snapshot_rejects_corruption() {
        let cfg = test_config(4);
        let set = ParticleSet::init(cfg.clone(), 1, 0).unwrap();
        let mut buf = Vec::new();
        write_filter_snapshot(&mut buf, &cfg, [(0usize, &set)]).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let future = text.replace("\"version\":1", "\"version\":9");
        match read_filter_snapshot(future.as_bytes()) {
            Err(Error::SnapshotVersion { found: 9, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }

        let wrong_format = text.replace(FILTER_SNAPSHOT_FORMAT, "something-else");
        assert!(read_filter_snapshot(wrong_format.as_bytes()).is_err());

        let duplicated = format!("{text}{}", text.lines().nth(1).unwrap());
        assert!(read_filter_snapshot(duplicated.as_bytes()).is_err());

        assert!(read_filter_snapshot(&b""[..]).is_err());
    }

    #[test]
    #[ignore = "timing-sensitive; run explicitly on a quiet machine"]
    fn per_update_cost_is_linear_in_particle_count() {
        use std::time::Instant;
        let ks = [100usize, 200, 400, 800];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &k in &ks {
            let mut set = ParticleSet::init(test_config(k), 3, 0).unwrap();
            let mut rng = fixed_rng();
            // Warm up allocator and caches.
            for _ in 0..200 {
                set.update(rng.random_range(0.1..10.0), rng.random());
            }
            let start = Instant::now();
            for _ in 0..2000 {
                set.update(rng.random_range(0.1..10.0), rng.random());
            }
            xs.push(k as f64);
            ys.push(start.elapsed().as_secs_f64() / 2000.0);
        }
        let slope = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>()
            / xs.iter().map(|x| x * x).sum::<f64>();
        let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
        let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
        let r2 = 1.0 - ss_res / ss_tot;
        assert!(r2 >= 0.95, "R² = {r2}, times {ys:?}");
    }
}
