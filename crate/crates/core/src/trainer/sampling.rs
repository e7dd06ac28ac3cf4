use rand::distributions::Distribution;
use rand::Rng;
use rand_distr::WeightedAliasIndex;

use crate::error::{Error, Result};

/// Probability of keeping a token whose relative corpus frequency is
/// `freq_fraction`, i.e. `min(1, sqrt(t / f))`.
pub fn subsample_keep_probability(freq_fraction: f64, threshold: f64) -> Result<f64> {
    if !(freq_fraction > 0.0 && freq_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "frequency fraction must lie in (0, 1], got {freq_fraction}"
        )));
    }
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::Domain(format!(
            "subsampling threshold must be positive, got {threshold}"
        )));
    }
    Ok((threshold / freq_fraction).sqrt().clamp(0.0, 1.0))
}

/// Unigram^0.75 noise distribution over vocabulary ids.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    alias: WeightedAliasIndex<f64>,
}

impl NegativeSampler {
    pub const POWER: f64 = 0.75;

    pub fn new(counts: &[u64]) -> Result<Self> {
        Self::with_exclusions(counts, |_| false)
    }

    /// Builds the table with the given ids assigned zero probability.
    pub fn with_exclusions(counts: &[u64], excluded: impl Fn(usize) -> bool) -> Result<Self> {
        let weights: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| if excluded(i) { 0.0 } else { (c as f64).powf(Self::POWER) })
            .collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::Config(format!("cannot build negative sampler: {e}")))?;
        Ok(NegativeSampler { alias })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }
}
