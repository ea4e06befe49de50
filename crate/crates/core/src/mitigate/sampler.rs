use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::seed;

/// `n_draws` i.i.d. indices drawn with replacement, `P(i) ∝ weights[i]`.
pub fn weighted_sampler(weights: &[f64], n_draws: usize, seed: u64) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::invalid("weighted sampler needs at least one weight"));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid(format!("sampling weight {i} is {}, must be positive", weights[i])));
    }
    let dist = WeightedIndex::new(weights).map_err(|e| Error::invalid(format!("sampling weights: {e}")))?;
    let mut rng = seed::rng_for(seed, "weighted-sampler");
    Ok((0..n_draws).map(|_| dist.sample(&mut rng)).collect())
}
