use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// A median with a percentile interval around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ci {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Ci {
    pub fn point(v: f64) -> Self {
        Self { median: v, lo: v, hi: v }
    }
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Sample median of the values together with a percentile bootstrap
/// interval of the median (`b` resamples with replacement).
pub fn bootstrap_ci(values: &[f64], b: usize, level: f64, seed: u64) -> Result<Ci> {
    if values.len() < 2 {
        return Err(Error::invalid(format!("bootstrap needs at least 2 values, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in bootstrap input".into()));
    }
    if b == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("bootstrap needs b >= 1 and level in (0, 1)"));
    }
    let n = values.len();
    let median = quantile(&sorted(values), 0.5);
    let mut rng = seed::rng_for(seed, "bootstrap");
    let mut medians: Vec<f64> = (0..b)
        .map(|_| {
            let draw: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
            quantile(&sorted(&draw), 0.5)
        })
        .collect();
    medians.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = quantile(&medians, tail).min(median);
    let hi = quantile(&medians, 1.0 - tail).max(median);
    Ok(Ci { median, lo, hi })
}
