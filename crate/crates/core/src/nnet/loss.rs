use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin of the affine squeeze that maps a window into `[ε, 1-ε]`.
pub const LL_EPSILON: f64 = 0.1;

/// Range the predicted log-scale is clamped to before exponentiation.
const LOG_B_MIN: f64 = -7.0;
const LOG_B_MAX: f64 = 7.0;

/// Per-window min-max scaling into `[ε, 1-ε]`; a constant window maps to 0.5.
pub fn squeeze_window(signal: &[f64]) -> Vec<f64> {
    let (lo, hi) = signal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.5; signal.len()];
    }
    signal
        .iter()
        .map(|v| LL_EPSILON + (1.0 - 2.0 * LL_EPSILON) * (v - lo) / span)
        .collect()
}

fn check(signal: &[f64], mu: &[f64], log_b: &[f64]) -> Result<()> {
    if signal.len() != mu.len() || signal.len() != log_b.len() || signal.is_empty() {
        return Err(Error::Shape(format!(
            "logit-Laplace inputs: signal {}, mu {}, log_b {}",
            signal.len(),
            mu.len(),
            log_b.len()
        )));
    }
    let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
    if !(finite(signal) && finite(mu) && finite(log_b)) {
        return Err(Error::Numerical("non-finite logit-Laplace input".into()));
    }
    Ok(())
}

/// Mean negative log-density of the squeezed window under a logit-Laplace
/// distribution with location `mu` and log-scale `log_b` per sample:
/// `log(2b) + |logit(x) - mu| / b + log(x (1 - x))`.
pub fn logit_laplace_loss(signal: &[f64], mu: &[f64], log_b: &[f64]) -> Result<f64> {
    Ok(logit_laplace_grad(signal, mu, log_b)?.0)
}

/// Loss together with its gradients with respect to `mu` and `log_b`.
pub fn logit_laplace_grad(signal: &[f64], mu: &[f64], log_b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check(signal, mu, log_b)?;
    let x = squeeze_window(signal);
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut dmu = vec![0.0; x.len()];
    let mut dlogb = vec![0.0; x.len()];
    for i in 0..x.len() {
        let xi = x[i];
        let y = (xi / (1.0 - xi)).ln();
        let lb_clamped = log_b[i].clamp(LOG_B_MIN, LOG_B_MAX);
        let inv_b = (-lb_clamped).exp();
        let r = y - mu[i];
        loss += std::f64::consts::LN_2 + lb_clamped + r.abs() * inv_b + (xi * (1.0 - xi)).ln();
        let sign = if r > 0.0 {
            1.0
        } else if r < 0.0 {
            -1.0
        } else {
            0.0
        };
        dmu[i] = -sign * inv_b / n;
        if (LOG_B_MIN..=LOG_B_MAX).contains(&log_b[i]) {
            dlogb[i] = (1.0 - r.abs() * inv_b) / n;
        }
    }
    Ok((loss / n, dmu, dlogb))
}

/// Reconstruction output for one record, one entry per input sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recon {
    pub mu: Vec<f64>,
    pub log_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    /// Weighted mean of per-record losses.
    pub total: f64,
    /// Unweighted `l1 + α·ll` per record.
    pub per_record: Vec<f64>,
    /// `|pred - true| / hr_scale` per record.
    pub l1: Vec<f64>,
    pub ll: Vec<f64>,
}

impl CompositeLoss {
    pub fn mean_l1(&self) -> f64 {
        self.l1.iter().sum::<f64>() / self.l1.len() as f64
    }

    pub fn mean_ll(&self) -> f64 {
        self.ll.iter().sum::<f64>() / self.ll.len() as f64
    }
}

/// Validates weights and returns them divided by their sum.
pub(crate) fn normalized_weights(weights: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    let Some(w) = weights else {
        return Ok(vec![1.0 / n as f64; n]);
    };
    if w.len() != n {
        return Err(Error::Shape(format!("{} weights for {n} records", w.len())));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("record weights must be finite and nonnegative"));
    }
    let sum: f64 = w.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::invalid("record weights sum to zero"));
    }
    Ok(w.iter().map(|v| v / sum).collect())
}

/// `Σ w_i [|pred_i - true_i| / hr_scale + α·LL_i] / Σ w_i`.
pub fn composite_loss(
    hr_pred: &[f64],
    hr_true: &[f64],
    recon: &[Recon],
    signals: &[&[f64]],
    alpha: f64,
    hr_scale: f64,
    weights: Option<&[f64]>,
) -> Result<CompositeLoss> {
    let n = hr_pred.len();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if hr_true.len() != n || recon.len() != n || signals.len() != n {
        return Err(Error::Shape("composite loss inputs differ in batch size".into()));
    }
    let w = normalized_weights(weights, n)?;
    let mut out = CompositeLoss {
        total: 0.0,
        per_record: Vec::with_capacity(n),
        l1: Vec::with_capacity(n),
        ll: Vec::with_capacity(n),
    };
    for i in 0..n {
        let l1 = (hr_pred[i] - hr_true[i]).abs() / hr_scale;
        let ll = logit_laplace_loss(signals[i], &recon[i].mu, &recon[i].log_b)?;
        let rec = l1 + alpha * ll;
        out.total += w[i] * rec;
        out.l1.push(l1);
        out.ll.push(ll);
        out.per_record.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_at_midpoint() {
        // One-sample window squeezes to 0.5, logit 0.
        let l = logit_laplace_loss(&[3.0], &[0.0], &[0.0]).unwrap();
        assert!((l - (-std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn squeeze_bounds() {
        let s = squeeze_window(&[-2.0, 0.0, 2.0]);
        assert_eq!(s, vec![0.1, 0.5, 0.9]);
        assert_eq!(squeeze_window(&[1.0, 1.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn decreases_as_mu_approaches_target() {
        let sig = [-1.0, 0.3, 2.0, 0.9];
        let x = squeeze_window(&sig);
        let target: Vec<f64> = x.iter().map(|v| (v / (1.0 - v)).ln()).collect();
        let lb = [0.2; 4];
        let mut prev = f64::INFINITY;
        for t in [3.0, 2.0, 1.0, 0.5, 0.1, 0.0] {
            let mu: Vec<f64> = target.iter().map(|y| y + t).collect();
            let l = logit_laplace_loss(&sig, &mu, &lb).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let sig = [0.4, -1.3, 2.2, 0.0, 0.7, -0.2];
        let mu = [0.3, -0.8, 1.1, 0.05, -0.6, 0.2];
        let lb = [0.1, -0.4, 0.3, 0.0, 0.5, -0.2];
        let (_, dmu, dlb) = logit_laplace_grad(&sig, &mu, &lb).unwrap();
        let h = 1e-6;
        for i in 0..mu.len() {
            let mut p = mu;
            let mut m = mu;
            p[i] += h;
            m[i] -= h;
            let fd = (logit_laplace_loss(&sig, &p, &lb).unwrap() - logit_laplace_loss(&sig, &m, &lb).unwrap()) / (2.0 * h);
            assert!((fd - dmu[i]).abs() <= 1e-4 * dmu[i].abs().max(1e-8), "mu[{i}] {fd} vs {}", dmu[i]);
            let mut p = lb;
            let mut m = lb;
            p[i] += h;
            m[i] -= h;
            let fd = (logit_laplace_loss(&sig, &mu, &p).unwrap() - logit_laplace_loss(&sig, &mu, &m).unwrap()) / (2.0 * h);
            assert!((fd - dlb[i]).abs() <= 1e-4 * dlb[i].abs().max(1e-8));
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(logit_laplace_loss(&[1.0, f64::NAN], &[0.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(logit_laplace_loss(&[1.0], &[0.0, 0.0], &[0.0]).is_err());
    }

    fn rec(n: usize) -> Recon {
        Recon { mu: vec![0.0; n], log_b: vec![0.0; n] }
    }

    #[test]
    fn composite_perfect_predictions_no_recon_is_zero() {
        let s: &[f64] = &[0.0, 1.0];
        let l = composite_loss(&[80.0, 95.0], &[80.0, 95.0], &[rec(2), rec(2)], &[s, s], 0.0, 40.0, None).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn composite_weighting() {
        let s: &[f64] = &[0.0, 1.0, -1.0];
        let sigs = [s, s, s];
        let recs = [rec(3), rec(3), rec(3)];
        let pred = [82.0, 70.0, 100.0];
        let truth = [80.0, 80.0, 80.0];
        let alpha = 0.1;
        let uni = composite_loss(&pred, &truth, &recs, &sigs, alpha, 40.0, None).unwrap();
        let ones = composite_loss(&pred, &truth, &recs, &sigs, alpha, 40.0, Some(&[1.0, 1.0, 1.0])).unwrap();
        let mean = uni.per_record.iter().sum::<f64>() / 3.0;
        assert!((uni.total - mean).abs() < 1e-15);
        assert!((ones.total - mean).abs() < 1e-15);

        // Hand recomputation with record 1 doubled: (l0 + 2 l1 + l2) / 4.
        let ll = logit_laplace_loss(s, &[0.0; 3], &[0.0; 3]).unwrap();
        let by_hand = ((2.0 / 40.0 + alpha * ll) + 2.0 * (10.0 / 40.0 + alpha * ll) + (20.0 / 40.0 + alpha * ll)) / 4.0;
        let dbl = composite_loss(&pred, &truth, &recs, &sigs, alpha, 40.0, Some(&[1.0, 2.0, 1.0])).unwrap();
        assert!((dbl.total - by_hand).abs() < 1e-15);

        assert!(composite_loss(&[], &[], &[], &[], alpha, 40.0, None).is_err());
        assert!(composite_loss(&pred, &truth, &recs, &sigs, alpha, 40.0, Some(&[0.0, 0.0, 0.0])).is_err());
        assert!(composite_loss(&pred, &truth, &recs, &sigs, alpha, 40.0, Some(&[1.0, -1.0, 1.0])).is_err());
    }
}
