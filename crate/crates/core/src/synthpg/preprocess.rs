use super::{Gender, PpgRecord, SAMPLES_PER_SECOND, TARGET_RATE_HZ};
use crate::error::{Error, Result};

/// Windows with a standard deviation below this are emitted as zeros.
const DEGENERATE_STD: f64 = 1e-8;

/// Linear-interpolation resampling to 40 Hz.
///
/// Output length is `round(len * 40 / native_rate_hz)`; positions past the
/// last input sample hold the last value.
pub fn resample_to_40hz(signal: &[f64], native_rate_hz: f64) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::invalid("cannot resample an empty signal"));
    }
    if !(native_rate_hz.is_finite() && native_rate_hz > 0.0) {
        return Err(Error::invalid(format!("native rate must be positive, got {native_rate_hz}")));
    }
    let n = signal.len();
    let out_len = (n as f64 * TARGET_RATE_HZ / native_rate_hz).round() as usize;
    let step = native_rate_hz / TARGET_RATE_HZ;
    Ok((0..out_len)
        .map(|j| {
            let pos = j as f64 * step;
            let i0 = pos.floor() as usize;
            if i0 + 1 >= n {
                return signal[n - 1];
            }
            let frac = pos - i0 as f64;
            if frac == 0.0 {
                signal[i0]
            } else {
                signal[i0] + frac * (signal[i0 + 1] - signal[i0])
            }
        })
        .collect())
}

/// Fills NaN runs by linear interpolation between the nearest finite
/// neighbours, holding the edge value at either end. An all-NaN input
/// becomes all zeros.
pub fn impute_linear(x: &mut [f64]) {
    let finite: Vec<usize> = (0..x.len()).filter(|&i| x[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (finite.first(), finite.last()) else {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    };
    let (head, tail) = (x[first], x[last]);
    x[..first].iter_mut().for_each(|v| *v = head);
    x[last + 1..].iter_mut().for_each(|v| *v = tail);
    for pair in finite.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a > 1 {
            let (va, vb) = (x[a], x[b]);
            for i in a + 1..b {
                let t = (i - a) as f64 / (b - a) as f64;
                x[i] = va + t * (vb - va);
            }
        }
    }
}

/// Zero-mean, unit-variance (population) scaling; near-constant input maps
/// to zeros.
pub fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    x.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordMeta {
    pub subject_id: String,
    pub dataset: String,
    pub gender: Gender,
}

/// Splits a 40 Hz recording into non-overlapping windows of
/// `window_seconds`, imputes missing samples and standardizes each window.
/// A trailing partial window is dropped.
pub fn segment_and_standardize(
    signal_40hz: &[f64],
    window_seconds: usize,
    hr_bpm: f64,
    meta: &RecordMeta,
) -> Result<Vec<PpgRecord>> {
    if window_seconds == 0 {
        return Err(Error::invalid("window_seconds must be >= 1"));
    }
    let win = window_seconds * SAMPLES_PER_SECOND;
    if signal_40hz.len() < win {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one {win}-sample window",
            signal_40hz.len()
        )));
    }
    let mut filled = signal_40hz.to_vec();
    impute_linear(&mut filled);
    Ok(filled
        .chunks_exact(win)
        .map(|chunk| {
            let mut signal = chunk.to_vec();
            standardize(&mut signal);
            PpgRecord {
                subject_id: meta.subject_id.clone(),
                dataset: meta.dataset.clone(),
                gender: meta.gender,
                hr_bpm,
                signal,
            }
        })
        .collect())
}
