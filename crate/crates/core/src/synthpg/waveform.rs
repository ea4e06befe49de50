use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{DomainProfile, Gender, HR_MAX_BPM, HR_MIN_BPM};
use crate::error::{Error, Result};
use crate::seed;

/// Signed position of a gender on the bias axis. The two genders sit
/// symmetrically around the profile's base morphology.
fn bias_axis(gender: Gender) -> f64 {
    match gender {
        Gender::Female => -0.5,
        Gender::Male => 0.5,
    }
}

/// Raw quasi-periodic PPG-like signal at the profile's native rate.
///
/// The waveform is a harmonic stack at `hr_bpm / 60` Hz with geometric
/// amplitude decay, plus baseline wander, white noise at the profile SNR,
/// occasional motion-artifact bursts and isolated missing samples (NaN).
/// `bias_strength` scales how far the harmonic decay and the noise level of
/// each gender move away from the base profile; at 0 both genders draw the
/// exact same sequence for a given seed.
pub fn synth_waveform(
    hr_bpm: f64,
    duration_s: f64,
    profile: &DomainProfile,
    gender: Gender,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if !(HR_MIN_BPM..=HR_MAX_BPM).contains(&hr_bpm) {
        return Err(Error::invalid(format!(
            "hr_bpm {hr_bpm} outside [{HR_MIN_BPM}, {HR_MAX_BPM}]"
        )));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!("duration_s must be positive, got {duration_s}")));
    }
    let fs = profile.native_rate_hz;
    let n = (duration_s * fs).round().max(1.0) as usize;
    let mut rng = seed::rng(rng_seed);

    let shift = profile.bias_strength * bias_axis(gender);
    let decay = (profile.harmonic_decay + shift * profile.bias_harmonic_shift).clamp(0.05, 0.98);
    let noise_scale = (1.0 + shift * profile.bias_noise_gain).max(0.0);

    let f0 = hr_bpm / 60.0;
    let phase0: f64 = rng.random_range(0.0..2.0 * PI);
    let amps: Vec<f64> = (0..profile.n_harmonics).map(|k| decay.powi(k as i32)).collect();
    let phases: Vec<f64> = (0..profile.n_harmonics)
        .map(|k| (k + 1) as f64 * phase0 + rng.random_range(-0.3..0.3))
        .collect();
    let wander_f: f64 = rng.random_range(0.1..0.3);
    let wander_phase: f64 = rng.random_range(0.0..2.0 * PI);

    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let pulse: f64 = amps
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(k, (a, ph))| a * (2.0 * PI * (k + 1) as f64 * f0 * t + ph).sin())
                .sum();
            pulse + profile.baseline_wander_amp * (2.0 * PI * wander_f * t + wander_phase).sin()
        })
        .collect();

    let signal_power: f64 = amps.iter().map(|a| a * a / 2.0).sum();
    let sigma = if profile.noise_snr_db.is_infinite() && profile.noise_snr_db > 0.0 {
        0.0
    } else {
        (signal_power / 10f64.powf(profile.noise_snr_db / 10.0)).sqrt() * noise_scale
    };
    for x in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x += sigma * z;
    }

    // One artifact opportunity per window-length stretch of signal.
    let win = (profile.window_seconds as f64 * fs).round().max(1.0) as usize;
    let mut start = 0;
    while start < n {
        let hit = rng.random::<f64>() < profile.motion_artifact_prob;
        let offset = rng.random_range(0.0..1.0) * win as f64;
        let len_s: f64 = rng.random_range(0.5..1.5);
        let amp: f64 = rng.random_range(1.5..3.0) * noise_scale.max(0.5);
        let freq: f64 = rng.random_range(0.3..3.0);
        let ph: f64 = rng.random_range(0.0..2.0 * PI);
        if hit {
            let s0 = start + offset as usize;
            let len = (len_s * fs).round().max(1.0) as usize;
            for j in 0..len {
                let idx = s0 + j;
                if idx >= n {
                    break;
                }
                let env = 0.5 - 0.5 * (2.0 * PI * j as f64 / len as f64).cos();
                out[idx] += amp * env * (2.0 * PI * freq * j as f64 / fs + ph).sin();
            }
        }
        start += win;
    }

    if profile.missing_prob > 0.0 {
        for x in out.iter_mut() {
            if rng.random::<f64>() < profile.missing_prob {
                *x = f64::NAN;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthpg::Preset;

    fn clean(mut p: DomainProfile) -> DomainProfile {
        p.noise_snr_db = f64::INFINITY;
        p.motion_artifact_prob = 0.0;
        p.missing_prob = 0.0;
        p
    }

    /// Naive DFT magnitude peak, excluding DC; returns frequency in Hz.
    fn dft_peak_hz(x: &[f64], fs: f64) -> (f64, f64) {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let mut best = (0usize, 0.0f64);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                re += (v - mean) * ang.cos();
                im += (v - mean) * ang.sin();
            }
            let mag = re.hypot(im);
            if mag > best.1 {
                best = (k, mag);
            }
        }
        (best.0 as f64 * fs / n as f64, fs / n as f64)
    }

    #[test]
    fn zero_bias_makes_genders_identical() {
        let mut p = Preset::Dalia.profile();
        p.bias_strength = 0.0;
        let f = synth_waveform(80.0, 8.0, &p, Gender::Female, 11).unwrap();
        let m = synth_waveform(80.0, 8.0, &p, Gender::Male, 11).unwrap();
        assert_eq!(f.len(), m.len());
        assert!(f.iter().zip(&m).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn nonzero_bias_separates_genders() {
        let mut p = Preset::Dalia.profile();
        p.bias_strength = 1.0;
        let f = synth_waveform(80.0, 8.0, &p, Gender::Female, 11).unwrap();
        let m = synth_waveform(80.0, 8.0, &p, Gender::Male, 11).unwrap();
        assert!(f.iter().zip(&m).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn clean_60_bpm_peaks_at_one_hertz() {
        let p = clean(Preset::Mimic.profile());
        let x = synth_waveform(60.0, 10.0, &p, Gender::Female, 3).unwrap();
        assert_eq!(x.len(), 1250);
        let (peak, bin) = dft_peak_hz(&x, p.native_rate_hz);
        assert!((peak - 1.0).abs() <= bin + 1e-12, "peak {peak} Hz");
    }

    #[test]
    fn deterministic_given_seed() {
        let p = Preset::ButPpg.profile();
        let a = synth_waveform(95.0, 5.0, &p, Gender::Male, 42).unwrap();
        let b = synth_waveform(95.0, 5.0, &p, Gender::Male, 42).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = synth_waveform(95.0, 5.0, &p, Gender::Male, 43).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.to_bits() != y.to_bits()));
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        let p = Preset::Dalia.profile();
        assert!(synth_waveform(29.9, 4.0, &p, Gender::Female, 0).is_err());
        assert!(synth_waveform(220.1, 4.0, &p, Gender::Female, 0).is_err());
        assert!(synth_waveform(80.0, 0.0, &p, Gender::Female, 0).is_err());
        assert!(synth_waveform(220.0, 4.0, &p, Gender::Female, 0).is_ok());
    }
}
