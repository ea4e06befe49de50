use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 0.75 quantile of the standard normal.
const Z_Q3: f64 = 0.674_489_750_196_081_7;

/// Log-normal heart-rate distribution specified by its median and
/// interquartile range in bpm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrDistribution {
    pub median_bpm: f64,
    pub q1_bpm: f64,
    pub q3_bpm: f64,
}

impl HrDistribution {
    pub fn new(median_bpm: f64, q1_bpm: f64, q3_bpm: f64) -> Self {
        Self {
            median_bpm,
            q1_bpm,
            q3_bpm,
        }
    }

    /// Location and scale of the underlying normal: the median is matched
    /// exactly, sigma is fitted to the Q3/Q1 ratio.
    pub fn log_params(&self) -> (f64, f64) {
        let mu = self.median_bpm.ln();
        let sigma = (self.q3_bpm / self.q1_bpm).ln() / (2.0 * Z_Q3);
        (mu, sigma)
    }

    fn validate(&self, which: &str) -> Result<()> {
        let ok = self.median_bpm.is_finite()
            && self.q1_bpm > 0.0
            && self.q1_bpm < self.median_bpm
            && self.median_bpm < self.q3_bpm
            && self.q3_bpm.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{which}: need 0 < q1 < median < q3, got {self:?}"
            )))
        }
    }
}

/// Generative parameters for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub name: String,
    pub native_rate_hz: f64,
    pub female_fraction: f64,
    pub hr_dist_female: HrDistribution,
    pub hr_dist_male: HrDistribution,
    /// Additive Gaussian noise level; `inf` disables noise.
    pub noise_snr_db: f64,
    pub motion_artifact_prob: f64,
    /// 0 makes the gender pathway inert; 1 applies the full morphology and
    /// noise shift.
    pub bias_strength: f64,
    pub window_seconds: usize,
    pub n_harmonics: usize,
    /// Amplitude ratio between consecutive harmonics.
    pub harmonic_decay: f64,
    /// Change of `harmonic_decay` between genders at full bias.
    pub bias_harmonic_shift: f64,
    /// Relative noise increase between genders at full bias.
    pub bias_noise_gain: f64,
    pub baseline_wander_amp: f64,
    /// Per-sample probability of a missing (NaN) raw sample.
    pub missing_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Dalia,
    ButPpg,
    Mimic,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Dalia, Preset::ButPpg, Preset::Mimic];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Dalia => "dalia",
            Preset::ButPpg => "butppg",
            Preset::Mimic => "mimic",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn profile(self) -> DomainProfile {
        let base = DomainProfile {
            name: self.name().to_string(),
            native_rate_hz: 64.0,
            female_fraction: 0.5,
            hr_dist_female: HrDistribution::new(80.0, 70.0, 90.0),
            hr_dist_male: HrDistribution::new(80.0, 70.0, 90.0),
            noise_snr_db: 15.0,
            motion_artifact_prob: 0.05,
            bias_strength: 0.3,
            window_seconds: 4,
            n_harmonics: 4,
            harmonic_decay: 0.5,
            bias_harmonic_shift: 0.4,
            bias_noise_gain: 1.0,
            baseline_wander_amp: 0.3,
            missing_prob: 0.001,
        };
        match self {
            // Wrist-worn, 64 Hz, motion-rich daily activities.
            Preset::Dalia => DomainProfile {
                native_rate_hz: 64.0,
                female_fraction: 0.543,
                hr_dist_female: HrDistribution::new(85.2, 73.3, 96.8),
                hr_dist_male: HrDistribution::new(85.5, 73.4, 110.2),
                noise_snr_db: 12.0,
                motion_artifact_prob: 0.15,
                harmonic_decay: 0.45,
                baseline_wander_amp: 0.4,
                ..base
            },
            // Smartphone fingertip camera, 30 Hz.
            Preset::ButPpg => DomainProfile {
                native_rate_hz: 30.0,
                female_fraction: 0.511,
                hr_dist_female: HrDistribution::new(75.0, 70.0, 83.0),
                hr_dist_male: HrDistribution::new(78.0, 67.0, 87.0),
                noise_snr_db: 10.0,
                motion_artifact_prob: 0.05,
                harmonic_decay: 0.6,
                baseline_wander_amp: 0.6,
                ..base
            },
            // ICU monitor, 125 Hz, clean.
            Preset::Mimic => DomainProfile {
                native_rate_hz: 125.0,
                female_fraction: 0.623,
                hr_dist_female: HrDistribution::new(88.8, 74.2, 105.6),
                hr_dist_male: HrDistribution::new(90.3, 75.1, 102.5),
                noise_snr_db: 20.0,
                motion_artifact_prob: 0.02,
                harmonic_decay: 0.35,
                baseline_wander_amp: 0.2,
                ..base
            },
        }
    }
}

impl DomainProfile {
    pub fn male_fraction(&self) -> f64 {
        1.0 - self.female_fraction
    }

    pub fn hr_dist(&self, gender: super::Gender) -> &HrDistribution {
        match gender {
            super::Gender::Female => &self.hr_dist_female,
            super::Gender::Male => &self.hr_dist_male,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.name.is_empty() {
            return Err(Error::invalid("profile name is empty"));
        }
        if !(self.native_rate_hz.is_finite() && self.native_rate_hz > 0.0) {
            return Err(Error::invalid("native_rate_hz must be positive"));
        }
        if !(self.female_fraction > 0.0 && self.female_fraction < 1.0) {
            return Err(Error::invalid("female_fraction must lie in (0, 1)"));
        }
        if !unit(self.motion_artifact_prob) || !unit(self.missing_prob) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        if !unit(self.bias_strength) {
            return Err(Error::invalid(format!(
                "bias_strength must lie in [0, 1], got {}",
                self.bias_strength
            )));
        }
        if self.window_seconds == 0 || self.n_harmonics == 0 {
            return Err(Error::invalid("window_seconds and n_harmonics must be >= 1"));
        }
        if self.noise_snr_db.is_nan() {
            return Err(Error::invalid("noise_snr_db is NaN"));
        }
        if !(self.harmonic_decay > 0.0 && self.harmonic_decay.is_finite()) {
            return Err(Error::invalid("harmonic_decay must be positive"));
        }
        self.hr_dist_female.validate("hr_dist_female")?;
        self.hr_dist_male.validate("hr_dist_male")?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: DomainProfile =
            toml::from_str(text).map_err(|e| Error::Schema(format!("profile: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }
}
