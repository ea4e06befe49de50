//! Synthetic PPG corpora with controllable demographic bias.

mod corpus;
mod preprocess;
mod profile;
mod waveform;

pub use corpus::{generate_corpus, generate_records, read_corpus, write_corpus};
pub use preprocess::{impute_linear, resample_to_40hz, segment_and_standardize, standardize, RecordMeta};
pub use profile::{DomainProfile, HrDistribution, Preset};
pub use waveform::synth_waveform;

use serde::{Deserialize, Serialize};

/// Target sampling rate after resampling, and samples per patch.
pub const TARGET_RATE_HZ: f64 = 40.0;
pub const SAMPLES_PER_SECOND: usize = 40;

pub const HR_MIN_BPM: f64 = 30.0;
pub const HR_MAX_BPM: f64 = 220.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn index(self) -> usize {
        match self {
            Gender::Female => 0,
            Gender::Male => 1,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
        }
    }

    pub fn other(self) -> Gender {
        match self {
            Gender::Female => Gender::Male,
            Gender::Male => Gender::Female,
        }
    }
}

/// One labeled, standardized 40 Hz window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgRecord {
    pub subject_id: String,
    pub dataset: String,
    pub gender: Gender,
    pub hr_bpm: f64,
    pub signal: Vec<f64>,
}

impl PpgRecord {
    pub fn window_seconds(&self) -> usize {
        self.signal.len() / SAMPLES_PER_SECOND
    }
}
