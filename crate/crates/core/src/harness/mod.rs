//! Cross-dataset experiment orchestration: scenarios, seed sweeps, the
//! capacity sweep, the representation MMD study and report files.

mod access;
mod config;
mod report;
mod run;
mod study;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mitigate::MitigationConfig;
use crate::nnet::{SizeClass, TrainConfig};
use crate::seed;
use crate::synthpg::PpgRecord;

pub use access::{AccessEvent, CorpusRegistry, Phase};
pub use config::{run_experiment, CorpusSpec, ExperimentConfig, ExperimentSummary, GenerateSpec, Stages};
pub use report::{load_artifacts, make_report, write_table2, ReportFiles, TABLE2_COLUMNS};
pub use run::{
    evaluate, run_scenario, FailedRun, RunArtifact, RunOptions, ScenarioOutcome, CHECKPOINT_FILE, EVAL_FILE,
    LOG_FILE, METRICS_FILE,
};
pub use study::{
    mmd_study, scaling_sweep, write_mmd_csv, write_scaling_csv, MmdInput, MmdRow, ScalingPoint, ScalingRow,
    ScalingTable,
};

/// One source → target transfer with a mitigation method, evaluated over
/// several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub source: String,
    pub target: String,
    pub mitigation: MitigationConfig,
    pub size_class: SizeClass,
    pub seeds: Vec<u64>,
    /// Fraction of subjects in the training split.
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Training hyperparameters; the seed is replaced per run.
    pub train: TrainConfig,
}

impl Scenario {
    pub fn new(source: &str, target: &str, mitigation: MitigationConfig, size_class: SizeClass) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            mitigation,
            size_class,
            seeds: (0..5).collect(),
            train_fraction: 0.8,
            split_seed: 0,
            train: TrainConfig::default(),
        }
    }

    /// Source and target are the same dataset; the subject split keeps the
    /// evaluation subjects out of training.
    pub fn is_intra(&self) -> bool {
        self.source == self.target
    }

    pub fn label(&self) -> String {
        format!("{}->{} [{}]", self.source, self.target, self.mitigation.kind.label())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("scenario needs at least one seed"));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::invalid("scenario seeds must be distinct"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        self.mitigation.validate()?;
        self.train.validate()
    }
}

/// Splits records by subject: a seeded shuffle of the sorted subject ids,
/// the first `round(train_fraction · n)` of which (at least one, and at
/// least one left over) form the training split.
pub fn split_by_subject(records: &[PpgRecord], train_fraction: f64, split_seed: u64) -> Result<(Vec<PpgRecord>, Vec<PpgRecord>)> {
    let mut subjects: Vec<&str> = records.iter().map(|r| r.subject_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    if subjects.len() < 2 {
        return Err(Error::invalid("a subject split needs at least 2 subjects"));
    }
    subjects.shuffle(&mut seed::rng_for(split_seed, "split"));
    let n_train = ((subjects.len() as f64 * train_fraction).round() as usize).clamp(1, subjects.len() - 1);
    let train_ids: BTreeSet<&str> = subjects[..n_train].iter().copied().collect();
    Ok(records.iter().cloned().partition(|r| train_ids.contains(r.subject_id.as_str())))
}

#[derive(Serialize)]
struct HashInput<'a> {
    source: &'a str,
    target: &'a str,
    source_path: String,
    target_path: String,
    mitigation: &'a MitigationConfig,
    size_class: SizeClass,
    train_fraction: f64,
    split_seed: u64,
    train: &'a TrainConfig,
}

/// SHA-256 over the canonical JSON of everything that determines one run.
pub fn config_hash(scenario: &Scenario, seed_: u64, registry: &CorpusRegistry) -> Result<String> {
    let input = HashInput {
        source: &scenario.source,
        target: &scenario.target,
        source_path: registry.path(&scenario.source)?.display().to_string(),
        target_path: registry.path(&scenario.target)?.display().to_string(),
        mitigation: &scenario.mitigation,
        size_class: scenario.size_class,
        train_fraction: scenario.train_fraction,
        split_seed: scenario.split_seed,
        train: &TrainConfig { seed: seed_, ..scenario.train.clone() },
    };
    let json = serde_json::to_vec(&input).map_err(|e| Error::Schema(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&json)))
}
