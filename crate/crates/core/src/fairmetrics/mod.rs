//! Evaluation metrics: MAE, gender fairness gap, silhouette over HR bins,
//! stratified RBF-kernel MMD and percentile bootstrap intervals.

mod bootstrap;
mod mmd;
mod report;
mod sample;
mod silhouette;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{atomic_write, parse_jsonl, read_text, to_jsonl};
use crate::synthpg::Gender;

pub use bootstrap::{bootstrap_ci, quantile, Ci, BOOTSTRAP_RESAMPLES};
pub use mmd::{mmd2_rbf, MMD_GAMMA};
pub use report::{
    run_metrics, seed_ci, summarize, write_report_csv, write_report_json, FairnessReport, RunMetrics,
    ScenarioMeta, REPORT_COLUMNS, SILHOUETTE_MAX_POINTS,
};
pub use sample::{stratified_sample, StratifiedSample, Stratum, PER_STRATUM};
pub use silhouette::silhouette;

/// One evaluated window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub hr_true: f64,
    pub hr_pred: f64,
    pub gender: Gender,
    pub dataset: String,
    /// Penultimate features of the network.
    pub embedding: Vec<f64>,
}

pub fn write_eval(path: &Path, records: &[EvalRecord]) -> Result<()> {
    atomic_write(path, &to_jsonl(records))
}

pub fn read_eval(path: &Path) -> Result<Vec<EvalRecord>> {
    let records: Vec<EvalRecord> = parse_jsonl(path, &read_text(path)?)?;
    check_records(&records).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(records)
}

fn check_records(records: &[EvalRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        let d = first.embedding.len();
        if records.iter().any(|r| r.embedding.len() != d) {
            return Err(Error::invalid("embedding dimension varies within the evaluation set"));
        }
    }
    if records.iter().any(|r| !r.hr_true.is_finite() || !r.hr_pred.is_finite()) {
        return Err(Error::invalid("non-finite heart rate in evaluation set"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HrBin {
    Bradycardia,
    Normal,
    Tachycardia,
}

impl HrBin {
    pub const ALL: [HrBin; 3] = [HrBin::Bradycardia, HrBin::Normal, HrBin::Tachycardia];
}

impl fmt::Display for HrBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HrBin::Bradycardia => "bradycardia",
            HrBin::Normal => "normal",
            HrBin::Tachycardia => "tachycardia",
        })
    }
}

/// Clinical bins: below 75, 75 to 95 inclusive, above 95 bpm.
pub fn hr_bin(hr_bpm: f64) -> Result<HrBin> {
    if !hr_bpm.is_finite() {
        return Err(Error::invalid(format!("heart rate {hr_bpm} is not finite")));
    }
    Ok(if hr_bpm < 75.0 {
        HrBin::Bradycardia
    } else if hr_bpm <= 95.0 {
        HrBin::Normal
    } else {
        HrBin::Tachycardia
    })
}

pub fn mae(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("MAE of an empty record set"));
    }
    Ok(records.iter().map(|r| (r.hr_pred - r.hr_true).abs()).sum::<f64>() / records.len() as f64)
}

pub fn group_mae(records: &[EvalRecord], gender: Gender) -> Result<f64> {
    let sub: Vec<EvalRecord> = records.iter().filter(|r| r.gender == gender).cloned().collect();
    if sub.is_empty() {
        return Err(Error::MissingGroup(format!("no {gender:?} records")));
    }
    mae(&sub)
}

/// `|MAE_male − MAE_female|` within one record set.
pub fn fairness_gap(records: &[EvalRecord]) -> Result<f64> {
    Ok((group_mae(records, Gender::Male)? - group_mae(records, Gender::Female)?).abs())
}
