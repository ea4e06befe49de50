use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{
    bootstrap_ci, fairness_gap, group_mae, hr_bin, mae, mmd2_rbf, quantile, silhouette, stratified_sample, Ci,
    EvalRecord, BOOTSTRAP_RESAMPLES, MMD_GAMMA, PER_STRATUM,
};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::mitigate::MitigationKind;
use crate::nnet::SizeClass;
use crate::seed;
use crate::synthpg::Gender;

/// Silhouette is quadratic in the number of points; larger evaluation sets
/// are subsampled to this size first.
pub const SILHOUETTE_MAX_POINTS: usize = 2000;

/// Metrics of a single trained model on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub mae_total: f64,
    pub mae_male: f64,
    pub mae_female: f64,
    pub fairness_gap: f64,
    pub silhouette_true: Option<f64>,
    pub silhouette_pred: Option<f64>,
    pub mmd2: Option<f64>,
    pub n_male: usize,
    pub n_female: usize,
}

fn silhouette_by(records: &[EvalRecord], pick: &[usize], hr: impl Fn(&EvalRecord) -> f64) -> Result<Option<f64>> {
    let emb: Vec<Vec<f64>> = pick.iter().map(|&i| records[i].embedding.clone()).collect();
    let labels = pick.iter().map(|&i| hr_bin(hr(&records[i]))).collect::<Result<Vec<_>>>()?;
    match silhouette(&emb, &labels) {
        Ok(s) => Ok(Some(s)),
        Err(Error::InvalidArgument(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn run_metrics(records: &[EvalRecord], seed_: u64) -> Result<RunMetrics> {
    super::check_records(records)?;
    let n = records.len();
    let pick: Vec<usize> = if n > SILHOUETTE_MAX_POINTS {
        let mut v = index::sample(&mut seed::rng_for(seed_, "silhouette"), n, SILHOUETTE_MAX_POINTS).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let strat = stratified_sample(records, PER_STRATUM, seed_)?;
    let (mut xm, mut yf) = (Vec::new(), Vec::new());
    for &i in &strat.indices {
        match records[i].gender {
            Gender::Male => xm.push(records[i].embedding.clone()),
            Gender::Female => yf.push(records[i].embedding.clone()),
        }
    }
    let mmd2 = if xm.is_empty() || yf.is_empty() || xm[0].is_empty() {
        None
    } else {
        Some(mmd2_rbf(&xm, &yf, MMD_GAMMA)?)
    };
    Ok(RunMetrics {
        seed: seed_,
        mae_total: mae(records)?,
        mae_male: group_mae(records, Gender::Male)?,
        mae_female: group_mae(records, Gender::Female)?,
        fairness_gap: fairness_gap(records)?,
        silhouette_true: silhouette_by(records, &pick, |r| r.hr_true)?,
        silhouette_pred: silhouette_by(records, &pick, |r| r.hr_pred)?,
        mmd2,
        n_male: records.iter().filter(|r| r.gender == Gender::Male).count(),
        n_female: records.iter().filter(|r| r.gender == Gender::Female).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub source: String,
    pub target: String,
    pub method: MitigationKind,
    pub size_class: SizeClass,
    pub seeds: Vec<u64>,
}

/// Seed-level aggregate for one scenario and method. The gap interval is
/// built from per-run gaps, never from the group MAE medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub meta: ScenarioMeta,
    pub mae_total: Ci,
    pub mae_male: Ci,
    pub mae_female: Ci,
    pub fairness_gap: Ci,
    pub silhouette_true: Option<f64>,
    pub silhouette_pred: Option<f64>,
    pub mmd2: Option<f64>,
    pub n_male: usize,
    pub n_female: usize,
    /// Seeds whose run failed and were left out of the aggregates.
    pub failed_seeds: Vec<u64>,
}

/// Median and bootstrap interval over seed-level values; a single value
/// gives a degenerate interval.
pub fn seed_ci(values: &[f64], seed_: u64) -> Result<Ci> {
    match values.len() {
        0 => Err(Error::invalid("no runs to aggregate")),
        1 => Ok(Ci::point(values[0])),
        _ => bootstrap_ci(values, BOOTSTRAP_RESAMPLES, 0.95, seed_),
    }
}

fn median_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

/// Aggregates per-seed metrics: bootstrap intervals for the MAE and gap
/// columns, plain medians for silhouette and MMD². A single run gives a
/// degenerate interval.
pub fn summarize(meta: ScenarioMeta, runs: &[RunMetrics], failed_seeds: Vec<u64>, seed_: u64) -> Result<FairnessReport> {
    let col = |f: fn(&RunMetrics) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    Ok(FairnessReport {
        mae_total: seed_ci(&col(|r| r.mae_total), seed::derive_str(seed_, "mae_total"))?,
        mae_male: seed_ci(&col(|r| r.mae_male), seed::derive_str(seed_, "mae_male"))?,
        mae_female: seed_ci(&col(|r| r.mae_female), seed::derive_str(seed_, "mae_female"))?,
        fairness_gap: seed_ci(&col(|r| r.fairness_gap), seed::derive_str(seed_, "gap"))?,
        silhouette_true: median_of(runs.iter().map(|r| r.silhouette_true)),
        silhouette_pred: median_of(runs.iter().map(|r| r.silhouette_pred)),
        mmd2: median_of(runs.iter().map(|r| r.mmd2)),
        n_male: runs[0].n_male,
        n_female: runs[0].n_female,
        failed_seeds,
        meta,
    })
}

pub const REPORT_COLUMNS: [&str; 18] = [
    "trainset",
    "testset",
    "method",
    "mae_total_med",
    "mae_total_lo",
    "mae_total_hi",
    "mae_male_med",
    "mae_male_lo",
    "mae_male_hi",
    "mae_female_med",
    "mae_female_lo",
    "mae_female_hi",
    "gap_med",
    "gap_lo",
    "gap_hi",
    "silhouette_true",
    "silhouette_pred",
    "mmd2",
];

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Writes one row per report, sorted by (trainset, testset, method).
pub fn write_report_csv(path: &Path, reports: &[FairnessReport]) -> Result<()> {
    let mut sorted: Vec<&FairnessReport> = reports.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.meta.source, &a.meta.target, a.meta.method).cmp(&(&b.meta.source, &b.meta.target, b.meta.method))
    });
    let err = |e: csv::Error| Error::Schema(format!("report csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).map_err(err)?;
    for r in sorted {
        let mut row = vec![r.meta.source.clone(), r.meta.target.clone(), r.meta.method.label().to_string()];
        for ci in [r.mae_total, r.mae_male, r.mae_female, r.fairness_gap] {
            row.extend([fmt(ci.median), fmt(ci.lo), fmt(ci.hi)]);
        }
        row.extend([fmt_opt(r.silhouette_true), fmt_opt(r.silhouette_pred), fmt_opt(r.mmd2)]);
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Schema(format!("report csv: {e}")))?;
    atomic_write(path, &bytes)
}

pub fn write_report_json(path: &Path, reports: &[FairnessReport]) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(reports).map_err(|e| Error::Schema(e.to_string()))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}
