use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{evaluate, run_scenario, split_by_subject, CorpusRegistry, FailedRun, Phase, RunOptions, Scenario};
use crate::error::{Error, Result};
use crate::fairmetrics::{mmd2_rbf, quantile, seed_ci, stratified_sample, Ci, EvalRecord, MMD_GAMMA, PER_STRATUM};
use crate::io::atomic_write;
use crate::mitigate::MitigationKind;
use crate::nnet::{load_checkpoint, SizeClass};
use crate::synthpg::{Gender, PpgRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub source: String,
    pub target: String,
    pub size_class: SizeClass,
    pub mae_median: f64,
    pub gap_median: f64,
    pub train_mae_median: Option<f64>,
    pub n_runs: usize,
}

/// One training run of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub source: String,
    pub target: String,
    pub size_class: SizeClass,
    pub seed: u64,
    pub mae: f64,
    pub gap: f64,
    pub train_mae: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub points: Vec<ScalingPoint>,
    pub failures: Vec<FailedRun>,
    /// Runs trained by this sweep rather than loaded from disk.
    pub trained: usize,
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

/// Runs `base` once per size class and tabulates median MAE and gap over
/// seeds, plus every (MAE, gap) point.
pub fn scaling_sweep(
    base: &Scenario,
    sizes: &[SizeClass],
    registry: &CorpusRegistry,
    out_root: &Path,
    opts: RunOptions,
) -> Result<ScalingTable> {
    if sizes.len() < 2 {
        return Err(Error::invalid("a scaling sweep needs at least 2 size classes"));
    }
    let mut table = ScalingTable::default();
    for &size in sizes {
        let scenario = Scenario { size_class: size, ..base.clone() };
        let outcome = run_scenario(&scenario, registry, out_root, opts)?;
        table.failures.extend(outcome.failures);
        table.trained += outcome.trained;
        let arts = &outcome.artifacts;
        for a in arts {
            table.points.push(ScalingPoint {
                source: a.source.clone(),
                target: a.target.clone(),
                size_class: size,
                seed: a.seed,
                mae: a.metrics.mae_total,
                gap: a.metrics.fairness_gap,
                train_mae: a.train_mae,
            });
        }
        let col = |f: fn(&super::RunArtifact) -> f64| arts.iter().map(f).collect::<Vec<_>>();
        let train: Vec<f64> = arts.iter().filter_map(|a| a.train_mae).collect();
        table.rows.push(ScalingRow {
            source: base.source.clone(),
            target: base.target.clone(),
            size_class: size,
            mae_median: median(&col(|a| a.metrics.mae_total)).unwrap_or(f64::NAN),
            gap_median: median(&col(|a| a.metrics.fairness_gap)).unwrap_or(f64::NAN),
            train_mae_median: median(&train),
            n_runs: arts.len(),
        });
    }
    Ok(table)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let err = |e: csv::Error| Error::Schema(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Schema(format!("csv: {e}")))
}

/// Writes `scaling.csv` (one row per pair and size) and
/// `scaling_points.csv` (one row per run) into `dir`.
pub fn write_scaling_csv(dir: &Path, tables: &[ScalingTable]) -> Result<()> {
    let rows = tables
        .iter()
        .flat_map(|t| &t.rows)
        .map(|r| {
            vec![
                r.source.clone(),
                r.target.clone(),
                r.size_class.to_string(),
                format!("{:.6}", r.mae_median),
                format!("{:.6}", r.gap_median),
                opt(r.train_mae_median),
                r.n_runs.to_string(),
            ]
        })
        .collect();
    let header = ["trainset", "testset", "size", "mae_median", "gap_median", "train_mae_median", "n_runs"];
    atomic_write(&dir.join("scaling.csv"), &csv_bytes(&header, rows)?)?;
    let points = tables
        .iter()
        .flat_map(|t| &t.points)
        .map(|p| {
            vec![
                p.source.clone(),
                p.target.clone(),
                p.size_class.to_string(),
                p.seed.to_string(),
                format!("{:.6}", p.mae),
                format!("{:.6}", p.gap),
                opt(p.train_mae),
            ]
        })
        .collect();
    let header = ["trainset", "testset", "size", "seed", "mae", "gap", "train_mae"];
    atomic_write(&dir.join("scaling_points.csv"), &csv_bytes(&header, points)?)
}

/// Checkpoints of one method and seed, one per dataset, each trained on
/// that dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdInput {
    pub method: MitigationKind,
    pub seed: u64,
    pub checkpoints: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdRow {
    pub method: MitigationKind,
    pub mmd2: Ci,
    pub per_seed: Vec<(u64, f64)>,
    pub n_male: usize,
    pub n_female: usize,
}

/// Gender MMD² of penultimate features. For every input, each dataset's
/// test split is embedded by that dataset's checkpoint, the features are
/// pooled across datasets, stratified by dataset × gender × HR bin, and
/// compared between genders. Rows aggregate the seeds of each method.
pub fn mmd_study(
    inputs: &[MmdInput],
    registry: &CorpusRegistry,
    train_fraction: f64,
    split_seed: u64,
    sample_seed: u64,
) -> Result<Vec<MmdRow>> {
    if inputs.is_empty() {
        return Err(Error::invalid("MMD study needs at least one checkpoint set"));
    }
    let mut tests: BTreeMap<String, Vec<PpgRecord>> = BTreeMap::new();
    for input in inputs {
        for ds in input.checkpoints.keys() {
            if !tests.contains_key(ds) {
                let recs = registry.read(ds, Phase::Evaluation, ds, ds)?;
                let (_, test) = split_by_subject(&recs, train_fraction, split_seed)?;
                tests.insert(ds.clone(), test);
            }
        }
    }
    let mut by_method: BTreeMap<MitigationKind, Vec<(u64, f64, usize, usize)>> = BTreeMap::new();
    for input in inputs {
        if input.checkpoints.is_empty() {
            return Err(Error::invalid(format!("no checkpoints for {} seed {}", input.method.label(), input.seed)));
        }
        let mut pooled: Vec<EvalRecord> = Vec::new();
        for (ds, path) in &input.checkpoints {
            let ckpt = load_checkpoint(path)?;
            pooled.extend(evaluate(&ckpt.net, &tests[ds])?);
        }
        let sample = stratified_sample(&pooled, PER_STRATUM, sample_seed)?;
        let (mut xm, mut yf) = (Vec::new(), Vec::new());
        for &i in &sample.indices {
            match pooled[i].gender {
                Gender::Male => xm.push(pooled[i].embedding.clone()),
                Gender::Female => yf.push(pooled[i].embedding.clone()),
            }
        }
        if xm.is_empty() || yf.is_empty() {
            return Err(Error::MissingGroup("MMD needs both genders in the pooled sample".into()));
        }
        let v = mmd2_rbf(&xm, &yf, MMD_GAMMA)?;
        by_method.entry(input.method).or_default().push((input.seed, v, xm.len(), yf.len()));
    }
    by_method
        .into_iter()
        .map(|(method, runs)| {
            let values: Vec<f64> = runs.iter().map(|r| r.1).collect();
            Ok(MmdRow {
                method,
                mmd2: seed_ci(&values, sample_seed)?,
                per_seed: runs.iter().map(|r| (r.0, r.1)).collect(),
                n_male: runs[0].2,
                n_female: runs[0].3,
            })
        })
        .collect()
}

pub fn write_mmd_csv(path: &Path, rows: &[MmdRow]) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.method.label().to_string(),
                format!("{:.9}", r.mmd2.median),
                format!("{:.9}", r.mmd2.lo),
                format!("{:.9}", r.mmd2.hi),
                r.per_seed.len().to_string(),
                r.n_male.to_string(),
                r.n_female.to_string(),
            ]
        })
        .collect();
    let header = ["method", "mmd2_med", "mmd2_lo", "mmd2_hi", "n_seeds", "n_male", "n_female"];
    atomic_write(path, &csv_bytes(&header, body)?)
}
