use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{FailedRun, RunArtifact, METRICS_FILE};
use crate::error::{Error, Result};
use crate::fairmetrics::{quantile, summarize, write_report_csv, write_report_json, FairnessReport, ScenarioMeta};
use crate::io::{atomic_write, read_text};
use crate::mitigate::MitigationKind;
use crate::nnet::SizeClass;

pub const TABLE2_COLUMNS: [&str; 9] = [
    "trainset",
    "testset",
    "mae_pre",
    "mae_fine",
    "reduction_pct",
    "silhouette_true_pre",
    "silhouette_true_fine",
    "silhouette_pred_pre",
    "silhouette_pred_fine",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub reports: Vec<FairnessReport>,
    pub table3: PathBuf,
    pub table2: PathBuf,
    pub json: PathBuf,
}

/// Reads every finished run (`runs/*/metrics.json`) and every recorded
/// failure under `out_root`, in directory-name order.
pub fn load_artifacts(out_root: &Path) -> Result<(Vec<RunArtifact>, Vec<FailedRun>)> {
    let runs = out_root.join("runs");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&runs)
        .map_err(|e| Error::io(&runs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    for d in dirs {
        let m = d.join(METRICS_FILE);
        let f = d.join("failed.json");
        let parse_err = |p: &Path, e: serde_json::Error| Error::Schema(format!("{}: {e}", p.display()));
        if m.exists() {
            artifacts.push(serde_json::from_str(&read_text(&m)?).map_err(|e| parse_err(&m, e))?);
        } else if f.exists() {
            failures.push(serde_json::from_str(&read_text(&f)?).map_err(|e| parse_err(&f, e))?);
        }
    }
    Ok((artifacts, failures))
}

type Key = (String, String, MitigationKind, SizeClass);

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Aggregates runs per (source, target, method, size class) into
/// `table3.csv`, `report.json` and the fine-tuning comparison
/// `table2.csv` inside `reports_dir`.
pub fn make_report(artifacts: &[RunArtifact], failures: &[FailedRun], reports_dir: &Path, seed_: u64) -> Result<ReportFiles> {
    if artifacts.is_empty() {
        return Err(Error::invalid("no run artifacts to report"));
    }
    let mut groups: BTreeMap<Key, Vec<&RunArtifact>> = BTreeMap::new();
    for a in artifacts {
        groups
            .entry((a.source.clone(), a.target.clone(), a.mitigation.kind, a.size_class))
            .or_default()
            .push(a);
    }
    let mut reports = Vec::new();
    for ((source, target, method, size_class), mut runs) in groups.clone() {
        runs.sort_by_key(|a| a.seed);
        let label = format!("{source}->{target} [{}]", method.label());
        let failed: Vec<u64> = failures.iter().filter(|f| f.scenario == label).map(|f| f.seed).collect();
        if !failed.is_empty() {
            log::warn!("{label}: seeds {failed:?} failed and are excluded");
        }
        let meta = ScenarioMeta { source, target, method, size_class, seeds: runs.iter().map(|a| a.seed).collect() };
        let metrics: Vec<_> = runs.iter().map(|a| a.metrics.clone()).collect();
        reports.push(summarize(meta, &metrics, failed, seed_)?);
    }

    std::fs::create_dir_all(reports_dir).map_err(|e| Error::io(reports_dir, e))?;
    let table3 = reports_dir.join("table3.csv");
    let json = reports_dir.join("report.json");
    let table2 = reports_dir.join("table2.csv");
    write_report_csv(&table3, &reports)?;
    write_report_json(&json, &reports)?;
    write_table2(&table2, &groups)?;
    Ok(ReportFiles { reports, table3, table2, json })
}

/// Zero-shot versus fine-tuned medians for the unbalanced runs of every
/// (source, target, size class).
pub fn write_table2(path: &Path, groups: &BTreeMap<Key, Vec<&RunArtifact>>) -> Result<()> {
    let err = |e: csv::Error| Error::Schema(format!("table2: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE2_COLUMNS).map_err(err)?;
    for ((source, target, method, _), runs) in groups {
        if *method != MitigationKind::Unbalanced {
            continue;
        }
        let pick = |f: &dyn Fn(&RunArtifact) -> Option<f64>| median(runs.iter().filter_map(|a| f(a)).collect());
        let pre = pick(&|a| Some(a.zero_shot.mae_total));
        let fine = pick(&|a| Some(a.metrics.mae_total));
        let reduction = match (pre, fine) {
            (Some(p), Some(f)) if p > 0.0 => Some(100.0 * (p - f) / p),
            _ => None,
        };
        w.write_record([
            source.clone(),
            target.clone(),
            fmt(pre),
            fmt(fine),
            fmt(reduction),
            fmt(pick(&|a| a.zero_shot.silhouette_true)),
            fmt(pick(&|a| a.metrics.silhouette_true)),
            fmt(pick(&|a| a.zero_shot.silhouette_pred)),
            fmt(pick(&|a| a.metrics.silhouette_pred)),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Schema(format!("table2: {e}")))?;
    atomic_write(path, &bytes)
}
