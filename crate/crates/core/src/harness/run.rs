use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_hash, split_by_subject, CorpusRegistry, Phase, Scenario};
use crate::error::{Error, Result};
use crate::fairmetrics::{run_metrics, write_eval, EvalRecord, RunMetrics};
use crate::io::{atomic_write, read_text};
use crate::mitigate::MitigationConfig;
use crate::nnet::{save_checkpoint, train, NetConfig, SizeClass, TinyPpgNet, TrainConfig, TrainLog, PATCH_LEN};
use crate::synthpg::PpgRecord;

pub const CHECKPOINT_FILE: &str = "checkpoint";
pub const EVAL_FILE: &str = "eval.jsonl";
pub const LOG_FILE: &str = "log.csv";
pub const METRICS_FILE: &str = "metrics.json";
const FAILED_FILE: &str = "failed.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Concurrent training jobs (and threads used inside each job).
    pub workers: usize,
    /// Retrain even when a finished run with the same hash exists.
    pub force: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, force: false }
    }
}

/// Everything recorded about one finished (scenario, seed) run. Stored as
/// `runs/<hash>/metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub source: String,
    pub target: String,
    pub mitigation: MitigationConfig,
    pub size_class: SizeClass,
    pub seed: u64,
    pub config_hash: String,
    /// Run directory relative to the output root.
    pub run_dir: PathBuf,
    pub metrics: RunMetrics,
    /// The same initialization evaluated without any fine-tuning.
    pub zero_shot: RunMetrics,
    /// Training-split MAE over the last epoch, in bpm.
    pub train_mae: Option<f64>,
    pub n_train: usize,
    pub n_eval: usize,
    pub wall_clock_s: f64,
}

impl RunArtifact {
    pub fn checkpoint_path(&self, out_root: &Path) -> PathBuf {
        out_root.join(&self.run_dir).join(CHECKPOINT_FILE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOutcome {
    pub artifacts: Vec<RunArtifact>,
    pub failures: Vec<FailedRun>,
    /// Runs trained by this call; zero when every hash already existed.
    pub trained: usize,
}

/// Predictions and penultimate features for every record.
pub fn evaluate(net: &TinyPpgNet, records: &[PpgRecord]) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(512) {
        let signals: Vec<&[f64]> = chunk.iter().map(|r| r.signal.as_slice()).collect();
        for ((hr, emb), r) in net.predict(&signals)?.into_iter().zip(chunk) {
            out.push(EvalRecord {
                hr_true: r.hr_bpm,
                hr_pred: hr,
                gender: r.gender,
                dataset: r.dataset.clone(),
                embedding: emb,
            });
        }
    }
    Ok(out)
}

fn context_patches(records: &[PpgRecord]) -> Result<usize> {
    let len = records.first().map(|r| r.signal.len()).ok_or_else(|| Error::invalid("empty training split"))?;
    if records.iter().any(|r| r.signal.len() != len) || len % PATCH_LEN != 0 {
        return Err(Error::Shape("training windows must share one length, a multiple of 40".into()));
    }
    Ok(len / PATCH_LEN)
}

fn load_artifact(dir: &Path) -> Result<Option<RunArtifact>> {
    let path = dir.join(METRICS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let a = serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    Ok(Some(a))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

struct Trained {
    seed: u64,
    hash: String,
    net: TinyPpgNet,
    log: TrainLog,
    seconds: f64,
}

/// Trains every pending seed on the source corpus, then evaluates on the
/// target test split.
///
/// The target corpus is read only after all training has finished, and
/// only through the registry's evaluation phase. Runs whose hash already
/// has a `metrics.json` are loaded instead of retrained unless
/// `opts.force` is set. Divergent seeds are recorded as failures and the
/// remaining seeds carry on.
pub fn run_scenario(scenario: &Scenario, registry: &CorpusRegistry, out_root: &Path, opts: RunOptions) -> Result<ScenarioOutcome> {
    scenario.validate()?;
    registry.check_training_access(&scenario.source, &scenario.target, &scenario.source)?;
    let label = scenario.label();
    let mut outcome = ScenarioOutcome::default();
    let mut done: BTreeMap<u64, RunArtifact> = BTreeMap::new();
    let mut pending = Vec::new();
    for &seed_ in &scenario.seeds {
        let hash = config_hash(scenario, seed_, registry)?;
        let dir = out_root.join("runs").join(&hash);
        match load_artifact(&dir)? {
            Some(a) if !opts.force => {
                done.insert(seed_, a);
            }
            _ => pending.push((seed_, hash)),
        }
    }

    if !pending.is_empty() {
        let source = registry.read(&scenario.source, Phase::Training, &scenario.source, &scenario.target)?;
        let (train_set, _) = split_by_subject(&source, scenario.train_fraction, scenario.split_seed)?;
        drop(source);
        let net_cfg = NetConfig::for_size(scenario.size_class, context_patches(&train_set)?);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        let results: Vec<Result<Trained>> = pool.install(|| {
            pending
                .par_iter()
                .map(|(seed_, hash)| {
                    let start = Instant::now();
                    let mut net = TinyPpgNet::new(net_cfg.clone(), *seed_)?;
                    let cfg = TrainConfig { seed: *seed_, ..scenario.train.clone() };
                    let log = train(&mut net, &train_set, &scenario.mitigation, &cfg)?;
                    let dir = out_root.join("runs").join(hash);
                    save_checkpoint(&dir.join(CHECKPOINT_FILE), &net, &scenario.mitigation)?;
                    log.write_csv(&dir.join(LOG_FILE))?;
                    Ok(Trained { seed: *seed_, hash: hash.clone(), net, log, seconds: start.elapsed().as_secs_f64() })
                })
                .collect()
        });

        let mut trained = Vec::new();
        for (r, (seed_, hash)) in results.into_iter().zip(&pending) {
            match r {
                Ok(t) => trained.push(t),
                Err(Error::Numerical(msg)) => {
                    log::warn!("{label} seed {seed_} diverged: {msg}");
                    let f = FailedRun { scenario: label.clone(), seed: *seed_, config_hash: hash.clone(), error: msg };
                    write_json(&out_root.join("runs").join(hash).join(FAILED_FILE), &f)?;
                    outcome.failures.push(f);
                }
                Err(e) => return Err(e),
            }
        }
        let n_train = train_set.len();
        drop(train_set);

        if !trained.is_empty() {
            let target = registry.read(&scenario.target, Phase::Evaluation, &scenario.source, &scenario.target)?;
            let (_, test) = split_by_subject(&target, scenario.train_fraction, scenario.split_seed)?;
            let finished: Vec<Result<RunArtifact>> = pool.install(|| {
                trained
                    .par_iter()
                    .map(|t| {
                        let start = Instant::now();
                        let eval = evaluate(&t.net, &test)?;
                        let init = TinyPpgNet::new(t.net.config().clone(), t.seed)?;
                        let zero_shot = run_metrics(&evaluate(&init, &test)?, t.seed)?;
                        let metrics = run_metrics(&eval, t.seed)?;
                        let run_dir = PathBuf::from("runs").join(&t.hash);
                        let dir = out_root.join(&run_dir);
                        write_eval(&dir.join(EVAL_FILE), &eval)?;
                        let artifact = RunArtifact {
                            source: scenario.source.clone(),
                            target: scenario.target.clone(),
                            mitigation: scenario.mitigation.clone(),
                            size_class: scenario.size_class,
                            seed: t.seed,
                            config_hash: t.hash.clone(),
                            run_dir,
                            metrics,
                            zero_shot,
                            train_mae: t.log.epochs.last().map(|e| e.train_mae),
                            n_train,
                            n_eval: test.len(),
                            wall_clock_s: t.seconds + start.elapsed().as_secs_f64(),
                        };
                        let failed = dir.join(FAILED_FILE);
                        if failed.exists() {
                            std::fs::remove_file(&failed).map_err(|e| Error::io(&failed, e))?;
                        }
                        write_json(&dir.join(METRICS_FILE), &artifact)?;
                        Ok(artifact)
                    })
                    .collect()
            });
            for a in finished {
                let a = a?;
                log::info!("{label} seed {}: MAE {:.2}, gap {:.2}", a.seed, a.metrics.mae_total, a.metrics.fairness_gap);
                outcome.trained += 1;
                done.insert(a.seed, a);
            }
        }
    }
    outcome.artifacts = scenario.seeds.iter().filter_map(|s| done.remove(s)).collect();
    Ok(outcome)
}
