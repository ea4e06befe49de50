use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    make_report, mmd_study, run_scenario, scaling_sweep, write_mmd_csv, write_scaling_csv, CorpusRegistry, FailedRun,
    MmdInput, MmdRow, RunArtifact, RunOptions, Scenario, ScalingTable,
};
use crate::error::{Error, Result};
use crate::fairmetrics::FairnessReport;
use crate::mitigate::{MitigationConfig, MitigationKind};
use crate::nnet::{SizeClass, TrainConfig};
use crate::synthpg::{generate_corpus, DomainProfile, Preset};

/// How to synthesize a corpus file that does not exist yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSpec {
    /// Built-in preset name; ignored when `profile` is set.
    pub preset: Option<String>,
    /// TOML file with a full domain profile.
    pub profile: Option<PathBuf>,
    pub n_subjects: usize,
    pub windows_per_subject: usize,
    pub bias_strength: Option<f64>,
    pub female_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        Self {
            preset: None,
            profile: None,
            n_subjects: 200,
            windows_per_subject: 10,
            bias_strength: None,
            female_fraction: None,
            seed: 0,
        }
    }
}

impl GenerateSpec {
    pub fn resolve_profile(&self, fallback_name: &str, root: &Path) -> Result<DomainProfile> {
        let mut p = match (&self.profile, &self.preset) {
            (Some(path), _) => DomainProfile::from_toml(&crate::io::read_text(&root.join(path))?)?,
            (None, Some(name)) => {
                Preset::from_name(name).ok_or_else(|| Error::invalid(format!("unknown preset {name:?}")))?.profile()
            }
            (None, None) => Preset::from_name(fallback_name)
                .ok_or_else(|| Error::invalid(format!("corpus {fallback_name:?} needs a preset or profile")))?
                .profile(),
        };
        if let Some(b) = self.bias_strength {
            p.bias_strength = b;
        }
        if let Some(f) = self.female_fraction {
            p.female_fraction = f;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    /// Corpus JSONL path, relative to the output root unless absolute.
    pub path: PathBuf,
    #[serde(default)]
    pub generate: Option<GenerateSpec>,
}

/// Experiment file: corpora, scenario matrix, methods, seeds, size classes
/// and output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Seed of the bootstrap and stratified sampling.
    pub seed: u64,
    /// Training seeds of every scenario.
    pub seeds: Vec<u64>,
    pub size_class: SizeClass,
    pub methods: Vec<MitigationKind>,
    /// (source, target) pairs; empty means every ordered pair of distinct
    /// corpora.
    pub pairs: Vec<(String, String)>,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub scaling_sizes: Vec<SizeClass>,
    /// Empty means the same pairs as the matrix.
    pub scaling_pairs: Vec<(String, String)>,
    /// Datasets pooled by the MMD study; empty means all corpora.
    pub mmd_datasets: Vec<String>,
    pub train: TrainConfig,
    /// Method strengths; `kind` is set per scenario.
    pub mitigation: MitigationConfig,
    pub corpora: BTreeMap<String, CorpusSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let corpora = Preset::ALL
            .iter()
            .map(|p| {
                let spec = CorpusSpec {
                    path: PathBuf::from(format!("corpora/{}.jsonl", p.name())),
                    generate: Some(GenerateSpec { preset: Some(p.name().into()), ..GenerateSpec::default() }),
                };
                (p.name().to_string(), spec)
            })
            .collect();
        Self {
            out_dir: PathBuf::from("out"),
            workers: 1,
            seed: 0,
            seeds: (0..5).collect(),
            size_class: SizeClass::Xs,
            methods: MitigationKind::ALL.to_vec(),
            pairs: Vec::new(),
            train_fraction: 0.8,
            split_seed: 0,
            scaling_sizes: vec![SizeClass::Xs, SizeClass::S],
            scaling_pairs: Vec::new(),
            mmd_datasets: Vec::new(),
            train: TrainConfig { epochs: 20, ..TrainConfig::default() },
            mitigation: MitigationConfig::default(),
            corpora,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Schema(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(format!("experiment config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpora.is_empty() {
            return Err(Error::invalid("experiment defines no corpora"));
        }
        for (s, t) in self.pairs.iter().chain(&self.scaling_pairs) {
            for name in [s, t] {
                if !self.corpora.contains_key(name) {
                    return Err(Error::invalid(format!("pair refers to unknown corpus {name:?}")));
                }
            }
        }
        if let Some(d) = self.mmd_datasets.iter().find(|d| !self.corpora.contains_key(*d)) {
            return Err(Error::invalid(format!("unknown MMD dataset {d:?}")));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("experiment needs at least one method"));
        }
        self.train.validate()?;
        self.mitigation.validate()?;
        self.base_scenario("x", "y", MitigationKind::Unbalanced).validate()
    }

    pub fn matrix_pairs(&self) -> Vec<(String, String)> {
        if !self.pairs.is_empty() {
            return self.pairs.clone();
        }
        let names: Vec<&String> = self.corpora.keys().collect();
        let mut out = Vec::new();
        for s in &names {
            for t in &names {
                if s != t {
                    out.push(((*s).clone(), (*t).clone()));
                }
            }
        }
        out
    }

    pub fn base_scenario(&self, source: &str, target: &str, kind: MitigationKind) -> Scenario {
        Scenario {
            source: source.into(),
            target: target.into(),
            mitigation: MitigationConfig { kind, ..self.mitigation.clone() },
            size_class: self.size_class,
            seeds: self.seeds.clone(),
            train_fraction: self.train_fraction,
            split_seed: self.split_seed,
            train: self.train.clone(),
        }
    }

    pub fn corpus_path(&self, out_root: &Path, name: &str) -> Result<PathBuf> {
        let spec = self.corpora.get(name).ok_or_else(|| Error::invalid(format!("unknown corpus {name:?}")))?;
        Ok(out_root.join(&spec.path))
    }

    /// Generates every corpus that has a recipe and is missing on disk,
    /// then returns the registry of all corpus paths.
    pub fn prepare_corpora(&self, out_root: &Path) -> Result<CorpusRegistry> {
        let mut reg = CorpusRegistry::default();
        for (name, spec) in &self.corpora {
            let path = out_root.join(&spec.path);
            if !path.exists() {
                let gen = spec
                    .generate
                    .as_ref()
                    .ok_or_else(|| Error::io(&path, std::io::Error::from(std::io::ErrorKind::NotFound)))?;
                let mut profile = gen.resolve_profile(name, out_root)?;
                profile.name = name.clone();
                log::info!("generating corpus {name} at {}", path.display());
                generate_corpus(&profile, gen.n_subjects, gen.windows_per_subject, gen.seed, &path)?;
            }
            reg.insert(name.clone(), path);
        }
        Ok(reg)
    }
}

/// What [`run_experiment`] produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentSummary {
    pub artifacts: Vec<RunArtifact>,
    pub failures: Vec<FailedRun>,
    pub reports: Vec<FairnessReport>,
    pub scaling: Vec<ScalingTable>,
    pub mmd: Vec<MmdRow>,
    /// Training runs actually executed (cached runs excluded).
    pub trained: usize,
}

/// Which stages of the experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub matrix: bool,
    pub scaling: bool,
    pub mmd: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { matrix: true, scaling: true, mmd: true };
}

/// Runs the configured stages under `out_root`: the transfer matrix with
/// its reports, the capacity sweep and the MMD study. Report files land
/// in `out_root/reports`.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path, stages: Stages, opts: RunOptions) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let registry = cfg.prepare_corpora(out_root)?;
    let reports_dir = out_root.join("reports");
    let mut summary = ExperimentSummary::default();

    if stages.matrix {
        for (s, t) in cfg.matrix_pairs() {
            for &kind in &cfg.methods {
                let outcome = run_scenario(&cfg.base_scenario(&s, &t, kind), &registry, out_root, opts)?;
                summary.trained += outcome.trained;
                summary.artifacts.extend(outcome.artifacts);
                summary.failures.extend(outcome.failures);
            }
        }
        let files = make_report(&summary.artifacts, &summary.failures, &reports_dir, cfg.seed)?;
        summary.reports = files.reports;
    }

    if stages.scaling {
        let pairs = if cfg.scaling_pairs.is_empty() { cfg.matrix_pairs() } else { cfg.scaling_pairs.clone() };
        for (s, t) in pairs {
            let base = cfg.base_scenario(&s, &t, MitigationKind::Unbalanced);
            let table = scaling_sweep(&base, &cfg.scaling_sizes, &registry, out_root, opts)?;
            summary.failures.extend(table.failures.iter().cloned());
            summary.trained += table.trained;
            summary.scaling.push(table);
        }
        write_scaling_csv(&reports_dir, &summary.scaling)?;
    }

    if stages.mmd {
        let datasets: Vec<String> =
            if cfg.mmd_datasets.is_empty() { cfg.corpora.keys().cloned().collect() } else { cfg.mmd_datasets.clone() };
        let mut inputs: BTreeMap<(MitigationKind, u64), BTreeMap<String, PathBuf>> = BTreeMap::new();
        for &kind in &cfg.methods {
            for ds in &datasets {
                let outcome = run_scenario(&cfg.base_scenario(ds, ds, kind), &registry, out_root, opts)?;
                summary.trained += outcome.trained;
                summary.failures.extend(outcome.failures);
                for a in outcome.artifacts {
                    inputs.entry((kind, a.seed)).or_default().insert(ds.clone(), a.checkpoint_path(out_root));
                }
            }
        }
        let inputs: Vec<MmdInput> = inputs
            .into_iter()
            .filter(|(_, ck)| ck.len() == datasets.len())
            .map(|((method, seed), checkpoints)| MmdInput { method, seed, checkpoints })
            .collect();
        summary.mmd = mmd_study(&inputs, &registry, cfg.train_fraction, cfg.split_seed, cfg.seed)?;
        write_mmd_csv(&reports_dir.join("mmd.csv"), &summary.mmd)?;
    }
    Ok(summary)
}
