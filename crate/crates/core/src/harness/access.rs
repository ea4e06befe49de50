use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthpg::{read_corpus, PpgRecord};

/// What a corpus read is for. Training reads are only ever allowed on the
/// scenario's source corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Training,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    pub seq: usize,
    pub corpus: String,
    pub path: PathBuf,
    pub phase: Phase,
    /// Source → target label of the scenario that performed the read.
    pub scenario: String,
}

/// Named corpus files plus a log of every read made through the registry.
/// All corpus reads in the harness go through [`CorpusRegistry::read`].
#[derive(Debug, Default)]
pub struct CorpusRegistry {
    corpora: BTreeMap<String, PathBuf>,
    log: Mutex<Vec<AccessEvent>>,
}

impl CorpusRegistry {
    pub fn new(corpora: BTreeMap<String, PathBuf>) -> Self {
        Self { corpora, log: Mutex::new(Vec::new()) }
    }

    pub fn insert(&mut self, name: impl Into<String>, path: impl Into<PathBuf>) {
        self.corpora.insert(name.into(), path.into());
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.corpora.keys().map(String::as_str)
    }

    pub fn path(&self, name: &str) -> Result<&Path> {
        self.corpora
            .get(name)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::invalid(format!("unknown corpus {name:?}")))
    }

    /// Fails when a training-phase read targets anything but `source`, or
    /// when the source entry points at the target's file.
    pub fn check_training_access(&self, source: &str, target: &str, requested: &str) -> Result<()> {
        if requested != source {
            return Err(Error::TargetLeak(format!(
                "training for {source} -> {target} tried to read corpus {requested:?}"
            )));
        }
        if source != target && self.path(source)? == self.path(target)? {
            return Err(Error::TargetLeak(format!(
                "source {source:?} and target {target:?} resolve to the same file"
            )));
        }
        Ok(())
    }

    /// Reads corpus `name` for `phase` of the scenario `source → target`.
    pub fn read(&self, name: &str, phase: Phase, source: &str, target: &str) -> Result<Vec<PpgRecord>> {
        if phase == Phase::Training {
            self.check_training_access(source, target, name)?;
        }
        let path = self.path(name)?.to_path_buf();
        {
            let mut log = self.log.lock().expect("access log poisoned");
            let seq = log.len();
            log.push(AccessEvent {
                seq,
                corpus: name.to_string(),
                path: path.clone(),
                phase,
                scenario: format!("{source}->{target}"),
            });
        }
        read_corpus(&path)
    }

    pub fn access_log(&self) -> Vec<AccessEvent> {
        self.log.lock().expect("access log poisoned").clone()
    }
}
