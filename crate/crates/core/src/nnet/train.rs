use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, OptimizerState, Schedule, TinyPpgNet};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::mitigate::{
    adv_training_step, dro_update, group_counts, if_weights, weighted_sampler, Adversary, GroupState,
    MitigationConfig, MitigationKind,
};
use crate::seed;
use crate::synthpg::{Gender, PpgRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub warmup_frac: f64,
    pub lr_start: f64,
    pub lr_peak: f64,
    pub lr_end: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = Schedule::new(1);
        Self {
            epochs: 50,
            batch_size: 32,
            seed: 0,
            warmup_frac: s.warmup_frac,
            lr_start: s.lr_start,
            lr_peak: s.lr_peak,
            lr_end: s.lr_end,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub const MAX_EPOCHS: usize = 50;

    pub fn validate(&self) -> Result<()> {
        if self.epochs > Self::MAX_EPOCHS {
            return Err(Error::invalid(format!("epochs must be at most {}, got {}", Self::MAX_EPOCHS, self.epochs)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        let lrs = [self.lr_start, self.lr_peak, self.lr_end];
        if lrs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::invalid("learning rates must be nonnegative and warmup_frac in [0, 1)"));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_records: usize) -> usize {
        n_records.div_ceil(self.batch_size)
    }

    pub fn schedule(&self, total_steps: u64) -> Schedule {
        Schedule {
            warmup_frac: self.warmup_frac,
            lr_start: self.lr_start,
            lr_peak: self.lr_peak,
            lr_end: self.lr_end,
            total_steps,
        }
    }
}

/// One optimizer step. Group losses are unweighted means of the per-record
/// composite loss over the batch members of that group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_l1: f64,
    pub loss_ll: f64,
    pub loss_group_f: Option<f64>,
    pub loss_group_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean absolute HR error over the records seen this epoch, in bpm.
    pub train_mae: f64,
    pub group_loss: BTreeMap<Gender, f64>,
    pub lr: f64,
    /// GroupDRO group weights in effect during this epoch.
    pub group_weights: Option<BTreeMap<Gender, f64>>,
    pub adversary_accuracy: Option<f64>,
    /// Batches where the adversary phase was skipped.
    pub adversary_skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainLog {
    pub const CSV_HEADER: [&'static str; 8] =
        ["epoch", "step", "lr", "loss_total", "loss_l1", "loss_ll", "loss_group_F", "loss_group_M"];

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Schema(format!("training log: {e}"));
        w.write_record(Self::CSV_HEADER).map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.steps {
            w.write_record([
                s.epoch.to_string(),
                s.step.to_string(),
                s.lr.to_string(),
                s.loss_total.to_string(),
                s.loss_l1.to_string(),
                s.loss_ll.to_string(),
                opt(s.loss_group_f),
                opt(s.loss_group_m),
            ])
            .map_err(err)?;
        }
        let mut out = w.into_inner().map_err(|e| Error::Schema(format!("training log: {e}")))?;
        out.flush().ok();
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_csv()?)
    }
}

fn epoch_order(
    kind: MitigationKind,
    n: usize,
    genders: &[Gender],
    dro: Option<&GroupState<Gender>>,
    if_w: Option<&BTreeMap<Gender, f64>>,
    epoch_seed: u64,
) -> Result<Vec<usize>> {
    match kind {
        MitigationKind::Unbalanced | MitigationKind::Adversarial => {
            let mut order: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut seed::rng_for(epoch_seed, "order"));
            Ok(order)
        }
        MitigationKind::InverseFrequency => {
            let w = if_w.expect("inverse-frequency weights");
            let sw: Vec<f64> = genders.iter().map(|g| w[g]).collect();
            weighted_sampler(&sw, n, epoch_seed)
        }
        MitigationKind::GroupDro => {
            let st = dro.expect("GroupDRO state");
            let sw: Vec<f64> = genders.iter().map(|g| st.sample_weight(g)).collect();
            weighted_sampler(&sw, n, epoch_seed)
        }
    }
}

/// Fine-tunes `net` on `corpus` for `cfg.epochs` epochs, applying the
/// configured mitigation. Deterministic for a fixed `cfg.seed`.
pub fn train(
    net: &mut TinyPpgNet,
    corpus: &[PpgRecord],
    mitigation: &MitigationConfig,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    mitigation.validate()?;
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok(log);
    }
    if corpus.is_empty() {
        return Err(Error::invalid("cannot train on an empty corpus"));
    }
    let n = corpus.len();
    let genders: Vec<Gender> = corpus.iter().map(|r| r.gender).collect();
    let counts = group_counts(genders.iter().copied());
    let kind = mitigation.kind;
    if kind.is_group_aware() && counts.values().any(|&c| c == 0) {
        return Err(Error::MissingGroup(format!(
            "{} needs both genders in the training corpus",
            kind.label()
        )));
    }
    let if_w = match kind {
        MitigationKind::InverseFrequency => Some(if_weights(&counts)?),
        _ => None,
    };
    let mut dro = match kind {
        MitigationKind::GroupDro => Some(GroupState::new(counts.clone(), mitigation.group_loss_momentum)?),
        _ => None,
    };
    let mut adversary = match kind {
        MitigationKind::Adversarial => Some(Adversary::new(
            net.config().d_model,
            &mitigation.adversary,
            seed::derive_str(cfg.seed, "adversary"),
        )),
        _ => None,
    };

    let steps_per_epoch = cfg.steps_per_epoch(n);
    let total = (steps_per_epoch * cfg.epochs) as u64;
    let mut opt = OptimizerState::new(net.param_count(), cfg.schedule(total), cfg.adam);

    for epoch in 0..cfg.epochs {
        let epoch_seed = seed::derive(cfg.seed, epoch as u64);
        let order = epoch_order(kind, n, &genders, dro.as_ref(), if_w.as_ref(), epoch_seed)?;
        let weights_in_effect = dro.as_ref().map(|d| d.group_weights.clone());

        let mut loss_sum = 0.0;
        let mut abs_err = 0.0;
        let mut group_sum = [0.0f64; 2];
        let mut group_n = [0usize; 2];
        let mut acc_sum = 0.0;
        let mut acc_n = 0usize;
        let mut skipped = 0usize;
        let mut lr = opt.current_lr();

        for batch in order.chunks(cfg.batch_size) {
            let signals: Vec<&[f64]> = batch.iter().map(|&i| corpus[i].signal.as_slice()).collect();
            let hr: Vec<f64> = batch.iter().map(|&i| corpus[i].hr_bpm).collect();
            let bg: Vec<Gender> = batch.iter().map(|&i| genders[i]).collect();
            let step = opt.step;

            let breakdown = match adversary.as_mut() {
                Some(adv) => {
                    lr = opt.current_lr();
                    let d = adv_training_step(
                        net,
                        &mut opt,
                        adv,
                        &signals,
                        &hr,
                        &bg,
                        mitigation.lambda,
                        mitigation.adversary.steps_per_batch,
                    )?;
                    if d.skipped {
                        skipped += 1;
                    }
                    if let Some(a) = d.adversary_accuracy {
                        acc_sum += a;
                        acc_n += 1;
                    }
                    d.breakdown
                }
                None => {
                    let (b, grad) = net.loss_and_grad(&signals, &hr, None, None)?;
                    if !b.total.is_finite() {
                        return Err(Error::Numerical(format!("loss diverged at epoch {epoch}, step {step}")));
                    }
                    lr = opt.adam_step(net.params_mut(), &grad)?;
                    b
                }
            };

            let per = &breakdown.composite.per_record;
            let mut bsum = [0.0f64; 2];
            let mut bn = [0usize; 2];
            for (k, g) in bg.iter().enumerate() {
                bsum[g.index()] += per[k];
                bn[g.index()] += 1;
                abs_err += (breakdown.hr_pred[k] - hr[k]).abs();
            }
            for gi in 0..2 {
                group_sum[gi] += bsum[gi];
                group_n[gi] += bn[gi];
            }
            let gmean = |gi: usize| (bn[gi] > 0).then(|| bsum[gi] / bn[gi] as f64);
            loss_sum += breakdown.total * batch.len() as f64;
            log.steps.push(StepLog {
                epoch,
                step,
                lr,
                loss_total: breakdown.total,
                loss_l1: breakdown.composite.mean_l1(),
                loss_ll: breakdown.composite.mean_ll(),
                loss_group_f: gmean(Gender::Female.index()),
                loss_group_m: gmean(Gender::Male.index()),
            });
        }

        let group_loss: BTreeMap<Gender, f64> = Gender::ALL
            .iter()
            .filter(|g| group_n[g.index()] > 0)
            .map(|&g| (g, group_sum[g.index()] / group_n[g.index()] as f64))
            .collect();
        if let Some(state) = dro.as_mut() {
            dro_update(state, &group_loss, mitigation.eta)?;
        }
        let summary = EpochSummary {
            epoch,
            mean_loss: loss_sum / order.len() as f64,
            train_mae: abs_err / order.len() as f64,
            group_loss,
            lr,
            group_weights: weights_in_effect,
            adversary_accuracy: (acc_n > 0).then(|| acc_sum / acc_n as f64),
            adversary_skipped: skipped,
        };
        log::debug!(
            "epoch {epoch}: loss {:.4} mae {:.2} lr {:.2e}",
            summary.mean_loss,
            summary.train_mae,
            summary.lr
        );
        log.epochs.push(summary);
    }
    Ok(log)
}
