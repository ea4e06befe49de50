use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::synthpg::Gender;

pub fn group_counts(genders: impl IntoIterator<Item = Gender>) -> BTreeMap<Gender, usize> {
    let mut counts: BTreeMap<Gender, usize> = Gender::ALL.iter().map(|&g| (g, 0)).collect();
    for g in genders {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Inverse-frequency sampling weight per gender, `1 / (2 · f_g)` with
/// `f_g = count_g / total`. Under these weights both groups carry the same
/// total sampling mass.
pub fn if_weights(group_counts: &BTreeMap<Gender, usize>) -> Result<BTreeMap<Gender, f64>> {
    let total: usize = group_counts.values().sum();
    let mut out = BTreeMap::new();
    for g in Gender::ALL {
        let count = group_counts.get(&g).copied().unwrap_or(0);
        if count == 0 {
            return Err(Error::MissingGroup(format!("no {g:?} samples for inverse-frequency weights")));
        }
        let f = count as f64 / total as f64;
        out.insert(g, 1.0 / (2.0 * f));
    }
    Ok(out)
}

/// GroupDRO group weights `1 + η · L̂_g` with min-max normalized losses.
/// When all losses are equal every `L̂_g` is 0.
pub fn dro_group_weights<K: Ord + Clone>(losses: &BTreeMap<K, f64>, eta: f64) -> Result<BTreeMap<K, f64>> {
    if losses.is_empty() {
        return Err(Error::invalid("GroupDRO needs at least one group"));
    }
    if losses.values().any(|l| !l.is_finite()) || !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::Numerical("non-finite group loss or invalid eta".into()));
    }
    let min = losses.values().cloned().fold(f64::INFINITY, f64::min);
    let max = losses.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    Ok(losses
        .iter()
        .map(|(k, &l)| {
            let norm = if span > 0.0 { (l - min) / span } else { 0.0 };
            (k.clone(), 1.0 + eta * norm)
        })
        .collect())
}

/// Per-group bookkeeping for GroupDRO.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupState<K: Ord + Clone> {
    /// Exponential moving average of each group's loss; empty until the
    /// first update.
    pub ema_loss: BTreeMap<K, f64>,
    pub counts: BTreeMap<K, usize>,
    pub group_weights: BTreeMap<K, f64>,
    pub momentum: f64,
}

impl<K: Ord + Clone> GroupState<K> {
    /// Starts with `w_g = 1` for every group.
    pub fn new(counts: BTreeMap<K, usize>, momentum: f64) -> Result<Self> {
        if counts.is_empty() || counts.values().any(|&c| c == 0) {
            return Err(Error::MissingGroup("GroupDRO needs every group to have members".into()));
        }
        let group_weights = counts.keys().map(|k| (k.clone(), 1.0)).collect();
        Ok(Self {
            ema_loss: BTreeMap::new(),
            counts,
            group_weights,
            momentum,
        })
    }

    /// Sampling weight of one sample of group `k`: `w_g / |G_g|`.
    pub fn sample_weight(&self, k: &K) -> f64 {
        self.group_weights[k] / self.counts[k] as f64
    }
}

/// Folds one epoch's per-group losses into the EMA and recomputes the group
/// weights from it. The first update takes the losses as they are.
pub fn dro_update<K: Ord + Clone>(state: &mut GroupState<K>, epoch_losses: &BTreeMap<K, f64>, eta: f64) -> Result<()> {
    if epoch_losses.values().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("non-finite group loss".into()));
    }
    for (k, &l) in epoch_losses {
        let m = state.momentum;
        state
            .ema_loss
            .entry(k.clone())
            .and_modify(|e| *e = m * *e + (1.0 - m) * l)
            .or_insert(l);
    }
    state.group_weights = dro_group_weights(&state.ema_loss, eta)?;
    for k in state.counts.keys() {
        state.group_weights.entry(k.clone()).or_insert(1.0);
    }
    Ok(())
}

/// Expands group weights into one weight per sample.
pub fn per_sample_weights<K: Ord>(labels: &[K], weight_of: impl Fn(&K) -> f64) -> Vec<f64> {
    labels.iter().map(weight_of).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mitigate::weighted_sampler;

    fn counts(f: usize, m: usize) -> BTreeMap<Gender, usize> {
        [(Gender::Female, f), (Gender::Male, m)].into_iter().collect()
    }

    #[test]
    fn balanced_groups_get_unit_weight() {
        let w = if_weights(&counts(50, 50)).unwrap();
        assert_eq!(w[&Gender::Female], 1.0);
        assert_eq!(w[&Gender::Male], 1.0);
    }

    #[test]
    fn three_to_one_split() {
        let w = if_weights(&counts(75, 25)).unwrap();
        assert!((w[&Gender::Female] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[&Gender::Male], 2.0);
        assert!(if_weights(&counts(10, 0)).is_err());
    }

    #[test]
    fn weighted_draws_balance_group_mass() {
        let labels: Vec<Gender> = (0..400).map(|i| if i < 300 { Gender::Female } else { Gender::Male }).collect();
        let w = if_weights(&group_counts(labels.iter().copied())).unwrap();
        let sw = per_sample_weights(&labels, |g| w[g]);
        // count_g · w_g is the same for both groups.
        assert!((300.0 * w[&Gender::Female] - 100.0 * w[&Gender::Male]).abs() < 1e-12);
        let draws = weighted_sampler(&sw, 100_000, 5).unwrap();
        let male = draws.iter().filter(|&&i| labels[i] == Gender::Male).count() as f64 / 1e5;
        assert!((male - 0.5).abs() < 0.01, "male share {male}");
    }

    #[test]
    fn dro_examples() {
        let mut st = GroupState::new(counts(10, 30), 0.9).unwrap();
        let losses: BTreeMap<Gender, f64> = [(Gender::Female, 2.0), (Gender::Male, 6.0)].into_iter().collect();
        dro_update(&mut st, &losses, 1.0).unwrap();
        assert_eq!(st.group_weights[&Gender::Female], 1.0);
        assert_eq!(st.group_weights[&Gender::Male], 2.0);
        assert_eq!(st.sample_weight(&Gender::Male), 2.0 / 30.0);

        let three: BTreeMap<u8, f64> = [(0, 2.0), (1, 4.0), (2, 6.0)].into_iter().collect();
        let w = dro_group_weights(&three, 1.0).unwrap();
        assert_eq!(w.values().cloned().collect::<Vec<_>>(), vec![1.0, 1.5, 2.0]);

        let equal: BTreeMap<u8, f64> = [(0, 3.0), (1, 3.0)].into_iter().collect();
        for eta in [0.0, 1.0, 7.5] {
            assert!(dro_group_weights(&equal, eta).unwrap().values().all(|&w| w == 1.0));
        }
    }

    #[test]
    fn dro_tracks_an_ema() {
        let mut st = GroupState::new(counts(5, 5), 0.5).unwrap();
        let l = |f: f64, m: f64| -> BTreeMap<Gender, f64> { [(Gender::Female, f), (Gender::Male, m)].into_iter().collect() };
        dro_update(&mut st, &l(1.0, 3.0), 1.0).unwrap();
        dro_update(&mut st, &l(5.0, 1.0), 1.0).unwrap();
        assert_eq!(st.ema_loss[&Gender::Female], 3.0);
        assert_eq!(st.ema_loss[&Gender::Male], 2.0);
        assert_eq!(st.group_weights[&Gender::Female], 2.0);
        assert_eq!(st.group_weights[&Gender::Male], 1.0);
        assert!(dro_update(&mut st, &l(f64::NAN, 1.0), 1.0).is_err());
    }

    #[test]
    fn zero_eta_and_balanced_corpus_reduce_to_uniform() {
        let st = GroupState::new(counts(20, 20), 0.9).unwrap();
        let mut st0 = st.clone();
        let losses: BTreeMap<Gender, f64> = [(Gender::Female, 0.3), (Gender::Male, 0.9)].into_iter().collect();
        dro_update(&mut st0, &losses, 0.0).unwrap();
        assert_eq!(st0.sample_weight(&Gender::Female), st0.sample_weight(&Gender::Male));
        let w = if_weights(&counts(20, 20)).unwrap();
        assert_eq!(w[&Gender::Female], w[&Gender::Male]);
    }
}
