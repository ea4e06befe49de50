use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{hr_bin, EvalRecord, HrBin};
use crate::error::{Error, Result};
use crate::seed;
use crate::synthpg::Gender;

pub const PER_STRATUM: usize = 50;

/// One dataset × gender × HR-bin cell; bins use the true heart rate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stratum {
    pub dataset: String,
    pub gender: Gender,
    pub bin: HrBin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedSample {
    /// Indices into the input, grouped by stratum in sorted stratum order.
    pub indices: Vec<usize>,
    /// Realized draws per non-empty stratum.
    pub counts: BTreeMap<Stratum, usize>,
}

/// Draws up to `per_stratum` records uniformly without replacement from
/// every stratum; smaller strata are taken whole.
pub fn stratified_sample(records: &[EvalRecord], per_stratum: usize, seed_: u64) -> Result<StratifiedSample> {
    if records.is_empty() {
        return Err(Error::invalid("stratified sample of an empty record set"));
    }
    let mut cells: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = Stratum { dataset: r.dataset.clone(), gender: r.gender, bin: hr_bin(r.hr_true)? };
        cells.entry(key).or_default().push(i);
    }
    let mut indices = Vec::new();
    let mut counts = BTreeMap::new();
    for (k, members) in cells {
        let tag = format!("stratum/{}/{}/{}", k.dataset, k.gender.code(), k.bin);
        let mut rng = seed::rng_for(seed_, &tag);
        let take = per_stratum.min(members.len());
        let mut picked: Vec<usize> =
            rand::seq::index::sample(&mut rng, members.len(), take).into_iter().map(|j| members[j]).collect();
        picked.sort_unstable();
        indices.extend(picked);
        counts.insert(k, take);
    }
    Ok(StratifiedSample { indices, counts })
}
