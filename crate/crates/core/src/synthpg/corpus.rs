use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{
    resample_to_40hz, segment_and_standardize, synth_waveform, DomainProfile, Gender, PpgRecord,
    RecordMeta, HR_MAX_BPM, HR_MIN_BPM,
};
use crate::error::{Error, Result};
use crate::io::{atomic_write, parse_jsonl, read_text, round_sig9, to_jsonl};
use crate::seed;

fn sample_hr(profile: &DomainProfile, gender: Gender, rng: &mut impl Rng) -> f64 {
    let (mu, sigma) = profile.hr_dist(gender).log_params();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let hr = (mu + sigma * z).exp();
        if (HR_MIN_BPM..=HR_MAX_BPM).contains(&hr) {
            return round_sig9(hr);
        }
    }
}

/// Generates `n_subjects × windows_per_subject` records.
///
/// Gender counts follow `female_fraction` exactly (rounded, at least one
/// subject of each gender). Every subject derives its own sub-seed from
/// `(seed, subject index)`, so the parallel generation below is
/// bit-identical to a serial loop.
pub fn generate_records(
    profile: &DomainProfile,
    n_subjects: usize,
    windows_per_subject: usize,
    seed: u64,
) -> Result<Vec<PpgRecord>> {
    profile.validate()?;
    if n_subjects < 2 {
        return Err(Error::invalid("need at least 2 subjects (one per gender)"));
    }
    if windows_per_subject == 0 {
        return Err(Error::invalid("windows_per_subject must be >= 1"));
    }
    let n_female = ((n_subjects as f64 * profile.female_fraction).round() as usize)
        .clamp(1, n_subjects - 1);
    let mut genders: Vec<Gender> = (0..n_subjects)
        .map(|i| if i < n_female { Gender::Female } else { Gender::Male })
        .collect();
    genders.shuffle(&mut seed::rng_for(seed, "genders"));

    let duration = (profile.window_seconds * windows_per_subject) as f64;
    let per_subject: Result<Vec<Vec<PpgRecord>>> = genders
        .par_iter()
        .enumerate()
        .map(|(i, &gender)| {
            let sub = seed::derive(seed, i as u64);
            let hr = sample_hr(profile, gender, &mut seed::rng(sub));
            let raw = synth_waveform(hr, duration, profile, gender, seed::derive(sub, 1))?;
            let sig = resample_to_40hz(&raw, profile.native_rate_hz)?;
            let meta = RecordMeta {
                subject_id: format!("{}-{i:05}", profile.name),
                dataset: profile.name.clone(),
                gender,
            };
            let mut recs = segment_and_standardize(&sig, profile.window_seconds, hr, &meta)?;
            for r in &mut recs {
                r.signal.iter_mut().for_each(|v| *v = round_sig9(*v));
            }
            Ok(recs)
        })
        .collect();
    Ok(per_subject?.into_iter().flatten().collect())
}

pub fn write_corpus(path: &Path, records: &[PpgRecord]) -> Result<()> {
    atomic_write(path, &to_jsonl(records))
}

pub fn read_corpus(path: &Path) -> Result<Vec<PpgRecord>> {
    let text = read_text(path)?;
    let records: Vec<PpgRecord> = parse_jsonl(path, &text)?;
    if let Some(bad) = records.iter().find(|r| r.signal.is_empty() || r.signal.len() % 40 != 0) {
        return Err(Error::Schema(format!(
            "{}: record of subject {} has {} samples, not a multiple of 40",
            path.display(),
            bad.subject_id,
            bad.signal.len()
        )));
    }
    Ok(records)
}

/// Generates and writes a corpus; returns the records written.
pub fn generate_corpus(
    profile: &DomainProfile,
    n_subjects: usize,
    windows_per_subject: usize,
    seed: u64,
    path: &Path,
) -> Result<Vec<PpgRecord>> {
    let records = generate_records(profile, n_subjects, windows_per_subject, seed)?;
    write_corpus(path, &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthpg::Preset;

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    #[test]
    fn dalia_female_hr_median_matches_preset() {
        let recs = generate_records(&Preset::Dalia.profile(), 3000, 1, 5).unwrap();
        let f: Vec<f64> = recs.iter().filter(|r| r.gender == Gender::Female).map(|r| r.hr_bpm).collect();
        let m = median(f);
        assert!((m - 85.2).abs() <= 3.0, "female median {m}");
    }

    #[test]
    fn mimic_female_fraction_matches_preset() {
        let recs = generate_records(&Preset::Mimic.profile(), 1000, 1, 9).unwrap();
        let share = recs.iter().filter(|r| r.gender == Gender::Female).count() as f64 / recs.len() as f64;
        assert!((share - 0.623).abs() <= 0.02, "share {share}");
    }

    #[test]
    fn records_are_well_formed() {
        let p = Preset::ButPpg.profile();
        let recs = generate_records(&p, 6, 3, 1).unwrap();
        assert_eq!(recs.len(), 18);
        for r in &recs {
            assert_eq!(r.signal.len(), 40 * p.window_seconds);
            assert!(r.signal.iter().all(|v| v.is_finite()));
            assert!((HR_MIN_BPM..=HR_MAX_BPM).contains(&r.hr_bpm));
            let n = r.signal.len() as f64;
            let mean = r.signal.iter().sum::<f64>() / n;
            let std = (r.signal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-6 && (std - 1.0).abs() < 1e-4);
        }
        assert!(recs.iter().any(|r| r.gender == Gender::Male));
        assert!(recs.iter().any(|r| r.gender == Gender::Female));
    }

    #[test]
    fn byte_identical_files_for_same_seed() {
        let dir = tempfile::tempdir().unwrap();
        let p = Preset::Dalia.profile();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        generate_corpus(&p, 8, 2, 7, &a).unwrap();
        generate_corpus(&p, 8, 2, 7, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let back = read_corpus(&a).unwrap();
        assert_eq!(back, generate_records(&p, 8, 2, 7).unwrap());
    }

    #[test]
    fn rejects_degenerate_requests() {
        let p = Preset::Dalia.profile();
        assert!(generate_records(&p, 1, 1, 0).is_err());
        assert!(generate_records(&p, 2, 0, 0).is_err());
        let mut bad = p;
        bad.female_fraction = 0.0;
        assert!(generate_records(&bad, 10, 1, 0).is_err());
    }
}
