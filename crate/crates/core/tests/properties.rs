use fairtune::fairmetrics::{fairness_gap, hr_bin, mmd2_rbf, silhouette, EvalRecord, HrBin};
use fairtune::synthpg::Gender;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn points(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), n)
}

fn gaussian(rng: &mut impl Rng, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n)
        .map(|_| (0..d).map(|_| { let v: f64 = StandardNormal.sample(rng); v + shift }).collect::<Vec<f64>>())
        .collect()
}

proptest! {
    #[test]
    fn mmd_is_symmetric_and_nonnegative(x in points(1..15, 3), y in points(1..15, 3), gamma in 0.05..3.0f64) {
        let xy = mmd2_rbf(&x, &y, gamma).unwrap();
        let yx = mmd2_rbf(&y, &x, gamma).unwrap();
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - yx).abs() < 1e-12);
    }

    #[test]
    fn silhouette_stays_in_range(x in points(4..40, 2), seed in any::<u64>()) {
        let mut rng = fairtune::seed::rng(seed);
        let mut labels: Vec<u8> = (0..x.len()).map(|i| (i % 3) as u8).collect();
        labels.shuffle(&mut rng);
        let s = silhouette(&x, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn silhouette_is_invariant_under_isometries(
        x in points(4..30, 3),
        theta in 0.0..std::f64::consts::TAU,
        t in prop::collection::vec(-10.0..10.0f64, 3),
        reflect in any::<bool>(),
    ) {
        let labels: Vec<u8> = (0..x.len()).map(|i| (i % 2) as u8).collect();
        let (c, s) = (theta.cos(), theta.sin());
        let moved: Vec<Vec<f64>> = x
            .iter()
            .map(|p| {
                let z = if reflect { -p[2] } else { p[2] };
                vec![c * p[0] - s * p[1] + t[0], s * p[0] + c * p[1] + t[1], z + t[2]]
            })
            .collect();
        let a = silhouette(&x, &labels).unwrap();
        let b = silhouette(&moved, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn hr_bins_partition_the_line(hr in -50.0..400.0f64) {
        let bin = hr_bin(hr).unwrap();
        let expected = [hr < 75.0, (75.0..=95.0).contains(&hr), hr > 95.0];
        prop_assert_eq!(expected.iter().filter(|&&b| b).count(), 1);
        let idx = HrBin::ALL.iter().position(|&b| b == bin).unwrap();
        prop_assert!(expected[idx]);
    }

    #[test]
    fn gap_is_invariant_to_shifting_both_hr_columns(
        rows in prop::collection::vec((40.0..180.0f64, -30.0..30.0f64, any::<bool>()), 2..40),
        shift in -100.0..100.0f64,
    ) {
        let mk = |s: f64| -> Vec<EvalRecord> {
            rows.iter()
                .enumerate()
                .map(|(i, &(t, e, f))| EvalRecord {
                    hr_true: t + s,
                    hr_pred: t + e + s,
                    // The first two rows fix one record per group.
                    gender: if i == 0 || (i > 1 && f) { Gender::Female } else { Gender::Male },
                    dataset: "p".into(),
                    embedding: vec![],
                })
                .collect()
        };
        let a = fairness_gap(&mk(0.0)).unwrap();
        let b = fairness_gap(&mk(shift)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn silhouette_of_shuffled_labels_is_near_zero() {
    let mut rng = fairtune::seed::rng(7);
    for _ in 0..10 {
        let x = gaussian(&mut rng, 120, 4, 0.0);
        let mut labels: Vec<u8> = (0..x.len()).map(|i| (i % 2) as u8).collect();
        labels.shuffle(&mut rng);
        let s = silhouette(&x, &labels).unwrap();
        assert!(s.abs() < 0.1, "silhouette {s}");
    }
}

#[test]
fn same_distribution_mmd_sits_below_the_permutation_null() {
    let mut rng = fairtune::seed::rng(11);
    let mut exceed = 0;
    let trials = 20;
    for _ in 0..trials {
        let x = gaussian(&mut rng, 40, 3, 0.0);
        let y = gaussian(&mut rng, 40, 3, 0.0);
        let obs = mmd2_rbf(&x, &y, 1.0).unwrap();
        let mut pooled: Vec<Vec<f64>> = x.into_iter().chain(y).collect();
        let mut null: Vec<f64> = (0..100)
            .map(|_| {
                pooled.shuffle(&mut rng);
                mmd2_rbf(&pooled[..40], &pooled[40..], 1.0).unwrap()
            })
            .collect();
        null.sort_by(f64::total_cmp);
        if obs > null[94] {
            exceed += 1;
        }
    }
    // Nominal rate is 5%; allow sampling slack.
    assert!(exceed <= 4, "{exceed}/{trials} trials exceeded the null 95th percentile");
}

#[test]
fn shifted_distribution_mmd_exceeds_the_permutation_null() {
    let mut rng = fairtune::seed::rng(12);
    let x = gaussian(&mut rng, 40, 3, 0.0);
    let y = gaussian(&mut rng, 40, 3, 1.0);
    let obs = mmd2_rbf(&x, &y, 1.0).unwrap();
    let mut pooled: Vec<Vec<f64>> = x.into_iter().chain(y).collect();
    let mut null: Vec<f64> = (0..100)
        .map(|_| {
            pooled.shuffle(&mut rng);
            mmd2_rbf(&pooled[..40], &pooled[40..], 1.0).unwrap()
        })
        .collect();
    null.sort_by(f64::total_cmp);
    assert!(obs > null[94]);
}
