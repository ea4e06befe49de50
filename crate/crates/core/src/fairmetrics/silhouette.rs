use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient with Euclidean distances. Points alone in
/// their cluster score 0.
pub fn silhouette<L: Ord + Copy>(embeddings: &[Vec<f64>], labels: &[L]) -> Result<f64> {
    if embeddings.len() != labels.len() {
        return Err(Error::Shape(format!("{} embeddings for {} labels", embeddings.len(), labels.len())));
    }
    let d = embeddings.first().map(Vec::len).unwrap_or(0);
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::Shape("embeddings have mixed dimensions".into()));
    }
    let mut clusters: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    if clusters.len() < 2 {
        return Err(Error::invalid(format!("silhouette needs at least 2 labels, got {}", clusters.len())));
    }
    let total: f64 = (0..embeddings.len())
        .map(|i| {
            let own = &clusters[&labels[i]];
            if own.len() < 2 {
                return 0.0;
            }
            let mut a = 0.0;
            let mut b = f64::INFINITY;
            for (l, members) in &clusters {
                let s: f64 = members.iter().map(|&j| dist(&embeddings[i], &embeddings[j])).sum();
                if *l == labels[i] {
                    a = s / (members.len() - 1) as f64;
                } else {
                    b = b.min(s / members.len() as f64);
                }
            }
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / embeddings.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tight_clusters() {
        let e = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.1]];
        let s = silhouette(&e, &[0, 0, 1, 1]).unwrap();
        // a = 0.1 everywhere; b = 5.05 for the two outer points, 4.95 for the two inner ones.
        let oracle = ((5.05 - 0.1) / 5.05 + (4.95 - 0.1) / 4.95) / 2.0;
        assert!((s - oracle).abs() < 1e-12, "{s} vs {oracle}");
        assert!((s - 0.9799).abs() < 1e-4);
    }

    #[test]
    fn coincident_clusters_do_not_score_positive() {
        let e = vec![vec![1.0, 1.0]; 6];
        assert!(silhouette(&e, &[0, 1, 0, 1, 0, 1]).unwrap() <= 0.0);
    }

    #[test]
    fn singleton_scores_zero_and_one_label_fails() {
        let e = vec![vec![0.0], vec![0.2], vec![9.0]];
        let s = silhouette(&e, &[0, 0, 1]).unwrap();
        let inner = (9.0 - 0.2) / 9.0;
        let inner2 = (8.8 - 0.2) / 8.8;
        assert!((s - (inner + inner2) / 3.0).abs() < 1e-12);
        assert!(silhouette(&e, &[0, 0, 0]).is_err());
    }
}
