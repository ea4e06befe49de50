use crate::error::{Error, Result};

pub const MMD_GAMMA: f64 = 1.0;

fn dim_of(rows: &[Vec<f64>], what: &str) -> Result<usize> {
    let d = rows.first().map(Vec::len).ok_or_else(|| Error::invalid(format!("{what} is empty")))?;
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(format!("{what} rows have mixed dimensions")));
    }
    Ok(d)
}

/// Mean of `exp(-γ · ‖a − b‖²)` over all pairs, with squared distances
/// taken from row norms and inner products.
fn mean_kernel(a: &[Vec<f64>], na: &[f64], b: &[Vec<f64>], nb: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    for (x, &nx) in a.iter().zip(na) {
        for (y, &ny) in b.iter().zip(nb) {
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let d2 = (nx + ny - 2.0 * dot).max(0.0);
            total += (-gamma * d2).exp();
        }
    }
    total / (a.len() * b.len()) as f64
}

/// Biased (V-statistic) squared MMD with an RBF kernel, self-pairs
/// included:
/// `mean K(X,X) + mean K(Y,Y) − 2 · mean K(X,Y)`.
pub fn mmd2_rbf(x: &[Vec<f64>], y: &[Vec<f64>], gamma: f64) -> Result<f64> {
    let dx = dim_of(x, "X")?;
    let dy = dim_of(y, "Y")?;
    if dx != dy {
        return Err(Error::Shape(format!("X has dimension {dx}, Y has {dy}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    let norms = |rows: &[Vec<f64>]| -> Vec<f64> { rows.iter().map(|r| r.iter().map(|v| v * v).sum()).collect() };
    let (nx, ny) = (norms(x), norms(y));
    let v = mean_kernel(x, &nx, x, &nx, gamma) + mean_kernel(y, &ny, y, &ny, gamma)
        - 2.0 * mean_kernel(x, &nx, y, &ny, gamma);
    Ok(v.max(0.0))
}
