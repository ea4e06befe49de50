use crate::error::{Error, Result};

const ROPE_BASE: f64 = 10_000.0;

/// Angle table for positions `0..n_pos`: `(cos, sin)` each laid out as
/// `[pos][pair]` with `head_dim / 2` pairs.
#[derive(Debug, Clone)]
pub(crate) struct RopeTable {
    pub half: usize,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl RopeTable {
    pub fn new(head_dim: usize, n_pos: usize) -> Self {
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(n_pos * half);
        let mut sin = Vec::with_capacity(n_pos * half);
        for p in 0..n_pos {
            for j in 0..half {
                let theta = ROPE_BASE.powf(-2.0 * j as f64 / head_dim as f64);
                let a = p as f64 * theta;
                cos.push(a.cos());
                sin.push(a.sin());
            }
        }
        Self { half, cos, sin }
    }

    /// Rotates the interleaved pairs of `x` in place; `inverse` applies the
    /// transpose rotation (used for the backward pass).
    #[inline]
    pub fn apply(&self, x: &mut [f64], pos: usize, inverse: bool) {
        let base = pos * self.half;
        for j in 0..self.half {
            let c = self.cos[base + j];
            let s = if inverse { -self.sin[base + j] } else { self.sin[base + j] };
            let (x0, x1) = (x[2 * j], x[2 * j + 1]);
            x[2 * j] = x0 * c - x1 * s;
            x[2 * j + 1] = x0 * s + x1 * c;
        }
    }
}

fn rotate(x: &[f64], positions: &[usize], head_dim: usize, inverse: bool) -> Result<Vec<f64>> {
    if head_dim == 0 || head_dim % 2 != 0 {
        return Err(Error::invalid(format!("rotary encoding needs an even head_dim, got {head_dim}")));
    }
    if x.len() != positions.len() * head_dim {
        return Err(Error::Shape(format!(
            "{} values for {} positions of width {head_dim}",
            x.len(),
            positions.len()
        )));
    }
    let max_pos = positions.iter().copied().max().unwrap_or(0);
    let table = RopeTable::new(head_dim, max_pos + 1);
    let mut out = x.to_vec();
    for (row, &p) in out.chunks_exact_mut(head_dim).zip(positions) {
        table.apply(row, p, inverse);
    }
    Ok(out)
}

/// Rotary position encoding of a sequence of `head_dim`-wide vectors
/// (row-major), pair `j` rotated by `pos · 10000^(-2j/head_dim)`.
pub fn rotary_encode(x: &[f64], positions: &[usize], head_dim: usize) -> Result<Vec<f64>> {
    rotate(x, positions, head_dim, false)
}

/// Inverse of [`rotary_encode`].
pub fn rotary_decode(x: &[f64], positions: &[usize], head_dim: usize) -> Result<Vec<f64>> {
    rotate(x, positions, head_dim, true)
}
