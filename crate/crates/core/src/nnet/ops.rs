//! Dense building blocks on row-major slices. `w` is stored `[out][in]`.

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `out[r] = w · x[r] + b`
pub(crate) fn linear(x: &[f64], w: &[f64], b: Option<&[f64]>, n_in: usize, n_out: usize, out: &mut [f64]) {
    for (xr, or) in x.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
        for (o, (wr, slot)) in w.chunks_exact(n_in).zip(or.iter_mut()).enumerate() {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for (wi, xi) in wr.iter().zip(xr) {
                acc += wi * xi;
            }
            *slot = acc;
        }
    }
}

/// Backward of [`linear`]: accumulates into `dw`, `db` and (if given) `dx`.
pub(crate) fn linear_backward(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    n_in: usize,
    n_out: usize,
    mut dx: Option<&mut [f64]>,
    dw: &mut [f64],
    mut db: Option<&mut [f64]>,
) {
    let rows = dout.len() / n_out;
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        let dr = &dout[r * n_out..(r + 1) * n_out];
        for (o, &g) in dr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            if let Some(db) = db.as_deref_mut() {
                db[o] += g;
            }
            let dwr = &mut dw[o * n_in..(o + 1) * n_in];
            for (d, xi) in dwr.iter_mut().zip(xr) {
                *d += g * xi;
            }
            if let Some(dx) = dx.as_deref_mut() {
                let wr = &w[o * n_in..(o + 1) * n_in];
                let dxr = &mut dx[r * n_in..(r + 1) * n_in];
                for (d, wi) in dxr.iter_mut().zip(wr) {
                    *d += g * wi;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], out: &mut [f64]) -> LnCache {
    let d = gamma.len();
    let rows = x.len() / d;
    let mut cache = LnCache {
        xhat: vec![0.0; x.len()],
        rstd: vec![0.0; rows],
    };
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        cache.rstd[r] = rstd;
        for i in 0..d {
            let xh = (xr[i] - mean) * rstd;
            cache.xhat[r * d + i] = xh;
            out[r * d + i] = gamma[i] * xh + beta[i];
        }
    }
    cache
}

/// Accumulates the input gradient into `dx`.
pub(crate) fn layer_norm_backward(
    cache: &LnCache,
    gamma: &[f64],
    dout: &[f64],
    dx: &mut [f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) {
    let d = gamma.len();
    for (r, &rstd) in cache.rstd.iter().enumerate() {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dy = &dout[r * d..(r + 1) * d];
        let mut sum_dxh = 0.0;
        let mut sum_dxh_xh = 0.0;
        for i in 0..d {
            dgamma[i] += dy[i] * xh[i];
            dbeta[i] += dy[i];
            let dxh = dy[i] * gamma[i];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[i];
        }
        let inv_d = 1.0 / d as f64;
        for i in 0..d {
            let dxh = dy[i] * gamma[i];
            dx[r * d + i] += rstd * (dxh - sum_dxh * inv_d - xh[i] * sum_dxh_xh * inv_d);
        }
    }
}

/// Tanh-approximated GELU.
#[inline]
pub(crate) fn gelu(z: f64) -> f64 {
    let u = GELU_C * (z + GELU_A * z * z * z);
    0.5 * z * (1.0 + u.tanh())
}

#[inline]
pub(crate) fn gelu_grad(z: f64) -> f64 {
    let u = GELU_C * (z + GELU_A * z * z * z);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * z * z)
}
