use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::NetConfig;
use super::loss::{composite_loss, logit_laplace_grad, normalized_weights, CompositeLoss, Recon};
use super::ops::{gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, LnCache};
use super::rope::RopeTable;
use crate::error::{Error, Result};
use crate::seed;

/// Records per gradient-accumulation chunk. Chunks run in parallel and are
/// summed in order, so gradients do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
struct LayerIdx {
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    wq: Range<usize>,
    wk: Range<usize>,
    wv: Range<usize>,
    wo: Range<usize>,
    bo: Range<usize>,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

#[derive(Debug, Clone)]
struct Index {
    embed_w: Range<usize>,
    embed_b: Range<usize>,
    layers: Vec<LayerIdx>,
    lnf_g: Range<usize>,
    lnf_b: Range<usize>,
    hr_w: Range<usize>,
    hr_b: Range<usize>,
    rec_w: Range<usize>,
    rec_b: Range<usize>,
}

struct LayoutBuilder {
    specs: Vec<ParamSpec>,
    next: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: &[usize]) -> Range<usize> {
        let spec = ParamSpec {
            name,
            shape: shape.to_vec(),
            offset: self.next,
        };
        let r = spec.range();
        self.next = r.end;
        self.specs.push(spec);
        r
    }
}

fn build_layout(c: &NetConfig) -> (Vec<ParamSpec>, Index) {
    let (d, f, pl) = (c.d_model, c.ffn_dim, c.patch_len);
    let mut b = LayoutBuilder { specs: Vec::new(), next: 0 };
    let embed_w = b.add("embed.w".into(), &[d, pl]);
    let embed_b = b.add("embed.b".into(), &[d]);
    let layers = (0..c.n_layers)
        .map(|l| {
            let mut add = |n: &str, s: &[usize]| b.add(format!("layers.{l}.{n}"), s);
            LayerIdx {
                ln1_g: add("ln1.gamma", &[d]),
                ln1_b: add("ln1.beta", &[d]),
                wq: add("attn.wq", &[d, d]),
                wk: add("attn.wk", &[d, d]),
                wv: add("attn.wv", &[d, d]),
                wo: add("attn.wo", &[d, d]),
                bo: add("attn.bo", &[d]),
                ln2_g: add("ln2.gamma", &[d]),
                ln2_b: add("ln2.beta", &[d]),
                w1: add("ffn.w1", &[f, d]),
                b1: add("ffn.b1", &[f]),
                w2: add("ffn.w2", &[d, f]),
                b2: add("ffn.b2", &[d]),
            }
        })
        .collect();
    let lnf_g = b.add("final_ln.gamma".into(), &[d]);
    let lnf_b = b.add("final_ln.beta".into(), &[d]);
    let hr_w = b.add("hr_head.w".into(), &[d]);
    let hr_b = b.add("hr_head.b".into(), &[1]);
    let rec_w = b.add("recon_head.w".into(), &[2 * pl, d]);
    let rec_b = b.add("recon_head.b".into(), &[2 * pl]);
    let idx = Index {
        embed_w,
        embed_b,
        layers,
        lnf_g,
        lnf_b,
        hr_w,
        hr_b,
        rec_w,
        rec_b,
    };
    (b.specs, idx)
}

/// Mutable views of two disjoint ranges, `a` before `b`.
fn pair_mut(buf: &mut [f64], a: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

/// An extra loss term on the mean-pooled penultimate features, e.g. the
/// adversarial entropy term. Returns the term's value and its gradient
/// with respect to each record's feature vector.
pub trait FeatureObjective: Sync {
    fn value_and_grad(&self, features: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub hr_pred: Vec<f64>,
    pub recon: Vec<Recon>,
    pub penultimate: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub composite: CompositeLoss,
    /// Value of the feature objective (0 without one).
    pub feature_term: f64,
    /// `composite.total + feature_term`, the quantity the gradient is of.
    pub total: f64,
    pub hr_pred: Vec<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a_in: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    o: Vec<f64>,
    ln2: LnCache,
    f_in: Vec<f64>,
    z: Vec<f64>,
    g: Vec<f64>,
}

struct Cache {
    layers: Vec<LayerCache>,
    lnf: LnCache,
    feat: Vec<f64>,
}

struct RecordOut {
    y: f64,
    recon: Recon,
    pen: Vec<f64>,
}

/// Patch-embedding transformer with an HR regression head on mean-pooled
/// features and a per-sample logit-Laplace reconstruction head.
///
/// All parameters live in one flat buffer; [`ParamSpec`] names the
/// tensors inside it.
#[derive(Debug, Clone)]
pub struct TinyPpgNet {
    config: NetConfig,
    specs: Vec<ParamSpec>,
    idx: Index,
    params: Vec<f64>,
    rope: RopeTable,
}

impl TinyPpgNet {
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let (specs, idx) = build_layout(&config);
        let n = specs.last().map_or(0, |s| s.range().end);
        let rope = RopeTable::new(config.head_dim(), config.context_patches);
        Ok(Self {
            config,
            specs,
            idx,
            params: vec![0.0; n],
            rope,
        })
    }

    /// Scaled-normal initialization: weights `N(0, 1/fan_in)`, residual
    /// output projections further scaled by `1/sqrt(2·n_layers)`, biases
    /// zero, norm gains one.
    pub fn new(config: NetConfig, init_seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = seed::rng_for(init_seed, "init");
        let resid = 1.0 / (2.0 * net.config.n_layers as f64).sqrt();
        for spec in net.specs.clone() {
            let name = spec.name.as_str();
            let slot = &mut net.params[spec.range()];
            if name.ends_with(".gamma") {
                slot.fill(1.0);
            } else if spec.shape.len() == 2 || name == "hr_head.w" {
                let fan_in = *spec.shape.last().unwrap() as f64;
                let mut std = 1.0 / fan_in.sqrt();
                if name.ends_with("attn.wo") || name.ends_with("ffn.w2") {
                    std *= resid;
                }
                for v in slot.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = std * z;
                }
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.specs.iter().find(|s| s.name == name).map(|s| &self.params[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.specs.iter().find(|s| s.name == name)?.range();
        Some(&mut self.params[r])
    }

    /// Name of the tensor holding flat parameter `i`.
    pub fn param_name(&self, i: usize) -> Option<&str> {
        self.specs.iter().find(|s| s.range().contains(&i)).map(|s| s.name.as_str())
    }

    fn check_signal(&self, signal: &[f64]) -> Result<()> {
        if signal.len() != self.config.signal_len() {
            return Err(Error::Shape(format!(
                "signal has {} samples, network expects {} ({} patches of {})",
                signal.len(),
                self.config.signal_len(),
                self.config.context_patches,
                self.config.patch_len
            )));
        }
        Ok(())
    }

    fn hr_from(&self, y: f64) -> f64 {
        self.config.hr_center + self.config.hr_scale * y
    }

    fn forward_one(&self, signal: &[f64]) -> (RecordOut, Cache) {
        let c = &self.config;
        let (np, d, f, nh, hd, pl) = (c.context_patches, c.d_model, c.ffn_dim, c.n_heads, c.head_dim(), c.patch_len);
        let p = &self.params;
        let ix = &self.idx;
        let scale = 1.0 / (hd as f64).sqrt();

        let mut h = vec![0.0; np * d];
        linear(signal, &p[ix.embed_w.clone()], Some(&p[ix.embed_b.clone()]), pl, d, &mut h);

        let mut layers = Vec::with_capacity(c.n_layers);
        for li in &ix.layers {
            let mut a_in = vec![0.0; np * d];
            let ln1 = layer_norm(&h, &p[li.ln1_g.clone()], &p[li.ln1_b.clone()], &mut a_in);
            let mut q = vec![0.0; np * d];
            let mut k = vec![0.0; np * d];
            let mut v = vec![0.0; np * d];
            linear(&a_in, &p[li.wq.clone()], None, d, d, &mut q);
            linear(&a_in, &p[li.wk.clone()], None, d, d, &mut k);
            linear(&a_in, &p[li.wv.clone()], None, d, d, &mut v);
            for i in 0..np {
                for hh in 0..nh {
                    let r = i * d + hh * hd..i * d + (hh + 1) * hd;
                    self.rope.apply(&mut q[r.clone()], i, false);
                    self.rope.apply(&mut k[r], i, false);
                }
            }
            // Causal softmax attention per head.
            let mut attn = vec![0.0; nh * np * np];
            let mut o = vec![0.0; np * d];
            for hh in 0..nh {
                for i in 0..np {
                    let qi = &q[i * d + hh * hd..i * d + (hh + 1) * hd];
                    let row = &mut attn[(hh * np + i) * np..(hh * np + i + 1) * np];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..=i {
                        let kj = &k[j * d + hh * hd..j * d + (hh + 1) * hd];
                        let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                        row[j] = s;
                        max = max.max(s);
                    }
                    let mut sum = 0.0;
                    for s in row[..=i].iter_mut() {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    for s in row[..=i].iter_mut() {
                        *s /= sum;
                    }
                    for j in 0..=i {
                        let a = row[j];
                        for t in 0..hd {
                            o[i * d + hh * hd + t] += a * v[j * d + hh * hd + t];
                        }
                    }
                }
            }
            let mut attn_out = vec![0.0; np * d];
            linear(&o, &p[li.wo.clone()], Some(&p[li.bo.clone()]), d, d, &mut attn_out);
            h.iter_mut().zip(&attn_out).for_each(|(x, y)| *x += y);

            let mut f_in = vec![0.0; np * d];
            let ln2 = layer_norm(&h, &p[li.ln2_g.clone()], &p[li.ln2_b.clone()], &mut f_in);
            let mut z = vec![0.0; np * f];
            linear(&f_in, &p[li.w1.clone()], Some(&p[li.b1.clone()]), d, f, &mut z);
            let g: Vec<f64> = z.iter().map(|&zz| gelu(zz)).collect();
            let mut f_out = vec![0.0; np * d];
            linear(&g, &p[li.w2.clone()], Some(&p[li.b2.clone()]), f, d, &mut f_out);
            h.iter_mut().zip(&f_out).for_each(|(x, y)| *x += y);

            layers.push(LayerCache { ln1, a_in, q, k, v, attn, o, ln2, f_in, z, g });
        }

        let mut feat = vec![0.0; np * d];
        let lnf = layer_norm(&h, &p[ix.lnf_g.clone()], &p[ix.lnf_b.clone()], &mut feat);
        let mut pen = vec![0.0; d];
        for row in feat.chunks_exact(d) {
            pen.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        pen.iter_mut().for_each(|a| *a /= np as f64);
        let y = p[ix.hr_w.clone()].iter().zip(&pen).map(|(a, b)| a * b).sum::<f64>() + p[ix.hr_b.start];

        let mut r = vec![0.0; np * 2 * pl];
        linear(&feat, &p[ix.rec_w.clone()], Some(&p[ix.rec_b.clone()]), d, 2 * pl, &mut r);
        let mut mu = Vec::with_capacity(np * pl);
        let mut log_b = Vec::with_capacity(np * pl);
        for row in r.chunks_exact(2 * pl) {
            mu.extend_from_slice(&row[..pl]);
            log_b.extend_from_slice(&row[pl..]);
        }
        (RecordOut { y, recon: Recon { mu, log_b }, pen }, Cache { layers, lnf, feat })
    }

    /// Accumulates the parameter gradient of one record into `grad`.
    ///
    /// `dy` is the loss derivative with respect to the (normalized) HR head
    /// output, `drecon` the derivatives with respect to `(mu, log_b)` and
    /// `dpen_extra` any additional derivative with respect to the pooled
    /// features.
    fn backward_one(
        &self,
        signal: &[f64],
        out: &RecordOut,
        cache: &Cache,
        dy: f64,
        drecon: Option<(&[f64], &[f64])>,
        dpen_extra: Option<&[f64]>,
        grad: &mut [f64],
    ) {
        let c = &self.config;
        let (np, d, f, nh, hd, pl) = (c.context_patches, c.d_model, c.ffn_dim, c.n_heads, c.head_dim(), c.patch_len);
        let p = &self.params;
        let ix = &self.idx;
        let scale = 1.0 / (hd as f64).sqrt();

        let hr_w = &p[ix.hr_w.clone()];
        let mut dpen: Vec<f64> = hr_w.iter().map(|w| dy * w).collect();
        if let Some(extra) = dpen_extra {
            dpen.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
        }
        for (g, x) in grad[ix.hr_w.clone()].iter_mut().zip(&out.pen) {
            *g += dy * x;
        }
        grad[ix.hr_b.start] += dy;

        let mut dfeat = vec![0.0; np * d];
        for row in dfeat.chunks_exact_mut(d) {
            row.iter_mut().zip(&dpen).for_each(|(a, b)| *a = b / np as f64);
        }
        if let Some((dmu, dlogb)) = drecon {
            let mut dr = vec![0.0; np * 2 * pl];
            for (pi, row) in dr.chunks_exact_mut(2 * pl).enumerate() {
                row[..pl].copy_from_slice(&dmu[pi * pl..(pi + 1) * pl]);
                row[pl..].copy_from_slice(&dlogb[pi * pl..(pi + 1) * pl]);
            }
            let (dw, db) = pair_mut(grad, ix.rec_w.clone(), ix.rec_b.clone());
            linear_backward(&cache.feat, &p[ix.rec_w.clone()], &dr, d, 2 * pl, Some(&mut dfeat), dw, Some(db));
        }

        let mut dh = vec![0.0; np * d];
        {
            let (dg, db) = pair_mut(grad, ix.lnf_g.clone(), ix.lnf_b.clone());
            layer_norm_backward(&cache.lnf, &p[ix.lnf_g.clone()], &dfeat, &mut dh, dg, db);
        }

        for (li, lc) in ix.layers.iter().zip(&cache.layers).rev() {
            // Feed-forward branch.
            let mut dg_act = vec![0.0; np * f];
            {
                let (dw, db) = pair_mut(grad, li.w2.clone(), li.b2.clone());
                linear_backward(&lc.g, &p[li.w2.clone()], &dh, f, d, Some(&mut dg_act), dw, Some(db));
            }
            let dz: Vec<f64> = dg_act.iter().zip(&lc.z).map(|(g, &z)| g * gelu_grad(z)).collect();
            let mut df_in = vec![0.0; np * d];
            {
                let (dw, db) = pair_mut(grad, li.w1.clone(), li.b1.clone());
                linear_backward(&lc.f_in, &p[li.w1.clone()], &dz, d, f, Some(&mut df_in), dw, Some(db));
            }
            {
                let (dgm, dbt) = pair_mut(grad, li.ln2_g.clone(), li.ln2_b.clone());
                layer_norm_backward(&lc.ln2, &p[li.ln2_g.clone()], &df_in, &mut dh, dgm, dbt);
            }

            // Attention branch.
            let mut d_o = vec![0.0; np * d];
            {
                let (dw, db) = pair_mut(grad, li.wo.clone(), li.bo.clone());
                linear_backward(&lc.o, &p[li.wo.clone()], &dh, d, d, Some(&mut d_o), dw, Some(db));
            }
            let mut dq = vec![0.0; np * d];
            let mut dk = vec![0.0; np * d];
            let mut dv = vec![0.0; np * d];
            let mut da = vec![0.0; np];
            for hh in 0..nh {
                let off = hh * hd;
                for i in 0..np {
                    let row = &lc.attn[(hh * np + i) * np..(hh * np + i + 1) * np];
                    let doi = &d_o[i * d + off..i * d + off + hd];
                    let mut dot_sum = 0.0;
                    for j in 0..=i {
                        let vj = &lc.v[j * d + off..j * d + off + hd];
                        da[j] = doi.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dot_sum += row[j] * da[j];
                        for t in 0..hd {
                            dv[j * d + off + t] += row[j] * doi[t];
                        }
                    }
                    for j in 0..=i {
                        let ds = row[j] * (da[j] - dot_sum) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for t in 0..hd {
                            dq[i * d + off + t] += ds * lc.k[j * d + off + t];
                            dk[j * d + off + t] += ds * lc.q[i * d + off + t];
                        }
                    }
                }
            }
            for i in 0..np {
                for hh in 0..nh {
                    let r = i * d + hh * hd..i * d + (hh + 1) * hd;
                    self.rope.apply(&mut dq[r.clone()], i, true);
                    self.rope.apply(&mut dk[r], i, true);
                }
            }
            let mut da_in = vec![0.0; np * d];
            for (w, dproj) in [(&li.wq, &dq), (&li.wk, &dk), (&li.wv, &dv)] {
                linear_backward(&lc.a_in, &p[w.clone()], dproj, d, d, Some(&mut da_in), &mut grad[w.clone()], None);
            }
            {
                let (dgm, dbt) = pair_mut(grad, li.ln1_g.clone(), li.ln1_b.clone());
                layer_norm_backward(&lc.ln1, &p[li.ln1_g.clone()], &da_in, &mut dh, dgm, dbt);
            }
        }

        let (dw, db) = pair_mut(grad, ix.embed_w.clone(), ix.embed_b.clone());
        linear_backward(signal, &p[ix.embed_w.clone()], &dh, pl, d, None, dw, Some(db));
    }

    /// Batch forward pass. Records are independent; the output order
    /// follows the input order.
    pub fn forward(&self, signals: &[&[f64]]) -> Result<ForwardOutput> {
        for s in signals {
            self.check_signal(s)?;
        }
        let outs: Vec<RecordOut> = signals.par_iter().map(|s| self.forward_one(s).0).collect();
        let mut fo = ForwardOutput {
            hr_pred: Vec::with_capacity(outs.len()),
            recon: Vec::with_capacity(outs.len()),
            penultimate: Vec::with_capacity(outs.len()),
        };
        for o in outs {
            fo.hr_pred.push(self.hr_from(o.y));
            fo.recon.push(o.recon);
            fo.penultimate.push(o.pen);
        }
        Ok(fo)
    }

    /// Predicted HR and penultimate features, without the reconstruction.
    pub fn predict(&self, signals: &[&[f64]]) -> Result<Vec<(f64, Vec<f64>)>> {
        for s in signals {
            self.check_signal(s)?;
        }
        Ok(signals
            .par_iter()
            .map(|s| {
                let o = self.forward_one(s).0;
                (self.hr_from(o.y), o.pen)
            })
            .collect())
    }

    /// Composite loss (plus an optional feature objective) and its
    /// reverse-mode gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        signals: &[&[f64]],
        hr_true: &[f64],
        weights: Option<&[f64]>,
        objective: Option<&dyn FeatureObjective>,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        let n = signals.len();
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if hr_true.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} signals", hr_true.len())));
        }
        for s in signals {
            self.check_signal(s)?;
        }
        let w = normalized_weights(weights, n)?;
        let alpha = self.config.recon_weight;

        let fwd: Vec<(RecordOut, Cache)> = signals.par_iter().map(|s| self.forward_one(s)).collect();
        let hr_pred: Vec<f64> = fwd.iter().map(|(o, _)| self.hr_from(o.y)).collect();
        let recon: Vec<Recon> = fwd.iter().map(|(o, _)| o.recon.clone()).collect();
        let composite = composite_loss(&hr_pred, hr_true, &recon, signals, alpha, self.config.hr_scale, Some(&w))?;

        let (feature_term, dpens) = match objective {
            Some(obj) => {
                let pens: Vec<Vec<f64>> = fwd.iter().map(|(o, _)| o.pen.clone()).collect();
                let (v, g) = obj.value_and_grad(&pens)?;
                if g.len() != n {
                    return Err(Error::Shape("feature objective gradient count".into()));
                }
                (v, Some(g))
            }
            None => (0.0, None),
        };

        let chunks: Vec<Vec<f64>> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(GRAD_CHUNK)
            .map(|ids| {
                let mut grad = vec![0.0; self.params.len()];
                for &i in ids {
                    let (out, cache) = &fwd[i];
                    let diff = hr_pred[i] - hr_true[i];
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    let dy = w[i] * sign;
                    let drecon = if alpha > 0.0 && w[i] > 0.0 {
                        let (_, dmu, dlb) = logit_laplace_grad(signals[i], &out.recon.mu, &out.recon.log_b)
                            .expect("validated by composite_loss");
                        let s = w[i] * alpha;
                        Some((dmu.iter().map(|v| v * s).collect::<Vec<_>>(), dlb.iter().map(|v| v * s).collect::<Vec<_>>()))
                    } else {
                        None
                    };
                    let extra = dpens.as_ref().map(|g| g[i].as_slice());
                    if dy == 0.0 && drecon.is_none() && extra.is_none() {
                        continue;
                    }
                    self.backward_one(
                        signals[i],
                        out,
                        cache,
                        dy,
                        drecon.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
                        extra,
                        &mut grad,
                    );
                }
                grad
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        for g in &chunks {
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in {}",
                self.param_name(bad).unwrap_or("?")
            )));
        }
        let total = composite.total + feature_term;
        Ok((LossBreakdown { composite, feature_term, total, hr_pred }, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::SizeClass;

    fn signal(seed_: u64, n: usize) -> Vec<f64> {
        let mut rng = seed::rng(seed_);
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn parameter_count_is_a_function_of_config() {
        let c = NetConfig::for_size(SizeClass::Xs, 4);
        let a = TinyPpgNet::new(c.clone(), 1).unwrap();
        let b = TinyPpgNet::new(c.clone(), 2).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        let (d, f) = (16, 64);
        let per_layer = 4 * d + 4 * d * d + d + f * d + f + d * f + d;
        let expected = d * 40 + d + per_layer + 2 * d + d + 1 + 80 * d + 80;
        assert_eq!(a.param_count(), expected);
        assert!(a.params().iter().all(|v| v.is_finite()));
        assert_ne!(a.params(), b.params());
    }

    #[test]
    fn zero_hr_head_predicts_center() {
        let c = NetConfig::for_size(SizeClass::Xs, 4);
        let mut net = TinyPpgNet::new(c, 3).unwrap();
        net.tensor_mut("hr_head.w").unwrap().fill(0.0);
        net.tensor_mut("hr_head.b").unwrap().fill(0.0);
        let s1 = signal(1, 160);
        let s2 = signal(2, 160);
        let out = net.forward(&[&s1, &s2]).unwrap();
        assert_eq!(out.hr_pred, vec![80.0, 80.0]);
    }

    #[test]
    fn batch_permutation_permutes_outputs() {
        let net = TinyPpgNet::new(NetConfig::for_size(SizeClass::S, 4), 4).unwrap();
        let sigs: Vec<Vec<f64>> = (0..5).map(|i| signal(10 + i, 160)).collect();
        let fwd: Vec<&[f64]> = sigs.iter().map(|s| s.as_slice()).collect();
        let rev: Vec<&[f64]> = sigs.iter().rev().map(|s| s.as_slice()).collect();
        let a = net.forward(&fwd).unwrap();
        let b = net.forward(&rev).unwrap();
        for i in 0..5 {
            assert_eq!(a.hr_pred[i].to_bits(), b.hr_pred[4 - i].to_bits());
            assert_eq!(a.penultimate[i], b.penultimate[4 - i]);
        }
        let again = net.forward(&fwd).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = TinyPpgNet::new(NetConfig::for_size(SizeClass::Xs, 4), 0).unwrap();
        let s = signal(0, 120);
        assert!(matches!(net.forward(&[&s]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_weight_records_contribute_nothing() {
        let net = TinyPpgNet::new(NetConfig::for_size(SizeClass::Xs, 4), 5).unwrap();
        let s1 = signal(1, 160);
        let s2 = signal(2, 160);
        let (_, g_one) = net.loss_and_grad(&[&s1], &[90.0], None, None).unwrap();
        let (_, g_pair) = net.loss_and_grad(&[&s1, &s2], &[90.0, 60.0], Some(&[1.0, 0.0]), None).unwrap();
        for (a, b) in g_one.iter().zip(&g_pair) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn recon_head_gradient_vanishes_without_recon_weight() {
        let mut c = NetConfig::for_size(SizeClass::Xs, 4);
        c.recon_weight = 0.0;
        let net = TinyPpgNet::new(c, 6).unwrap();
        let s = signal(3, 160);
        let (_, g) = net.loss_and_grad(&[&s], &[70.0], None, None).unwrap();
        for name in ["recon_head.w", "recon_head.b"] {
            let spec = net.param_specs().iter().find(|p| p.name == name).unwrap();
            assert!(g[spec.range()].iter().all(|&v| v == 0.0));
        }
    }
}
