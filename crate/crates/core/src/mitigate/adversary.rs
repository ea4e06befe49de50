use rand::Rng;
use rand_distr::StandardNormal;

use super::AdversaryConfig;
use crate::error::{Error, Result};
use crate::nnet::{AdamConfig, FeatureObjective, LossBreakdown, OptimizerState, Schedule, TinyPpgNet};
use crate::seed;
use crate::synthpg::Gender;

/// Batch-mean Shannon entropy (natural log) of class distributions.
pub fn adversary_entropy(probs: &[Vec<f64>]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::invalid("entropy of an empty batch"));
    }
    let mut total = 0.0;
    for p in probs {
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("invalid probability vector {p:?}")));
        }
        total -= p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
    }
    Ok(total / probs.len() as f64)
}

fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Two-layer tanh MLP from penultimate features to gender logits, with its
/// own Adam state.
#[derive(Debug, Clone)]
pub struct Adversary {
    d_in: usize,
    hidden: usize,
    params: Vec<f64>,
    opt: OptimizerState,
}

struct AdvForward {
    h: Vec<f64>,
    probs: [f64; 2],
}

impl Adversary {
    pub fn new(d_in: usize, cfg: &AdversaryConfig, init_seed: u64) -> Self {
        let hidden = cfg.hidden_dim;
        let n = hidden * d_in + hidden + 2 * hidden + 2;
        let mut rng = seed::rng_for(init_seed, "adversary-init");
        let mut params = vec![0.0; n];
        let s1 = 1.0 / (d_in as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        for v in &mut params[..hidden * d_in] {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        let w2 = hidden * d_in + hidden;
        for v in &mut params[w2..w2 + 2 * hidden] {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        let adam = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        Self {
            d_in,
            hidden,
            opt: OptimizerState::new(n, Schedule::constant(cfg.lr), adam),
            params,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.d_in;
        let w2 = b1 + self.hidden;
        let b2 = w2 + 2 * self.hidden;
        (b1, w2, b2)
    }

    fn forward(&self, x: &[f64]) -> AdvForward {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &p[j * self.d_in..(j + 1) * self.d_in];
                (p[b1 + j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).tanh()
            })
            .collect();
        let z = [0, 1].map(|c| {
            let row = &p[w2 + c * self.hidden..w2 + (c + 1) * self.hidden];
            p[b2 + c] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>()
        });
        AdvForward { h, probs: softmax2(z) }
    }

    /// Class probabilities `[P(female), P(male)]`.
    pub fn probs(&self, x: &[f64]) -> [f64; 2] {
        self.forward(x).probs
    }

    /// Backpropagates `dz` (logit gradient) from one input; accumulates the
    /// parameter gradient into `grad` if given and returns the input
    /// gradient.
    fn backward(&self, x: &[f64], fw: &AdvForward, dz: [f64; 2], grad: Option<&mut [f64]>) -> Vec<f64> {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut dh = vec![0.0; self.hidden];
        for c in 0..2 {
            for j in 0..self.hidden {
                dh[j] += dz[c] * p[w2 + c * self.hidden + j];
            }
        }
        let dpre: Vec<f64> = dh.iter().zip(&fw.h).map(|(d, h)| d * (1.0 - h * h)).collect();
        let mut dx = vec![0.0; self.d_in];
        for j in 0..self.hidden {
            let row = &p[j * self.d_in..(j + 1) * self.d_in];
            dx.iter_mut().zip(row).for_each(|(a, w)| *a += dpre[j] * w);
        }
        if let Some(g) = grad {
            for c in 0..2 {
                g[b2 + c] += dz[c];
                for j in 0..self.hidden {
                    g[w2 + c * self.hidden + j] += dz[c] * fw.h[j];
                }
            }
            for j in 0..self.hidden {
                g[b1 + j] += dpre[j];
                for (gi, xi) in g[j * self.d_in..(j + 1) * self.d_in].iter_mut().zip(x) {
                    *gi += dpre[j] * xi;
                }
            }
        }
        dx
    }

    /// Mean cross-entropy on `(features, gender)` pairs and its parameter
    /// gradient.
    pub fn cross_entropy_grad(&self, xs: &[Vec<f64>], labels: &[Gender]) -> (f64, Vec<f64>) {
        let n = xs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (x, g) in xs.iter().zip(labels) {
            let fw = self.forward(x);
            let y = g.index();
            loss -= fw.probs[y].max(1e-300).ln();
            let mut dz = fw.probs;
            dz[y] -= 1.0;
            let dz = dz.map(|v| v / n);
            self.backward(x, &fw, dz, Some(&mut grad));
        }
        (loss / n, grad)
    }

    /// One Adam step on the cross-entropy; returns the pre-step loss.
    pub fn train_step(&mut self, xs: &[Vec<f64>], labels: &[Gender]) -> Result<f64> {
        let (loss, grad) = self.cross_entropy_grad(xs, labels);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("adversary loss is not finite".into()));
        }
        self.opt.adam_step(&mut self.params, &grad)?;
        Ok(loss)
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], labels: &[Gender]) -> f64 {
        let hits = xs
            .iter()
            .zip(labels)
            .filter(|(x, g)| {
                let p = self.probs(x);
                let pred = if p[1] > p[0] { Gender::Male } else { Gender::Female };
                pred == **g
            })
            .count();
        hits as f64 / xs.len().max(1) as f64
    }

    /// Entropy of the prediction at `x` and its gradient with respect to `x`.
    pub fn entropy_input_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let fw = self.forward(x);
        let p = fw.probs;
        let h: f64 = -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        // dH/dz_k = -p_k (ln p_k + H)
        let dz = [0, 1].map(|k| if p[k] > 0.0 { -p[k] * (p[k].ln() + h) } else { 0.0 });
        let dx = self.backward(x, &fw, dz, None);
        (h, dx)
    }
}

/// `-λ · mean_i H(adversary(feature_i))`: minimizing it pushes the backbone
/// towards features the frozen adversary cannot classify.
pub struct AdversaryObjective<'a> {
    pub adversary: &'a Adversary,
    pub lambda: f64,
}

impl FeatureObjective for AdversaryObjective<'_> {
    fn value_and_grad(&self, features: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
        let n = features.len() as f64;
        let mut mean_h = 0.0;
        let grads = features
            .iter()
            .map(|x| {
                let (h, dx) = self.adversary.entropy_input_grad(x);
                mean_h += h / n;
                dx.into_iter().map(|v| -self.lambda * v / n).collect()
            })
            .collect();
        Ok((-self.lambda * mean_h, grads))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvDiagnostics {
    pub breakdown: LossBreakdown,
    /// Adversary cross-entropy before its last update, if it ran.
    pub adversary_loss: Option<f64>,
    pub adversary_accuracy: Option<f64>,
    /// Batch-mean entropy of the adversary after its update.
    pub entropy: f64,
    /// The batch held a single gender, so the adversary phase was skipped.
    pub skipped: bool,
}

/// One alternating step: the adversary first fits gender from detached
/// penultimate features (`steps` updates), then the backbone takes an Adam
/// step on `composite − λ·H` with the adversary frozen.
pub fn adv_training_step(
    net: &mut TinyPpgNet,
    opt: &mut OptimizerState,
    adversary: &mut Adversary,
    signals: &[&[f64]],
    hr_true: &[f64],
    genders: &[Gender],
    lambda: f64,
    steps: usize,
) -> Result<AdvDiagnostics> {
    let feats: Vec<Vec<f64>> = net.predict(signals)?.into_iter().map(|(_, f)| f).collect();
    let both = genders.contains(&Gender::Female) && genders.contains(&Gender::Male);
    let mut adversary_loss = None;
    if both {
        for _ in 0..steps {
            adversary_loss = Some(adversary.train_step(&feats, genders)?);
        }
    }
    let adversary_accuracy = both.then(|| adversary.accuracy(&feats, genders));
    let probs: Vec<Vec<f64>> = feats.iter().map(|x| adversary.probs(x).to_vec()).collect();
    let entropy = adversary_entropy(&probs)?;

    let objective = AdversaryObjective { adversary, lambda };
    let obj: Option<&dyn FeatureObjective> = if lambda > 0.0 { Some(&objective) } else { None };
    let (breakdown, grad) = net.loss_and_grad(signals, hr_true, None, obj)?;
    if !breakdown.total.is_finite() {
        return Err(Error::Numerical("main-model loss is not finite".into()));
    }
    opt.adam_step(net.params_mut(), &grad)?;
    Ok(AdvDiagnostics {
        breakdown,
        adversary_loss,
        adversary_accuracy,
        entropy,
        skipped: !both,
    })
}
