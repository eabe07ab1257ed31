//! Training objective and its gradient.
//!
//! Per sample, on the normalized scale:
//! - reconstruction: mean over observables of `(decode(z) - y_d)^2`
//! - linearity: squared norm of `encode(next window) - A z`
//! - prediction: mean over forecast days and observables of
//!   `(decode(A^l z) - y_{d+l})^2`
//! - attack rate: `(sigmoid(head_a(z)) - rho)^2`
//! - classification: binary cross-entropy of `sigmoid(head_c(z))` against the label
//!
//! Batch terms are sample means; the total is the weighted sum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{sigmoid, Dense, KoopmanModel};
use super::Sample;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub rec: f64,
    pub lin: f64,
    pub pred: f64,
    pub ar: f64,
    pub cls: f64,
    pub total: f64,
}

impl LossTerms {
    fn add(&mut self, o: &LossTerms) {
        self.rec += o.rec;
        self.lin += o.lin;
        self.pred += o.pred;
        self.ar += o.ar;
        self.cls += o.cls;
        self.total += o.total;
    }

    fn scaled(mut self, f: f64) -> Self {
        self.rec *= f;
        self.lin *= f;
        self.pred *= f;
        self.ar *= f;
        self.cls *= f;
        self.total *= f;
        self
    }

    pub fn is_finite(&self) -> bool {
        [self.rec, self.lin, self.pred, self.ar, self.cls, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Cross-entropy of `sigmoid(logit)` against `y`, computed from the logit.
pub fn bce_with_logit(logit: f64, y: f64) -> f64 {
    softplus(logit) - y * logit
}

struct EncCache {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    z: Vec<f64>,
}

struct DecCache {
    z: Vec<f64>,
    g: Vec<f64>,
    y: Vec<f64>,
}

fn tanh_layer(l: Dense, p: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(l.n_out);
    l.forward(p, x, &mut out);
    out.iter_mut().for_each(|v| *v = v.tanh());
    out
}

fn encode(model: &KoopmanModel, x: Vec<f64>) -> EncCache {
    let p = &model.params;
    let [e1, e2, e3] = model.layout.enc;
    let h1 = tanh_layer(e1, p, &x);
    let h2 = tanh_layer(e2, p, &h1);
    let mut z = Vec::new();
    e3.forward(p, &h2, &mut z);
    EncCache { x, h1, h2, z }
}

fn encode_backward(model: &KoopmanModel, c: &EncCache, gz: &[f64], grad: &mut [f64]) {
    let p = &model.params;
    let [e1, e2, e3] = model.layout.enc;
    let gh2 = e3.backward(p, grad, &c.h2, gz);
    let ga2: Vec<f64> = gh2.iter().zip(&c.h2).map(|(g, h)| g * (1.0 - h * h)).collect();
    let gh1 = e2.backward(p, grad, &c.h1, &ga2);
    let ga1: Vec<f64> = gh1.iter().zip(&c.h1).map(|(g, h)| g * (1.0 - h * h)).collect();
    e1.backward(p, grad, &c.x, &ga1);
}

fn decode(model: &KoopmanModel, z: Vec<f64>) -> DecCache {
    let p = &model.params;
    let [d1, d2] = model.layout.dec;
    let g = tanh_layer(d1, p, &z);
    let mut y = Vec::new();
    d2.forward(p, &g, &mut y);
    DecCache { z, g, y }
}

fn decode_backward(model: &KoopmanModel, c: &DecCache, gy: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let p = &model.params;
    let [d1, d2] = model.layout.dec;
    let gg = d2.backward(p, grad, &c.g, gy);
    let ga: Vec<f64> = gg.iter().zip(&c.g).map(|(g, h)| g * (1.0 - h * h)).collect();
    d1.backward(p, grad, &c.z, &ga)
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Loss terms of one sample; when `grad` is given, adds the gradient of the
/// weighted total.
fn sample_loss(model: &KoopmanModel, s: &Sample, mask_padded: bool, grad: Option<&mut [f64]>) -> LossTerms {
    let w = model.weights;
    let m = model.dims.m as f64;
    let r = model.dims.latent;
    let a = model.a_matrix();

    let enc = encode(model, model.normalize_window(&s.x));
    let enc_next = encode(model, model.normalize_window(&s.x_next));
    let z = &enc.z;
    let norm_row = |row: &[f64]| -> Vec<f64> { row.iter().zip(&model.scale).map(|(v, c)| v / c).collect() };

    let rec_cache = decode(model, z.clone());
    let y0 = norm_row(&s.current);
    let rec = sq_err(&rec_cache.y, &y0) / m;

    let az = model.apply_a(z);
    let diff: Vec<f64> = enc_next.z.iter().zip(&az).map(|(n, p)| n - p).collect();
    let lin: f64 = diff.iter().map(|d| d * d).sum();

    // Latent path z_0 = z, z_l = A z_{l-1}.
    let h = s.future.len();
    let mut path = Vec::with_capacity(h + 1);
    path.push(z.clone());
    let mut pred_caches = Vec::with_capacity(h);
    let active: Vec<bool> = (0..h)
        .map(|l| !mask_padded || s.future_mask.get(l).copied().unwrap_or(true))
        .collect();
    let n_active = active.iter().filter(|&&b| b).count();
    let mut pred = 0.0;
    let mut targets = Vec::with_capacity(h);
    for l in 0..h {
        let next = model.apply_a(&path[l]);
        path.push(next.clone());
        let dc = decode(model, next);
        let t = norm_row(&s.future[l]);
        if active[l] {
            pred += sq_err(&dc.y, &t) / m;
        }
        targets.push(t);
        pred_caches.push(dc);
    }
    if n_active > 0 {
        pred /= n_active as f64;
    }

    let (la, lc) = model.head_logits(z);
    let pa = sigmoid(la);
    let ar = (pa - s.rho) * (pa - s.rho);
    let y = f64::from(s.label);
    let cls = bce_with_logit(lc, y);

    let total = w.rec * rec + w.lin * lin + w.pred * pred + w.ar * ar + w.cls * cls;
    let terms = LossTerms {
        rec,
        lin,
        pred,
        ar,
        cls,
        total,
    };

    let Some(grad) = grad else {
        return terms;
    };
    let p = &model.params;
    let a_off = model.layout.a;

    // Reconstruction.
    let gy: Vec<f64> = rec_cache
        .y
        .iter()
        .zip(&y0)
        .map(|(o, t)| w.rec * 2.0 * (o - t) / m)
        .collect();
    let mut gz = decode_backward(model, &rec_cache, &gy, grad);

    // Prediction, back through the powers of A.
    if n_active > 0 {
        let mut acc = vec![0.0; r];
        for l in (0..h).rev() {
            if active[l] {
                let c = &pred_caches[l];
                let gy: Vec<f64> = c
                    .y
                    .iter()
                    .zip(&targets[l])
                    .map(|(o, t)| w.pred * 2.0 * (o - t) / (m * n_active as f64))
                    .collect();
                let g = decode_backward(model, c, &gy, grad);
                acc.iter_mut().zip(&g).for_each(|(a, g)| *a += g);
            }
            // acc is dL/dz_{l+1}; z_{l+1} = A z_l.
            let prev = &path[l];
            for i in 0..r {
                for j in 0..r {
                    grad[a_off + i * r + j] += acc[i] * prev[j];
                }
            }
            let mut back = vec![0.0; r];
            for i in 0..r {
                for j in 0..r {
                    back[j] += a[i * r + j] * acc[i];
                }
            }
            acc = back;
        }
        gz.iter_mut().zip(&acc).for_each(|(g, a)| *g += a);
    }

    // Linearity.
    let gd: Vec<f64> = diff.iter().map(|d| w.lin * 2.0 * d).collect();
    for i in 0..r {
        for j in 0..r {
            grad[a_off + i * r + j] -= gd[i] * z[j];
            gz[j] -= a[i * r + j] * gd[i];
        }
    }
    encode_backward(model, &enc_next, &gd, grad);

    // Heads.
    let gla = w.ar * 2.0 * (pa - s.rho) * pa * (1.0 - pa);
    let glc = w.cls * (sigmoid(lc) - y);
    let g_head = model.layout.ar_head.backward(p, grad, z, &[gla]);
    gz.iter_mut().zip(&g_head).for_each(|(g, h)| *g += h);
    let g_head = model.layout.cls_head.backward(p, grad, z, &[glc]);
    gz.iter_mut().zip(&g_head).for_each(|(g, h)| *g += h);

    encode_backward(model, &enc, &gz, grad);
    terms
}

/// Mean loss terms over `batch`.
pub fn compute_loss(model: &KoopmanModel, batch: &[Sample], mask_padded: bool) -> LossTerms {
    let partial: Vec<LossTerms> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut t = LossTerms::default();
            for s in chunk {
                t.add(&sample_loss(model, s, mask_padded, None));
            }
            t
        })
        .collect();
    let mut acc = LossTerms::default();
    for t in &partial {
        acc.add(t);
    }
    acc.scaled(1.0 / batch.len().max(1) as f64)
}

/// Samples per gradient chunk. Chunks are evaluated in parallel and summed in
/// chunk order, so results do not depend on the thread count.
const CHUNK: usize = 8;

/// Mean loss terms and the gradient of the mean total.
pub fn loss_and_grad(model: &KoopmanModel, batch: &[Sample], mask_padded: bool) -> (LossTerms, Vec<f64>) {
    let n_params = model.params.len();
    let partial: Vec<(LossTerms, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n_params];
            let mut t = LossTerms::default();
            for s in chunk {
                t.add(&sample_loss(model, s, mask_padded, Some(&mut g)));
            }
            (t, g)
        })
        .collect();
    let mut terms = LossTerms::default();
    let mut grad = vec![0.0; n_params];
    for (t, g) in &partial {
        terms.add(t);
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / batch.len().max(1) as f64;
    grad.iter_mut().for_each(|v| *v *= inv);
    (terms.scaled(inv), grad)
}
