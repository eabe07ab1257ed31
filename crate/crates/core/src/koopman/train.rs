use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::loss::{compute_loss, loss_and_grad, LossTerms};
use super::model::{Dims, KoopmanModel, LossWeights};
use super::Sample;
use crate::earlywarn::metrics::{compute_metrics, Metrics};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KoopmanConfig {
    pub k: usize,
    pub horizon: usize,
    pub latent: usize,
    pub hidden: usize,
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Drop padded forecast days from the prediction loss.
    pub mask_padded: bool,
    pub end_day_min: u32,
    pub end_day_max: u32,
}

impl Default for KoopmanConfig {
    fn default() -> Self {
        Self {
            k: 5,
            horizon: 5,
            latent: 6,
            hidden: 64,
            weights: LossWeights::default(),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 100,
            seed: 7,
            mask_padded: false,
            end_day_min: 4,
            end_day_max: 12,
        }
    }
}

impl KoopmanConfig {
    pub fn dims(&self, m: usize) -> Dims {
        Dims {
            k: self.k,
            m,
            hidden: self.hidden,
            latent: self.latent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::config(format!("koopman.{f}"), r));
        if self.k == 0 {
            return bad("k", "must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if self.latent == 0 || self.hidden == 0 {
            return bad("latent", "layer widths must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1", "moment decay rates must lie in [0, 1)");
        }
        if self.end_day_min > self.end_day_max {
            return bad("end_day_min", "must not exceed end_day_max");
        }
        let w = self.weights;
        if [w.rec, w.lin, w.pred, w.ar, w.cls].iter().any(|v| !(*v >= 0.0)) {
            return bad("weights", "loss weights must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train: LossTerms,
    pub val: LossTerms,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub selected_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainReport {
    pub fn initial(&self) -> &EpochStats {
        &self.epochs[0]
    }

    pub fn selected(&self) -> &EpochStats {
        &self.epochs[self.selected_epoch]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,train_total,train_pred,train_lin,train_rec,train_ar,train_cls,train_acc,\
             val_total,val_pred,val_lin,val_rec,val_ar,val_cls,val_acc\n",
        );
        for e in &self.epochs {
            let t = &e.train;
            let v = &e.val;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                e.epoch, t.total, t.pred, t.lin, t.rec, t.ar, t.cls, e.train_accuracy,
                v.total, v.pred, v.lin, v.rec, v.ar, v.cls, e.val_accuracy
            ));
        }
        out
    }
}

fn accuracy(model: &KoopmanModel, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| {
            let p = model.outbreak_probability(&s.x).unwrap_or(0.5);
            u8::from(p >= 0.5) == s.label
        })
        .count();
    hits as f64 / samples.len() as f64
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &KoopmanConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// Mini-batch Adam over `train_set`. The returned model is the snapshot with
/// the lowest validation total (epoch 0, the initialization, included).
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &KoopmanConfig,
    scale: Vec<f64>,
) -> Result<(KoopmanModel, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("koopman training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("koopman validation set".into()));
    }
    let m = train_set[0].current.len();
    let dims = cfg.dims(m);
    for s in train_set.iter().chain(val_set) {
        if s.x.len() != dims.input() || s.x_next.len() != dims.input() {
            return Err(Error::Shape {
                expected: dims.input(),
                got: s.x.len(),
            });
        }
        if s.future.len() != cfg.horizon {
            return Err(Error::Shape {
                expected: cfg.horizon,
                got: s.future.len(),
            });
        }
    }
    let mut model = KoopmanModel::init(dims, cfg.horizon, cfg.weights, scale, derive_seed(cfg.seed, &[0]))?;

    let evaluate = |model: &KoopmanModel, epoch: usize| -> Result<EpochStats> {
        let stats = EpochStats {
            epoch,
            train: compute_loss(model, train_set, cfg.mask_padded),
            val: compute_loss(model, val_set, cfg.mask_padded),
            train_accuracy: accuracy(model, train_set),
            val_accuracy: accuracy(model, val_set),
        };
        if !stats.train.is_finite() || !stats.val.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        Ok(stats)
    };

    let mut epochs = vec![evaluate(&model, 0)?];
    let mut best = (epochs[0].val.total, 0usize, model.params.clone());
    let mut adam = Adam {
        m: vec![0.0; model.params.len()],
        v: vec![0.0; model.params.len()],
        t: 0,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        SimRng::from_seed(derive_seed(cfg.seed, &[1, epoch as u64])).shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let (terms, grad) = loss_and_grad(&model, &batch, cfg.mask_padded);
            if !terms.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            adam.step(&mut model.params, &grad, cfg);
        }
        let stats = evaluate(&model, epoch)?;
        if stats.val.total < best.0 {
            best = (stats.val.total, epoch, model.params.clone());
        }
        epochs.push(stats);
    }
    model.params = best.2;
    let report = TrainReport {
        epochs,
        selected_epoch: best.1,
        n_train: train_set.len(),
        n_val: val_set.len(),
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanEval {
    pub window: Metrics,
    /// One unit per run, scored by its latest window.
    pub run: Metrics,
}

/// Outbreak-head metrics per window and per run; a run is scored by the
/// probability of its last early window.
pub fn evaluate_koopman(model: &KoopmanModel, samples: &[Sample], threshold: f64) -> Result<KoopmanEval> {
    if samples.is_empty() {
        return Err(Error::Empty("no windows to evaluate".into()));
    }
    let probs = samples
        .iter()
        .map(|s| model.outbreak_probability(&s.x))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let mut last: BTreeMap<usize, (u32, usize)> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let e = last.entry(s.run_id).or_insert((s.end_day, i));
        if s.end_day >= e.0 {
            *e = (s.end_day, i);
        }
    }
    let run_labels: Vec<u8> = last.values().map(|&(_, i)| labels[i]).collect();
    let run_probs: Vec<f64> = last.values().map(|&(_, i)| probs[i]).collect();
    Ok(KoopmanEval {
        window: compute_metrics(&labels, &probs, threshold)?,
        run: compute_metrics(&run_labels, &run_probs, threshold)?,
    })
}

/// Forecast error relative to target spread: the sum over observables of
/// forecast MSE divided by the sum over observables of target variance.
pub fn forecast_mse_ratio(model: &KoopmanModel, samples: &[Sample]) -> Result<f64> {
    let m = model.dims.m;
    let mut sse = vec![0.0; m];
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut n = 0usize;
    for s in samples {
        let fc = model.forecast(&s.x, s.future.len())?;
        for (pred, target) in fc.iter().zip(&s.future) {
            n += 1;
            for j in 0..m {
                let e = pred[j] - target[j];
                sse[j] += e * e;
                sum[j] += target[j];
                sum_sq[j] += target[j] * target[j];
            }
        }
    }
    if n == 0 {
        return Err(Error::Empty("no forecast targets".into()));
    }
    let nf = n as f64;
    let mse: f64 = sse.iter().map(|v| v / nf).sum();
    let var: f64 = (0..m)
        .map(|j| (sum_sq[j] / nf - (sum[j] / nf).powi(2)).max(0.0))
        .sum();
    Ok(mse / var)
}
