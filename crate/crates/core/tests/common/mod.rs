//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use epiwarn::koopman::{loss_and_grad, KoopmanModel, LayerFile, Sample};
use epiwarn::observables::DailyRecord;
use epiwarn::pipeline::DESK_THETA_TR;
use epiwarn::rng::SimRng;
use epiwarn::SimConfig;

pub fn desk_base() -> SimConfig {
    SimConfig {
        theta_tr: DESK_THETA_TR,
        ..SimConfig::default()
    }
}

/// Compartment bookkeeping recomputed from the daily event counts.
pub fn identities_hold(records: &[DailyRecord], n: u32) -> Result<(), String> {
    let (mut s, mut i, mut r, mut d) = (n - 1, 1u32, 0u32, 0u32);
    for rec in records {
        s -= rec.new_inf;
        i = i + rec.new_inf - rec.new_rec - rec.new_dead;
        r += rec.new_rec;
        d += rec.new_dead;
        if (rec.s, rec.i, rec.r, rec.d) != (s, i, r, d) {
            return Err(format!(
                "day {}: {:?} vs expected {:?}",
                rec.day,
                (rec.s, rec.i, rec.r, rec.d),
                (s, i, r, d)
            ));
        }
        if rec.s + rec.i + rec.r + rec.d != n {
            return Err(format!("day {}: compartments do not sum to N", rec.day));
        }
        if rec.i_mob + rec.i_home != rec.i {
            return Err(format!("day {}: I_mob + I_home != I", rec.day));
        }
    }
    Ok(())
}

/// AUC by counting every (positive, negative) pair; ties count one half.
pub fn brute_auc(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

fn matvec(layer: &LayerFile, x: &[f64]) -> Vec<f64> {
    layer
        .weights
        .iter()
        .zip(&layer.bias)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

fn tanh_all(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(f64::tanh).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn apply(m: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum()).collect()
}

/// [rec, lin, pred, ar, cls, total] averaged over `batch`, evaluated from the
/// nested-array model file with explicit matrix powers.
pub fn oracle_loss(model: &KoopmanModel, batch: &[Sample], mask_padded: bool) -> [f64; 6] {
    let f = model.to_file();
    let w = f.loss_weights;
    let m = f.dims.m;
    let encode = |x: &[f64]| {
        let xn: Vec<f64> = x.iter().enumerate().map(|(i, v)| v / f.normalization[i % m]).collect();
        let h1 = tanh_all(matvec(&f.encoder[0], &xn));
        let h2 = tanh_all(matvec(&f.encoder[1], &h1));
        matvec(&f.encoder[2], &h2)
    };
    let decode = |z: &[f64]| matvec(&f.decoder[1], &tanh_all(matvec(&f.decoder[0], z)));
    let norm = |row: &[f64]| -> Vec<f64> { row.iter().zip(&f.normalization).map(|(v, c)| v / c).collect() };
    let mse = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / m as f64;

    let mut acc = [0.0; 6];
    for s in batch {
        let z = encode(&s.x);
        let rec = mse(&decode(&z), &norm(&s.current));
        let zn = encode(&s.x_next);
        let lin: f64 = apply(&f.a, &z).iter().zip(&zn).map(|(p, q)| (p - q).powi(2)).sum();

        let mut power = f.a.clone();
        let mut pred = 0.0;
        let mut active = 0;
        for (l, target) in s.future.iter().enumerate() {
            if l > 0 {
                power = matmul(&power, &f.a);
            }
            if mask_padded && !s.future_mask[l] {
                continue;
            }
            pred += mse(&decode(&apply(&power, &z)), &norm(target));
            active += 1;
        }
        if active > 0 {
            pred /= active as f64;
        }

        let pa = 1.0 / (1.0 + (-matvec(&f.attack_rate_head, &z)[0]).exp());
        let pc = 1.0 / (1.0 + (-matvec(&f.outbreak_head, &z)[0]).exp());
        let ar = (pa - s.rho).powi(2);
        let y = f64::from(s.label);
        let cls = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
        let total = w.rec * rec + w.lin * lin + w.pred * pred + w.ar * ar + w.cls * cls;
        for (a, v) in acc.iter_mut().zip([rec, lin, pred, ar, cls, total]) {
            *a += v;
        }
    }
    acc.map(|v| v / batch.len() as f64)
}

/// Largest relative error between analytic and central-difference
/// derivatives of the total loss over `n` randomly drawn parameters.
pub fn fd_gradient_check(model: &KoopmanModel, batch: &[Sample], mask_padded: bool, n: usize, seed: u64) -> (f64, Vec<(usize, f64, f64)>) {
    const STEP: f64 = 1e-5;
    let (_, grad) = loss_and_grad(model, batch, mask_padded);
    let mut rng = SimRng::from_seed(seed);
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for _ in 0..n {
        let i = rng.below(model.params.len() as u32) as usize;
        let at = |delta: f64| {
            let mut m = model.clone();
            m.params[i] += delta;
            oracle_loss(&m, batch, mask_padded)[5]
        };
        let fd = (at(STEP) - at(-STEP)) / (2.0 * STEP);
        let denom = grad[i].abs().max(fd.abs());
        let rel = if denom == 0.0 { 0.0 } else { (grad[i] - fd).abs() / denom };
        worst = worst.max(rel);
        rows.push((i, grad[i], fd));
    }
    (worst, rows)
}
