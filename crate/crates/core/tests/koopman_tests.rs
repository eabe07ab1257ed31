mod common;

use common::{desk_base, fd_gradient_check, oracle_loss};
use epiwarn::dataset::SweepSpec;
use epiwarn::koopman::{compute_loss, samples_from_trajectory, train, Dims, KoopmanConfig, KoopmanModel, LossWeights, Sample};
use epiwarn::koopman::synthetic_linear_samples;
use epiwarn::pipeline::count_scale;
use epiwarn::rng::SimRng;
use epiwarn::run_simulation;

/// Windows from a few desk runs, including an extinct one whose forecast
/// targets run past its last recorded day.
fn desk_samples() -> Vec<Sample> {
    let spec = SweepSpec::default();
    let mut out = Vec::new();
    for si in 0..6 {
        let t = run_simulation(&spec.run_config(&desk_base(), 0, si), None).unwrap();
        out.extend(samples_from_trajectory(&t, si, 5, 5, 4, 12));
    }
    assert!(out.iter().any(|s| s.future_mask.contains(&false)), "no padded sample");
    assert!(out.iter().any(|s| s.label == 1) && out.iter().any(|s| s.label == 0));
    out
}

fn model(seed: u64) -> KoopmanModel {
    let mut m = KoopmanModel::init(Dims::default(), 5, LossWeights::default(), count_scale(500), seed).unwrap();
    // Move away from the symmetric initialization so every term is active.
    let mut rng = SimRng::from_seed(seed ^ 0xabc);
    for p in &mut m.params {
        *p += rng.uniform(-0.05, 0.05);
    }
    m
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn loss_matches_the_matrix_oracle() {
    let samples = desk_samples();
    for seed in [1, 2] {
        let m = model(seed);
        for mask in [false, true] {
            let t = compute_loss(&m, &samples, mask);
            let o = oracle_loss(&m, &samples, mask);
            let got = [t.rec, t.lin, t.pred, t.ar, t.cls, t.total];
            for (k, (g, e)) in got.iter().zip(o).enumerate() {
                assert!(close(*g, e), "term {k}: {g} vs {e}");
            }
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    // Synthetic windows keep every input column away from zero.
    let (syn, scale) = synthetic_linear_samples(4, 16, 5, 5, 21);
    let syn: Vec<Sample> = syn.into_iter().step_by(5).collect();
    let m = KoopmanModel {
        scale,
        ..model(10)
    };
    for (mask, seed) in [(false, 11), (true, 12)] {
        let (worst, rows) = fd_gradient_check(&m, &syn, mask, 40, seed);
        assert!(worst < 1e-4, "max relative error {worst}: {rows:?}");
    }
}

#[test]
fn gradient_on_desk_windows() {
    // Inputs such as daily deaths are mostly zero here, so some gradients are
    // ~1e-8 and the difference quotient's own roundoff (~1e-12) matters.
    let samples: Vec<Sample> = desk_samples().into_iter().step_by(3).collect();
    for (mask, seed) in [(false, 11), (true, 12)] {
        let (_, rows) = fd_gradient_check(&model(seed), &samples, mask, 40, seed);
        for (i, a, f) in rows {
            assert!((a - f).abs() <= 1e-4 * a.abs().max(f.abs()) + 1e-10, "param {i}: {a} vs {f}");
        }
    }
}

#[test]
fn advance_composes() {
    let m = model(4);
    let mut rng = SimRng::from_seed(9);
    let z: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
    for (a, b) in [(0, 3), (2, 2), (1, 4)] {
        let lhs = m.advance(&z, a + b);
        let rhs = m.advance(&m.advance(&z, a), b);
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    assert_eq!(m.advance(&z, 0), z);
}

#[test]
fn forecast_decodes_successive_powers() {
    let m = model(5);
    let s = &desk_samples()[0];
    let fc = m.forecast(&s.x, 3).unwrap();
    let z = m.encode(&s.x).unwrap();
    for (l, row) in fc.iter().enumerate() {
        let manual = m.denormalize_row(&m.decode_normalized(&m.advance(&z, l + 1)));
        assert_eq!(row, &manual);
    }
}

#[test]
fn training_is_reproducible_and_file_exact() {
    let samples = desk_samples();
    let (tr, va): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.run_id < 4);
    let cfg = KoopmanConfig {
        epochs: 3,
        batch_size: 16,
        ..KoopmanConfig::default()
    };
    let (a, ra) = train(&tr, &va, &cfg, count_scale(500)).unwrap();
    let (b, rb) = train(&tr, &va, &cfg, count_scale(500)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(ra, rb);
    assert_eq!(ra.epochs.len(), 4);
    let json = a.to_json().unwrap();
    let back = KoopmanModel::from_json(&json).unwrap();
    assert_eq!(back.params, a.params);
    assert_eq!(back.to_json().unwrap(), json);
}
