//! Fit the Koopman autoencoder to a linear toy system, then forecast.

use epiwarn::koopman::{forecast_mse_ratio, synthetic_linear_samples, train, KoopmanConfig};

fn main() -> epiwarn::Result<()> {
    let cfg = KoopmanConfig {
        epochs: 60,
        ..KoopmanConfig::default()
    };
    let (all, scale) = synthetic_linear_samples(60, 30, cfg.k, cfg.horizon, 3);
    let (tr, rest): (Vec<_>, Vec<_>) = all.into_iter().partition(|s| s.run_id < 40);
    let (va, te): (Vec<_>, Vec<_>) = rest.into_iter().partition(|s| s.run_id < 50);

    let (model, report) = train(&tr, &va, &cfg, scale)?;
    for e in report.epochs.iter().step_by(10) {
        println!("epoch {:>3}  train {:.5}  val {:.5}", e.epoch, e.train.total, e.val.total);
    }
    println!("selected epoch {}", report.selected_epoch);
    println!("test forecast MSE / variance = {:.4}", forecast_mse_ratio(&model, &te)?);

    let s = &te[0];
    let fc = model.forecast(&s.x, cfg.horizon)?;
    for (l, (f, y)) in fc.iter().zip(&s.future).enumerate() {
        println!("t+{}: forecast {:>8.3}  true {:>8.3}", l + 1, f[1], y[1]);
    }
    Ok(())
}
