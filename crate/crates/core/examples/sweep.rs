//! Small susceptibility sweep; prints the attack-rate histogram that shows
//! the gap between contained runs and outbreaks.

use epiwarn::dataset::{generate_sweep, SweepSpec};
use epiwarn::pipeline::DESK_THETA_TR;
use epiwarn::SimConfig;

fn main() -> epiwarn::Result<()> {
    let base = SimConfig {
        theta_tr: DESK_THETA_TR,
        ..SimConfig::default()
    };
    let spec = SweepSpec::grid(1.3, 1.3015, 1.3025, 5, 20);
    let sweep = generate_sweep(&base, &spec)?;
    let m = &sweep.manifest;
    println!("{} runs, {} outbreaks, mid-band fraction {}", m.n_runs, m.n_outbreak, m.mid_band_fraction);

    let mut bins = [0usize; 10];
    for r in &m.runs {
        bins[((r.rho * 10.0) as usize).min(9)] += 1;
    }
    for (i, n) in bins.iter().enumerate() {
        println!("rho [{:.1}, {:.1}) {:>4} {}", i as f64 / 10.0, (i + 1) as f64 / 10.0, n, "#".repeat(*n));
    }
    for (vi, s_hi) in spec.s_hi_values.iter().enumerate() {
        let runs: Vec<_> = m.runs.iter().filter(|r| r.value_index == vi).collect();
        let out = runs.iter().filter(|r| r.label == 1).count();
        println!("s_hi {s_hi:.5}: {out}/{} outbreaks", runs.len());
    }
    Ok(())
}
