//! One desk-scale run, printed as a daily table.
//!
//!     cargo run --release --example simulate -- [seed]

use epiwarn::pipeline::DESK_THETA_TR;
use epiwarn::{run_simulation, SimConfig};

fn main() -> epiwarn::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = SimConfig {
        theta_tr: DESK_THETA_TR,
        s_lo: 1.3,
        s_hi: 1.302,
        horizon_days: 365,
        early_stop: true,
        seed,
        ..SimConfig::default()
    };
    let traj = run_simulation(&cfg, None)?;
    println!("day     S     I     R     D  new_inf");
    for r in &traj.records {
        println!("{:>3} {:>5} {:>5} {:>5} {:>5} {:>8}", r.day, r.s, r.i, r.r, r.d, r.new_inf);
    }
    let o = traj.outcome;
    println!(
        "attack rate {:.3} ({}), peak {} on day {}",
        o.attack_rate,
        if o.is_outbreak() { "outbreak" } else { "contained" },
        o.peak_infected,
        o.peak_day
    );
    Ok(())
}
