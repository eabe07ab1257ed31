use serde::{Deserialize, Serialize};

use crate::dataset::Sweep;
use crate::observables::{DailyRecord, Trajectory};
use crate::rng::SimRng;

/// One training example on the count scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub run_id: usize,
    pub end_day: u32,
    /// `k` days ending at `end_day`, day-major.
    pub x: Vec<f64>,
    /// The window shifted one day later.
    pub x_next: Vec<f64>,
    /// Observables on `end_day`.
    pub current: Vec<f64>,
    /// Observables on `end_day + 1 ..= end_day + h`.
    pub future: Vec<Vec<f64>>,
    /// `false` where `future` was padded past the last recorded day.
    pub future_mask: Vec<bool>,
    pub rho: f64,
    pub label: u8,
}

/// Record for `day`, continuing the series past its end. An extinct run
/// stays frozen with no further events; any other run repeats its final
/// record.
fn record_at(records: &[DailyRecord], day: usize) -> (DailyRecord, bool) {
    if let Some(r) = records.get(day) {
        return (*r, true);
    }
    let mut last = *records.last().expect("non-empty trajectory");
    if last.i == 0 {
        last.new_inf = 0;
        last.new_rec = 0;
        last.new_dead = 0;
        last.vl_mean = 0.0;
        last.vl_max = 0.0;
    }
    last.day = day as u32;
    (last, false)
}

/// Samples for every window of `k` days ending on a recorded day in
/// `[end_min, end_max]`, with `h` forecast targets each.
pub fn samples_from_trajectory(
    traj: &Trajectory,
    run_id: usize,
    k: usize,
    h: usize,
    end_min: u32,
    end_max: u32,
) -> Vec<Sample> {
    if k == 0 || traj.records.is_empty() {
        return Vec::new();
    }
    let last = traj.records.len() - 1;
    let lo = (end_min as usize).max(k - 1);
    let hi = (end_max as usize).min(last);
    let recs = &traj.records;
    let rows = |from: usize, to: usize| -> Vec<f64> {
        (from..=to).flat_map(|d| record_at(recs, d).0.counts()).collect()
    };
    (lo..=hi)
        .map(|e| {
            let (future, future_mask) = (1..=h)
                .map(|l| {
                    let (r, real) = record_at(recs, e + l);
                    (r.counts().to_vec(), real)
                })
                .unzip();
            Sample {
                run_id,
                end_day: e as u32,
                x: rows(e + 1 - k, e),
                x_next: rows(e + 2 - k, e + 1),
                current: recs[e].counts().to_vec(),
                future,
                future_mask,
                rho: traj.outcome.attack_rate,
                label: traj.outcome.label,
            }
        })
        .collect()
}

/// Samples for the listed runs, ordered by run id then end day.
pub fn sweep_samples(sweep: &Sweep, run_ids: &[usize], k: usize, h: usize, end_min: u32, end_max: u32) -> Vec<Sample> {
    let mut ids = run_ids.to_vec();
    ids.sort_unstable();
    ids.iter()
        .flat_map(|&id| samples_from_trajectory(&sweep.trajectories[id], id, k, h, end_min, end_max))
        .collect()
}

/// Windows from the affine system `y_{d+1} = 0.9 y_d + c` in nine
/// dimensions, started from points `y* + B u` with `u` uniform in a
/// three-dimensional box, so every trajectory stays on a three-dimensional
/// affine subspace where an exact linear latent model exists.
///
/// Returns the samples and per-column normalization constants (maximum
/// absolute value).
pub fn synthetic_linear_samples(
    n_series: usize,
    len: usize,
    k: usize,
    h: usize,
    seed: u64,
) -> (Vec<Sample>, Vec<f64>) {
    const M: usize = 9;
    let mut rng = SimRng::from_seed(seed);
    let c: Vec<f64> = (0..M).map(|j| 1.0 + 0.5 * j as f64).collect();
    let fixed: Vec<f64> = c.iter().map(|v| 10.0 * v).collect();
    let basis: Vec<[f64; 3]> = (0..M)
        .map(|_| [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)])
        .collect();
    let mut samples = Vec::new();
    let mut max_abs = vec![0.0f64; M];
    for run_id in 0..n_series {
        let u = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let mut y: Vec<f64> = (0..M)
            .map(|j| fixed[j] + 20.0 * (basis[j][0] * u[0] + basis[j][1] * u[1] + basis[j][2] * u[2]))
            .collect();
        let mut series = Vec::with_capacity(len);
        for _ in 0..len {
            series.push(y.clone());
            y = y.iter().zip(&c).map(|(v, c)| 0.9 * v + c).collect();
        }
        for row in &series {
            for (m, v) in max_abs.iter_mut().zip(row) {
                *m = m.max(v.abs());
            }
        }
        let rho = 0.5 + 0.4 * u[0];
        let label = u8::from(u[0] > 0.0);
        for e in (k - 1)..len.saturating_sub(h) {
            let flat = |from: usize, to: usize| -> Vec<f64> {
                series[from..=to].iter().flatten().copied().collect()
            };
            samples.push(Sample {
                run_id,
                end_day: e as u32,
                x: flat(e + 1 - k, e),
                x_next: flat(e + 2 - k, e + 1),
                current: series[e].clone(),
                future: (1..=h).map(|l| series[e + l].clone()).collect(),
                future_mask: vec![true; h],
                rho,
                label,
            });
        }
    }
    let scale = max_abs.iter().map(|&m| if m > 0.0 { m } else { 1.0 }).collect();
    (samples, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(days: u32, extinct: bool) -> Trajectory {
        let records = (0..days)
            .map(|d| {
                let i = if extinct && d == days - 1 { 0 } else { 1 };
                DailyRecord {
                    day: d,
                    s: 9,
                    i,
                    r: 1 - i,
                    d: 0,
                    new_inf: 0,
                    new_rec: u32::from(i == 0),
                    new_dead: 0,
                    i_mob: i,
                    i_home: 0,
                    vl_mean: 0.0,
                    vl_max: 0.0,
                }
            })
            .collect();
        Trajectory::from_records(records, 10, 0.3).unwrap()
    }

    #[test]
    fn padding_freezes_extinct_runs() {
        let t = traj(7, true);
        let s = samples_from_trajectory(&t, 0, 5, 5, 4, 12);
        assert_eq!(s.len(), 3);
        let last = &s[2];
        assert_eq!(last.end_day, 6);
        assert_eq!(last.future_mask, vec![false; 5]);
        // S, I, R, D, new_inf, new_rec, new_dead, I_mob, I_home
        assert_eq!(last.future[0], vec![9.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&last.x_next[36..45], &last.future[0][..]);
        assert_eq!(s[0].future_mask, vec![true, true, false, false, false]);
        assert_eq!(s[0].x.len(), 45);
        assert_eq!(&s[0].current[..], &s[0].x[36..45]);
    }

    #[test]
    fn synthetic_windows_follow_the_map() {
        let (s, scale) = synthetic_linear_samples(3, 20, 5, 5, 1);
        assert_eq!(s.len(), 3 * 11);
        assert_eq!(scale.len(), 9);
        let a = &s[0];
        for j in 0..9 {
            let c = 1.0 + 0.5 * j as f64;
            assert!((a.future[0][j] - (0.9 * a.current[j] + c)).abs() < 1e-9);
        }
    }
}
