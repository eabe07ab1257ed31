//! Daily aggregate observables, final outcomes and the trajectory CSV format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::population::{Agent, DiseaseState};

/// Count observables fed to the learning models, in column order.
pub const COUNT_COLUMNS: [&str; 9] = [
    "S", "I", "R", "D", "new_inf", "new_rec", "new_dead", "I_mob", "I_home",
];

pub const CSV_HEADER: &str = "day,S,I,R,D,new_inf,new_rec,new_dead,I_mob,I_home,vl_mean,vl_max";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub day: u32,
    pub s: u32,
    pub i: u32,
    pub r: u32,
    pub d: u32,
    pub new_inf: u32,
    pub new_rec: u32,
    pub new_dead: u32,
    pub i_mob: u32,
    pub i_home: u32,
    pub vl_mean: f64,
    pub vl_max: f64,
}

impl DailyRecord {
    pub fn counts(&self) -> [f64; 9] {
        [
            self.s, self.i, self.r, self.d, self.new_inf, self.new_rec, self.new_dead, self.i_mob,
            self.i_home,
        ]
        .map(f64::from)
    }

    fn csv_row(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6}",
            self.day,
            self.s,
            self.i,
            self.r,
            self.d,
            self.new_inf,
            self.new_rec,
            self.new_dead,
            self.i_mob,
            self.i_home,
            self.vl_mean,
            self.vl_max
        );
    }
}

/// Events counted during one day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DayEvents {
    pub new_inf: u32,
    pub new_rec: u32,
    pub new_dead: u32,
}

/// Builds a day's record from its events and the end-of-day agent states.
/// `loads[i]` is agent `i`'s load at the day's final step.
pub fn aggregate_day(
    day: u32,
    events: DayEvents,
    agents: &[Agent],
    loads: &[f64],
    config: &SimConfig,
) -> DailyRecord {
    let mut rec = DailyRecord {
        day,
        s: 0,
        i: 0,
        r: 0,
        d: 0,
        new_inf: events.new_inf,
        new_rec: events.new_rec,
        new_dead: events.new_dead,
        i_mob: 0,
        i_home: 0,
        vl_mean: 0.0,
        vl_max: 0.0,
    };
    let mut load_sum = 0.0;
    for (a, &v) in agents.iter().zip(loads) {
        match a.state {
            DiseaseState::S => rec.s += 1,
            DiseaseState::R => rec.r += 1,
            DiseaseState::D => rec.d += 1,
            DiseaseState::I => {
                rec.i += 1;
                if v > config.homebound_thr {
                    rec.i_home += 1;
                } else {
                    rec.i_mob += 1;
                }
                load_sum += v;
                rec.vl_max = rec.vl_max.max(v);
            }
        }
    }
    if rec.i > 0 {
        rec.vl_mean = load_sum / f64::from(rec.i);
    }
    rec
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub attack_rate: f64,
    pub label: u8,
    pub peak_infected: u32,
    pub peak_day: u32,
    pub final_s: u32,
    pub final_i: u32,
    pub final_r: u32,
    pub final_d: u32,
    pub incidence_peak: u32,
    pub cumulative_infections: u32,
}

impl Outcome {
    pub fn is_outbreak(&self) -> bool {
        self.label == 1
    }
}

pub fn attack_rate(n_agents: usize, final_s: u32) -> f64 {
    (n_agents as f64 - f64::from(final_s)) / n_agents as f64
}

/// Final outcome of a record series; argmax ties go to the earliest day.
pub fn compute_outcome(records: &[DailyRecord], n_agents: usize, rho_c: f64) -> Result<Outcome> {
    let last = records
        .last()
        .ok_or_else(|| Error::Empty("trajectory has no recorded days".into()))?;
    let mut peak = records[0];
    for r in records {
        if r.i > peak.i {
            peak = *r;
        }
    }
    let rho = attack_rate(n_agents, last.s);
    Ok(Outcome {
        attack_rate: rho,
        label: u8::from(rho >= rho_c),
        peak_infected: peak.i,
        peak_day: peak.day,
        final_s: last.s,
        final_i: last.i,
        final_r: last.r,
        final_d: last.d,
        incidence_peak: records.iter().map(|r| r.new_inf).max().unwrap_or(0),
        cumulative_infections: records.iter().map(|r| r.new_inf).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n_agents: usize,
    pub records: Vec<DailyRecord>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn from_records(records: Vec<DailyRecord>, n_agents: usize, rho_c: f64) -> Result<Self> {
        let outcome = compute_outcome(&records, n_agents, rho_c)?;
        Ok(Self {
            n_agents,
            records,
            outcome,
        })
    }

    pub fn infected_series(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.i).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            r.csv_row(&mut out);
        }
        out
    }

    /// Writes the CSV, creating missing parent directories.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::dataset::write_file(path, &self.to_csv_string())
    }

    /// Reads a trajectory CSV; the population size is recovered from the first row.
    pub fn read_csv(path: &Path, rho_c: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::parse_csv(&text, rho_c, &path.display().to_string())
    }

    pub fn parse_csv(text: &str, rho_c: f64, context: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != CSV_HEADER {
            return Err(Error::parse(context, "unexpected trajectory header"));
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let int = |i: usize| -> Result<u32> {
                row[i]
                    .parse::<u32>()
                    .map_err(|e| Error::parse(context, format!("column {}: {e}", i)))
            };
            let float = |i: usize| -> Result<f64> {
                row[i]
                    .parse::<f64>()
                    .map_err(|e| Error::parse(context, format!("column {}: {e}", i)))
            };
            records.push(DailyRecord {
                day: int(0)?,
                s: int(1)?,
                i: int(2)?,
                r: int(3)?,
                d: int(4)?,
                new_inf: int(5)?,
                new_rec: int(6)?,
                new_dead: int(7)?,
                i_mob: int(8)?,
                i_home: int(9)?,
                vl_mean: float(10)?,
                vl_max: float(11)?,
            });
        }
        let first = records
            .first()
            .ok_or_else(|| Error::parse(context, "no rows"))?;
        let n = (first.s + first.i + first.r + first.d) as usize;
        Self::from_records(records, n, rho_c)
    }
}

/// Checks the population and flow identities of a record series.
/// Returns a description of the first violation.
pub fn check_identities(records: &[DailyRecord], n_agents: usize) -> std::result::Result<(), String> {
    let n = n_agents as i64;
    let mut prev: Option<&DailyRecord> = None;
    for r in records {
        let (s, i, rr, d) = (r.s as i64, r.i as i64, r.r as i64, r.d as i64);
        if s + i + rr + d != n {
            return Err(format!("day {}: S+I+R+D = {} != {}", r.day, s + i + rr + d, n));
        }
        if r.i_mob + r.i_home != r.i {
            return Err(format!("day {}: I_mob + I_home != I", r.day));
        }
        if let Some(p) = prev {
            let (ni, nr, nd) = (r.new_inf as i64, r.new_rec as i64, r.new_dead as i64);
            if s != p.s as i64 - ni {
                return Err(format!("day {}: S identity", r.day));
            }
            if rr != p.r as i64 + nr {
                return Err(format!("day {}: R identity", r.day));
            }
            if d != p.d as i64 + nd {
                return Err(format!("day {}: D identity", r.day));
            }
            if i != p.i as i64 + ni - nr - nd {
                return Err(format!("day {}: I identity", r.day));
            }
        }
        prev = Some(r);
    }
    Ok(())
}
