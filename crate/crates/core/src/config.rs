//! Simulator parameters.

use serde::{Deserialize, Serialize};

use crate::curves::CurveConfig;
use crate::error::{Error, Result};

/// Immunity category, ordered from strongest to weakest response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Immunity {
    Strong,
    Medium,
    Low,
    Compromised,
}

impl Immunity {
    pub const ALL: [Immunity; 4] = [
        Immunity::Strong,
        Immunity::Medium,
        Immunity::Low,
        Immunity::Compromised,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Immunity::Strong => "strong",
            Immunity::Medium => "medium",
            Immunity::Low => "low",
            Immunity::Compromised => "compromised",
        }
    }
}

impl std::str::FromStr for Immunity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Immunity::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_agents: usize,
    /// Side length of the square grid, in cells.
    pub grid_size: usize,
    pub n_homes: usize,
    /// Distinct grid cells in each routine.
    pub routine_len: usize,
    pub day_steps: usize,
    pub night_steps: usize,
    pub horizon_days: usize,
    /// Exposure threshold; infection needs `load * susceptibility` strictly above it.
    /// Serialized as the string `"inf"` when infinite.
    #[serde(with = "extended_f64")]
    pub theta_tr: f64,
    pub rho_c: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    /// Probabilities for strong, medium, low, compromised.
    pub immunity_probs: [f64; 4],
    pub symptom_thr: f64,
    pub homebound_thr: f64,
    pub death_thr: f64,
    pub recovery_thr: f64,
    pub home_transmission: bool,
    pub early_stop: bool,
    pub seed: u64,
    pub curves: CurveConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_agents: 500,
            grid_size: 50,
            n_homes: 200,
            routine_len: 10,
            day_steps: 10,
            night_steps: 10,
            horizon_days: 60,
            theta_tr: 50.0,
            rho_c: 0.3,
            s_lo: 0.5,
            s_hi: 1.5,
            immunity_probs: [0.35, 0.45, 0.15, 0.05],
            symptom_thr: 10.0,
            homebound_thr: 50.0,
            death_thr: 100.0,
            recovery_thr: 1.0,
            home_transmission: false,
            early_stop: false,
            seed: 0,
            curves: CurveConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn steps_per_day(&self) -> usize {
        self.day_steps + self.night_steps
    }

    pub fn n_cells(&self) -> usize {
        self.grid_size * self.grid_size
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |f: &str, r: &str| Err(Error::config(f, r));
        if self.n_agents == 0 {
            return fail("n_agents", "must be at least 1");
        }
        if self.n_agents > u32::MAX as usize {
            return fail("n_agents", "too large");
        }
        if self.grid_size == 0 {
            return fail("grid_size", "must be at least 1");
        }
        if self.n_homes == 0 {
            return fail("n_homes", "must be at least 1");
        }
        if self.routine_len == 0 {
            return fail("routine_len", "must be at least 1");
        }
        if self.routine_len > self.n_cells() {
            return fail(
                "routine_len",
                &format!(
                    "cannot draw {} distinct cells from a {}x{} grid",
                    self.routine_len, self.grid_size, self.grid_size
                ),
            );
        }
        if self.day_steps == 0 {
            return fail("day_steps", "must be at least 1");
        }
        if self.night_steps == 0 {
            return fail("night_steps", "must be at least 1");
        }
        if self.horizon_days == 0 {
            return fail("horizon_days", "must be at least 1");
        }
        if self.theta_tr.is_nan() || self.theta_tr < 0.0 {
            return fail("theta_tr", "must be non-negative (may be infinite)");
        }
        if !(self.rho_c > 0.0 && self.rho_c < 1.0) {
            return fail("rho_c", "must lie in (0, 1)");
        }
        if !(self.s_lo.is_finite() && self.s_hi.is_finite()) || self.s_lo <= 0.0 {
            return fail("s_lo", "must be finite and positive");
        }
        if self.s_lo > self.s_hi {
            return fail("s_hi", "must be >= s_lo");
        }
        if self.immunity_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("immunity_probs", "each probability must lie in [0, 1]");
        }
        let total: f64 = self.immunity_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return fail("immunity_probs", &format!("must sum to 1, got {total}"));
        }
        let ordered = self.recovery_thr < self.symptom_thr
            && self.symptom_thr < self.homebound_thr
            && self.homebound_thr < self.death_thr;
        if !ordered {
            return fail(
                "thresholds",
                "require recovery_thr < symptom_thr < homebound_thr < death_thr",
            );
        }
        self.curves.validate()
    }
}

/// Serde adapter that writes non-finite floats as strings (`"inf"`, `"-inf"`, `"nan"`).
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = SimConfig::default();
        c.routine_len = 2501;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "routine_len"),
            other => panic!("unexpected {other:?}"),
        }

        let mut c = SimConfig::default();
        c.immunity_probs = [0.4, 0.45, 0.15, 0.05];
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "immunity_probs"),
            other => panic!("unexpected {other:?}"),
        }

        let mut c = SimConfig::default();
        c.homebound_thr = 120.0;
        assert!(c.validate().is_err());

        let mut c = SimConfig::default();
        c.s_lo = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn infinite_threshold_round_trips_through_json() {
        let c = SimConfig {
            theta_tr: f64::INFINITY,
            ..SimConfig::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"theta_tr\":\"inf\""));
        let back: SimConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn category_names_parse() {
        assert_eq!("low".parse::<Immunity>().unwrap(), Immunity::Low);
        assert!(matches!(
            "weak".parse::<Immunity>(),
            Err(Error::UnknownCategory(_))
        ));
    }
}
