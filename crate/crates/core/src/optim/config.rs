use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Which member of the optimizer family drives the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sgd,
    Sam,
    LookSam,
    CFlat,
    Turbo,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Sgd,
        Mode::Sam,
        Mode::LookSam,
        Mode::CFlat,
        Mode::Turbo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Sgd => "sgd",
            Mode::Sam => "sam",
            Mode::LookSam => "looksam",
            Mode::CFlat => "cflat",
            Mode::Turbo => "turbo",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::UnknownOptimizer(s.to_string()))
    }
}

/// Hyperparameters shared by every optimizer in the family. Fields that a
/// given mode does not use are ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub mode: Mode,
    /// Learning rate η.
    pub lr: f64,
    /// Perturbation radius ρ.
    pub rho: f64,
    /// Finite-difference step ρ′ for the flatness gradient; `None` means ρ.
    pub rho_prime: Option<f64>,
    /// Flatness coefficient λ.
    pub lambda: f64,
    /// Surrogate scale β.
    pub beta: f64,
    /// EMA decay δ.
    pub decay: f64,
    /// Initial turbo step k₀.
    pub k0: u32,
    /// Scheduler slope c in `k_t = k₀ + c·t/N`.
    pub sched_slope: f64,
    /// Total task count N seen by the scheduler.
    pub num_tasks: u32,
    /// Trigger multiplier m. `inf` disables regularization entirely.
    #[serde(serialize_with = "ser_mult", deserialize_with = "de_mult")]
    pub trigger_mult: f64,
    pub scheduler: bool,
    pub trigger: bool,
    /// When the sharpness trigger fails, still run the flatness branch at
    /// θ_p = θ (reusing g as g₀) instead of skipping it.
    pub strict_alg1: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            mode: Mode::Turbo,
            lr: 0.05,
            rho: 0.05,
            rho_prime: None,
            lambda: 0.2,
            beta: 0.8,
            decay: 0.9,
            k0: 5,
            sched_slope: 10.0,
            num_tasks: 1,
            trigger_mult: 1.0,
            scheduler: true,
            trigger: true,
            strict_alg1: true,
        }
    }
}

impl OptimizerConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn rho_prime(&self) -> f64 {
        self.rho_prime.unwrap_or(self.rho)
    }

    /// Range-checks every field. Errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be > 0, got {v}")))
            }
        }
        fn non_negative(name: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be >= 0, got {v}")))
            }
        }
        positive("lr", self.lr)?;
        positive("rho", self.rho)?;
        if let Some(rp) = self.rho_prime {
            positive("rho_prime", rp)?;
        }
        non_negative("lambda", self.lambda)?;
        non_negative("beta", self.beta)?;
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::invalid(
                "decay",
                format!("must lie in (0, 1), got {}", self.decay),
            ));
        }
        if self.k0 < 1 {
            return Err(Error::invalid("k0", "must be at least 1"));
        }
        non_negative("sched_slope", self.sched_slope)?;
        if self.num_tasks < 1 {
            return Err(Error::invalid("num_tasks", "must be at least 1"));
        }
        if self.trigger_mult.is_nan() || self.trigger_mult < 0.0 {
            return Err(Error::invalid(
                "trigger_mult",
                format!("must be >= 0, got {}", self.trigger_mult),
            ));
        }
        Ok(())
    }
}

fn ser_mult<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_mult<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrInf {
        Num(f64),
        Text(String),
    }
    match NumOrInf::deserialize(d)? {
        NumOrInf::Num(v) => Ok(v),
        NumOrInf::Text(t) if t == "inf" => Ok(f64::INFINITY),
        NumOrInf::Text(t) => Err(serde::de::Error::custom(format!(
            "expected a number or \"inf\", got {t:?}"
        ))),
    }
}
