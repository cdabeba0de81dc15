//! Experiment configuration in engineering units.
//!
//! The file is flat TOML: every key is a field of [`ExperimentConfig`] and
//! unknown keys are rejected. Powers are in dBm, thresholds in microwatts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use swipt_core::{NetworkScenario, UtilityKind};

use crate::experiment::Method;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    EnergyRegion,
    Solve,
    Tradeoff,
    Convergence,
    Compare,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::EnergyRegion => "energy-region",
            Mode::Solve => "solve",
            Mode::Tradeoff => "tradeoff",
            Mode::Convergence => "convergence",
            Mode::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Utility {
    #[default]
    Wsr,
    Pf,
    Hmr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Common energy threshold of every energy user, in microwatts.
    ETh,
    /// Common interference threshold of every primary receiver, in microwatts.
    ITh,
    /// Transmit power in dBm.
    PT,
    /// Number of information users.
    KI,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::ETh => "e_th",
            SweepAxis::ITh => "i_th",
            SweepAxis::PT => "p_t",
            SweepAxis::KI => "k_i",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional here; the CLI subcommand supplies it otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::n_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub utility: Utility,
    /// Random starting points of the multi-user solver.
    #[serde(default = "defaults::n_g")]
    pub n_g: usize,

    pub m: usize,
    #[serde(default = "defaults::one")]
    pub k_i: usize,
    #[serde(default)]
    pub k_e: usize,
    #[serde(default)]
    pub k_p: usize,
    #[serde(default = "defaults::one")]
    pub n_i: usize,
    #[serde(default = "defaults::one")]
    pub n_e: usize,
    #[serde(default = "defaults::one")]
    pub n_p: usize,
    pub p_t_dbm: f64,
    #[serde(default = "defaults::sigma_n2_dbm")]
    pub sigma_n2_dbm: f64,
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    /// Post-efficiency energy thresholds, one per energy user; all zero when omitted.
    #[serde(default)]
    pub e_th_uw: Vec<f64>,
    /// Interference thresholds, one per primary receiver; `"inf"` leaves a receiver unconstrained.
    #[serde(default, with = "threshold_list")]
    pub i_th_uw: Vec<f64>,
    /// WSR weights; all ones when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_axis: Option<SweepAxis>,
    /// Sweep points in the axis unit (microwatts, dBm or a user count).
    #[serde(default)]
    pub sweep_values: Vec<f64>,
    /// For an `e_th` sweep without explicit values: number of points from zero
    /// to `sweep_max_fraction` of the per-trial achievable common threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_points: Option<usize>,
    #[serde(default = "defaults::sweep_max_fraction")]
    pub sweep_max_fraction: f64,
    /// Methods to run; each mode has a default list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,

    /// Dual ellipsoid tolerance; the solver defaults apply when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ellipsoid_tol: Option<f64>,
    #[serde(default = "defaults::ellipsoid_max_iter")]
    pub ellipsoid_max_iter: usize,
    #[serde(default = "defaults::outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "defaults::max_outer")]
    pub max_outer: usize,
    /// Simplex resolution of the energy-threshold feasibility check.
    #[serde(default = "defaults::feasibility_grid")]
    pub feasibility_grid: usize,
    /// Simplex resolution of the energy-region boundary.
    #[serde(default = "defaults::energy_grid")]
    pub energy_grid: usize,
}

mod defaults {
    pub fn one() -> usize {
        1
    }
    pub fn n_trials() -> usize {
        1
    }
    pub fn n_g() -> usize {
        100
    }
    pub fn sigma_n2_dbm() -> f64 {
        -30.0
    }
    pub fn rho() -> f64 {
        0.5
    }
    pub fn sweep_max_fraction() -> f64 {
        0.9
    }
    pub fn ellipsoid_max_iter() -> usize {
        swipt_core::ellipsoid::DEFAULT_MAX_ITER
    }
    pub fn outer_tol() -> f64 {
        1e-5
    }
    pub fn max_outer() -> usize {
        200
    }
    pub fn feasibility_grid() -> usize {
        21
    }
    pub fn energy_grid() -> usize {
        21
    }
}

/// Thresholds that may be unbounded: written as numbers or the string `"inf"`.
mod threshold_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Entry> =
            v.iter().map(|x| if x.is_infinite() { Entry::Text("inf".into()) } else { Entry::Num(*x) }).collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Entry>::deserialize(d)?;
        raw.into_iter()
            .map(|e| match e {
                Entry::Num(x) => Ok(x),
                Entry::Text(t) if t.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
                Entry::Text(t) => Err(serde::de::Error::custom(format!("threshold must be a number or \"inf\", got {t:?}"))),
            })
            .collect()
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn uw_to_watts(uw: f64) -> f64 {
    uw * 1e-6
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|source| ConfigError::Parse { path: origin.into(), source })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
        Self::from_toml_str(&text, &shown)
    }

    pub fn mode(&self) -> Result<Mode, ConfigError> {
        self.mode.ok_or_else(|| ConfigError::Invalid("no mode given".into()))
    }

    pub fn utility_kind(&self, k_i: usize) -> UtilityKind {
        match self.utility {
            Utility::Wsr => UtilityKind::Wsr(self.alpha_for(k_i)),
            Utility::Pf => UtilityKind::Pf,
            Utility::Hmr => UtilityKind::Hmr,
        }
    }

    /// Configured WSR weights truncated or padded with ones to `k_i` users.
    pub fn alpha_for(&self, k_i: usize) -> Vec<f64> {
        match &self.alpha {
            Some(a) => (0..k_i).map(|k| a.get(k).copied().unwrap_or(1.0)).collect(),
            None => vec![1.0; k_i],
        }
    }

    /// Base scenario in watts, before any sweep is applied.
    pub fn scenario(&self) -> NetworkScenario {
        NetworkScenario {
            m: self.m,
            k_i: self.k_i,
            k_e: self.k_e,
            k_p: self.k_p,
            n_i: self.n_i,
            n_e: self.n_e,
            n_p: self.n_p,
            p_t: dbm_to_watts(self.p_t_dbm),
            sigma_n2: dbm_to_watts(self.sigma_n2_dbm),
            rho: self.rho,
            e_th: if self.e_th_uw.is_empty() {
                vec![0.0; self.k_e]
            } else {
                self.e_th_uw.iter().map(|x| uw_to_watts(*x)).collect()
            },
            i_th: self.i_th_uw.iter().map(|x| uw_to_watts(*x)).collect(),
            alpha: self.alpha_for(self.k_i),
        }
    }

    /// Checks everything that does not depend on the channel draws.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if !self.e_th_uw.is_empty() && self.e_th_uw.len() != self.k_e {
            return bad(format!("e_th_uw has {} entries for k_e = {}", self.e_th_uw.len(), self.k_e));
        }
        if self.i_th_uw.len() != self.k_p {
            return bad(format!("i_th_uw has {} entries for k_p = {}", self.i_th_uw.len(), self.k_p));
        }
        if let Some(a) = &self.alpha {
            if a.len() < self.k_i {
                return bad(format!("alpha has {} entries for k_i = {}", a.len(), self.k_i));
            }
        }
        if !(self.p_t_dbm.is_finite() && self.sigma_n2_dbm.is_finite()) {
            return bad("p_t_dbm and sigma_n2_dbm must be finite".into());
        }
        if !(self.sweep_max_fraction > 0.0 && self.sweep_max_fraction <= 1.0) {
            return bad(format!("sweep_max_fraction must lie in (0, 1], got {}", self.sweep_max_fraction));
        }
        if let Some(tol) = self.ellipsoid_tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return bad(format!("ellipsoid_tol must be positive, got {tol}"));
            }
        }
        if self.outer_tol.is_nan() || self.outer_tol <= 0.0 || self.max_outer == 0 || self.ellipsoid_max_iter == 0 {
            return bad("outer_tol, max_outer and ellipsoid_max_iter must be positive".into());
        }
        if self.feasibility_grid == 0 || self.energy_grid == 0 {
            return bad("feasibility_grid and energy_grid must be positive".into());
        }
        if self.n_g == 0 {
            return bad("n_g must be at least 1".into());
        }
        self.scenario().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match (self.sweep_axis, self.sweep_values.is_empty(), self.sweep_points) {
            (None, false, _) | (None, _, Some(_)) => {
                return bad("sweep_values or sweep_points given without sweep_axis".into());
            }
            (Some(SweepAxis::ETh), true, None) => {
                return bad("an e_th sweep needs sweep_values or sweep_points".into());
            }
            (Some(SweepAxis::ETh), true, Some(0)) => return bad("sweep_points must be positive".into()),
            (Some(SweepAxis::ETh), _, _) if self.k_e == 0 => return bad("an e_th sweep needs k_e >= 1".into()),
            (Some(SweepAxis::ITh), _, _) if self.k_p == 0 => return bad("an i_th sweep needs k_p >= 1".into()),
            (Some(axis), true, _) if axis != SweepAxis::ETh => {
                return bad(format!("a {} sweep needs sweep_values", axis.as_str()));
            }
            _ => {}
        }
        if self.sweep_axis == Some(SweepAxis::KI)
            && self.sweep_values.iter().any(|v| !(v.fract() == 0.0 && *v >= 1.0))
        {
            return bad("k_i sweep values must be positive integers".into());
        }
        if self.sweep_values.iter().any(|v| !v.is_finite() && self.sweep_axis != Some(SweepAxis::ITh)) {
            return bad("sweep values must be finite".into());
        }
        if let Ok(Mode::EnergyRegion) = self.mode() {
            if self.k_e == 0 {
                return bad("energy-region mode needs k_e >= 1".into());
            }
        }
        Ok(())
    }
}
