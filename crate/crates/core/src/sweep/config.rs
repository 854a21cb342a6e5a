//! Experiment files: one TOML document holding the interferometer working
//! point and the settings of every subcommand. Unknown keys are rejected.
//!
//! ```toml
//! [interferometer]
//! gain = 2.0
//! loss = 0.1
//! bell = "phi_plus"
//! placement = "between_plates"
//! phi_b = 0.0
//! delta = 1.5707963267948966
//! phi_su = 0.0
//! seed = { sH = [100.0, 0.0] }
//! detection = { modes = ["iH"], basis = "HV" }
//!
//! [sweep]
//! axis = { parameter = "phi_b", start = -3.141592653589793, stop = 3.141592653589793, count = 181 }
//!
//! [map]
//! phi_b = { parameter = "phi_b", start = -3.141592653589793, stop = 3.141592653589793, count = 181 }
//! delta = { parameter = "delta", start = 0.0, stop = 3.141592653589793, count = 91 }
//!
//! [optimizer]
//! grid_points = 16
//! step = 1e-5
//! optimize_phi_su = false
//!
//! [validation]
//! start_cutoff = 16
//! cutoff_step = 8
//! max_amplitudes = 33554432
//! tolerance = 1e-6
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fock::state::DEFAULT_AMPLITUDE_BUDGET;
use crate::metrology::DEFAULT_STEP;
use crate::pipeline::{ConfigError, InterferometerConfig};

/// Config fields that a sweep axis may scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    PhiB,
    Delta,
    PhiSu,
    Gain,
    Loss,
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::PhiB => "phi_b",
            Parameter::Delta => "delta",
            Parameter::PhiSu => "phi_su",
            Parameter::Gain => "gain",
            Parameter::Loss => "loss",
        }
    }

    pub fn set(self, cfg: &mut InterferometerConfig, value: f64) {
        match self {
            Parameter::PhiB => cfg.phi_b = value,
            Parameter::Delta => cfg.delta = value,
            Parameter::PhiSu => cfg.phi_su = value,
            Parameter::Gain => cfg.gain = value,
            Parameter::Loss => cfg.loss = value,
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub parameter: Parameter,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(parameter: Parameter, start: f64, stop: f64, count: usize) -> Self {
        Axis {
            parameter,
            start,
            stop,
            count,
        }
    }

    pub fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if self.count < 2 {
            return Err(ConfigError::new(
                format!("{field}.count"),
                format!("must be at least 2, got {}", self.count),
            ));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(ConfigError::new(field, "range must be finite"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.count;
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: Axis,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            axis: Axis::new(Parameter::PhiB, -PI, PI, 181),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub phi_b: Axis,
    pub delta: Axis,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            phi_b: Axis::new(Parameter::PhiB, -PI, PI, 181),
            delta: Axis::new(Parameter::Delta, 0.0, PI, 91),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub grid_points: usize,
    /// Finite-difference step in `φ_b`.
    pub step: f64,
    /// Optimize `φ_su` at every sweep or map point instead of using the
    /// configured value.
    pub optimize_phi_su: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            grid_points: 16,
            step: DEFAULT_STEP,
            optimize_phi_su: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationSection {
    pub start_cutoff: usize,
    pub cutoff_step: usize,
    pub max_amplitudes: usize,
    /// Largest accepted relative error between the two simulators.
    pub tolerance: f64,
}

impl Default for ValidationSection {
    fn default() -> Self {
        ValidationSection {
            start_cutoff: 16,
            cutoff_step: 8,
            max_amplitudes: DEFAULT_AMPLITUDE_BUDGET,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub interferometer: InterferometerConfig,
    pub sweep: SweepSection,
    pub map: MapSection,
    pub optimizer: OptimizerSection,
    pub validation: ValidationSection,
}

/// Everything a sweep or map needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRequest {
    pub base: InterferometerConfig,
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    pub optimize_phi_su: bool,
    pub grid_points: usize,
    pub step: f64,
}

impl SweepRequest {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.base
            .validate()
            .map_err(|e| ConfigError::new(format!("interferometer.{}", e.field), e.message))?;
        self.axis1.validate("axis1")?;
        if let Some(a) = &self.axis2 {
            a.validate("axis2")?;
        }
        if self.grid_points < 8 {
            return Err(ConfigError::new("optimizer.grid_points", "must be at least 8"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(ConfigError::new("optimizer.step", "must be positive and finite"));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let span = e.span().map(|s| format!(" at byte {}", s.start)).unwrap_or_default();
            ConfigError::new("config", format!("{}{span}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.interferometer
            .validate()
            .map_err(|e| ConfigError::new(format!("interferometer.{}", e.field), e.message))?;
        self.sweep.axis.validate("sweep.axis")?;
        self.map.phi_b.validate("map.phi_b")?;
        self.map.delta.validate("map.delta")?;
        if self.optimizer.grid_points < 8 {
            return Err(ConfigError::new("optimizer.grid_points", "must be at least 8"));
        }
        if !(self.optimizer.step > 0.0 && self.optimizer.step.is_finite()) {
            return Err(ConfigError::new("optimizer.step", "must be positive and finite"));
        }
        if self.validation.start_cutoff < 3 {
            return Err(ConfigError::new("validation.start_cutoff", "must be at least 3"));
        }
        if self.validation.cutoff_step == 0 {
            return Err(ConfigError::new("validation.cutoff_step", "must be positive"));
        }
        if !(self.validation.tolerance > 0.0) {
            return Err(ConfigError::new("validation.tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn sweep_request(&self) -> SweepRequest {
        SweepRequest {
            base: self.interferometer.clone(),
            axis1: self.sweep.axis,
            axis2: None,
            optimize_phi_su: self.optimizer.optimize_phi_su,
            grid_points: self.optimizer.grid_points,
            step: self.optimizer.step,
        }
    }

    pub fn map_request(&self) -> SweepRequest {
        SweepRequest {
            axis1: self.map.phi_b,
            axis2: Some(self.map.delta),
            ..self.sweep_request()
        }
    }
}
