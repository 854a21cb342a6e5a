//! Batch drivers behind the command-line tool: phase sweeps, sensitivity
//! maps over `(φ_b, δ)`, working-point optimization and oracle validation.
//!
//! Every grid point is independent and runs on the rayon pool; results are
//! collected in grid order so output does not depend on the thread count.

pub mod config;
pub mod output;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{certified_statistics, relative_error, ConvergenceCertificate, FockError, OracleSettings};
use crate::gaussian::{ModeIndex, PHYSICAL_MODES};
use crate::metrology::{Estimator, MetrologyError, SensitivityResult};
use crate::pipeline::{plan, run_plan, total_intensity_at_plane3, ConfigError, InterferometerConfig};

pub use config::{Axis, ExperimentConfig, Parameter, SweepRequest, ValidationSection};

/// Map value used where the signal does not depend on `φ_b`.
pub const MAP_CAP_DB: f64 = 60.0;

/// Largest gain the Fock oracle is asked to reproduce.
pub const MAX_VALIDATION_GAIN: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid configuration")]
    Config(#[from] ConfigError),
    #[error("at {parameter} = {value}")]
    Point {
        parameter: &'static str,
        value: f64,
        #[source]
        source: MetrologyError,
    },
    #[error(transparent)]
    Metrology(#[from] MetrologyError),
    #[error("Fock oracle failed")]
    Oracle(#[from] FockError),
    #[error("Gaussian engine failed")]
    Engine(#[from] crate::gaussian::EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub phi_b: f64,
    pub mean_n: f64,
    pub delta_n: f64,
    pub dn_dphi: f64,
    pub delta_phi_sq: f64,
    pub snl_sq: f64,
    pub s2_db: f64,
    pub phi_su: f64,
}

impl From<(f64, SensitivityResult)> for SweepRow {
    fn from((phi_b, r): (f64, SensitivityResult)) -> Self {
        SweepRow {
            phi_b,
            mean_n: r.mean_n,
            delta_n: r.delta_n,
            dn_dphi: r.dn_dphi,
            delta_phi_sq: r.delta_phi_sq,
            snl_sq: r.snl_sq,
            s2_db: r.s2_db,
            phi_su: r.phi_su_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub request: SweepRequest,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Row with the smallest `S2_db`, if any point is sensitive.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.s2_db.is_finite())
            .min_by(|a, b| a.s2_db.total_cmp(&b.s2_db))
    }
}

/// `S²` in dB over a `δ × φ_b` grid, stored row-major with `φ_b` varying
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityMap {
    pub request: SweepRequest,
    pub phi_b: Vec<f64>,
    pub delta: Vec<f64>,
    pub s2_db: Vec<f64>,
    pub phi_su: Vec<f64>,
}

impl SensitivityMap {
    pub fn at(&self, delta_index: usize, phi_b_index: usize) -> f64 {
        self.s2_db[delta_index * self.phi_b.len() + phi_b_index]
    }

    pub fn min_db(&self) -> f64 {
        self.s2_db.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn evaluate(est: &Estimator, phi_b: f64, req: &SweepRequest) -> Result<SensitivityResult, MetrologyError> {
    if req.optimize_phi_su {
        est.optimize(phi_b, req.grid_points).map(|(_, r)| r)
    } else {
        est.evaluate(phi_b, req.base.phi_su)
    }
}

/// One row per `φ_b` value of `axis1`.
pub fn run_phase_sweep(req: &SweepRequest) -> Result<SweepTable, SweepError> {
    req.validate()?;
    if req.axis1.parameter != Parameter::PhiB {
        return Err(ConfigError::new("sweep.axis.parameter", "phase sweeps scan phi_b").into());
    }
    let est = Estimator::new(&req.base, req.step)?;
    let rows = req
        .axis1
        .values()
        .into_par_iter()
        .map(|phi_b| {
            evaluate(&est, phi_b, req)
                .map(|r| SweepRow::from((phi_b, r)))
                .map_err(|source| SweepError::Point {
                    parameter: "phi_b",
                    value: phi_b,
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable {
        request: req.clone(),
        rows,
    })
}

/// `S²` over `axis1 = φ_b` and `axis2 = δ`. Insensitive points are stored
/// as [`MAP_CAP_DB`], as are values above it.
pub fn run_map(req: &SweepRequest) -> Result<SensitivityMap, SweepError> {
    req.validate()?;
    if req.axis1.parameter != Parameter::PhiB {
        return Err(ConfigError::new("map.phi_b.parameter", "map columns scan phi_b").into());
    }
    let axis2 = match req.axis2 {
        Some(a) if a.parameter == Parameter::Delta => a,
        _ => return Err(ConfigError::new("map.delta.parameter", "map rows scan delta").into()),
    };
    let phi_b = req.axis1.values();
    let delta = axis2.values();

    let rows = delta
        .par_iter()
        .map(|&d| {
            let mut cfg = req.base.clone();
            cfg.delta = d;
            let est = Estimator::new(&cfg, req.step)?;
            phi_b
                .par_iter()
                .map(|&p| match evaluate(&est, p, req) {
                    Ok(r) => Ok((r.s2_db.min(MAP_CAP_DB), r.phi_su_used)),
                    Err(MetrologyError::NoSensitiveWorkingPoint) => Ok((MAP_CAP_DB, req.base.phi_su)),
                    Err(source) => Err(SweepError::Point {
                        parameter: "phi_b",
                        value: p,
                        source,
                    }),
                })
                .collect::<Result<Vec<_>, SweepError>>()
        })
        .collect::<Result<Vec<_>, SweepError>>()?;

    let (s2_db, phi_su) = rows.into_iter().flatten().unzip();
    Ok(SensitivityMap {
        request: req.clone(),
        phi_b,
        delta,
        s2_db,
        phi_su,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiOptimization {
    pub phi_b: f64,
    pub phi_su: f64,
    pub result: SensitivityResult,
}

/// Best `φ_su` at the configured `φ_b`.
pub fn run_phi_optimization(req: &SweepRequest) -> Result<PhiOptimization, SweepError> {
    req.validate()?;
    let est = Estimator::new(&req.base, req.step)?;
    let (phi_su, result) = est.optimize(req.base.phi_b, req.grid_points)?;
    Ok(PhiOptimization {
        phi_b: req.base.phi_b,
        phi_su,
        result,
    })
}

/// Gaussian and Fock photon statistics for one set of output modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub modes: Vec<ModeIndex>,
    pub gaussian_mean: f64,
    pub fock_mean: f64,
    pub gaussian_variance: f64,
    pub fock_variance: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub config: InterferometerConfig,
    pub rows: Vec<ValidationRow>,
    pub gaussian_plane3_total: f64,
    pub fock_plane3_total: f64,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub certificate: ConvergenceCertificate,
}

impl ValidationReport {
    pub fn agrees(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }

    pub fn converged(&self) -> bool {
        self.certificate.converged
    }
}

/// Detection subsets compared by [`run_validation`]: the configured one,
/// each mode alone, the two polarization pairs, both idlers and all four.
pub fn validation_subsets(cfg: &InterferometerConfig) -> Vec<Vec<usize>> {
    let mut out = vec![cfg.detection.indices()];
    let extra = (0..PHYSICAL_MODES)
        .map(|i| vec![i])
        .chain([vec![0, 2], vec![1, 3], vec![2, 3], vec![0, 1, 2, 3]]);
    for s in extra {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Compares the Gaussian engine with the certified Fock oracle on
/// [`validation_subsets`].
pub fn run_validation(
    cfg: &InterferometerConfig,
    settings: &ValidationSection,
) -> Result<ValidationReport, SweepError> {
    cfg.validate()
        .map_err(|e| ConfigError::new(format!("interferometer.{}", e.field), e.message))?;
    if cfg.gain > MAX_VALIDATION_GAIN {
        return Err(ConfigError::new(
            "interferometer.gain",
            format!("validation supports gain <= {MAX_VALIDATION_GAIN}, got {}", cfg.gain),
        )
        .into());
    }
    let p = plan(cfg)?;
    let subsets = validation_subsets(cfg);
    let gauss = run_plan(&p)?;
    let oracle = certified_statistics(
        &p,
        &subsets,
        &OracleSettings {
            start_cutoff: settings.start_cutoff,
            cutoff_step: settings.cutoff_step,
            budget: settings.max_amplitudes,
            relative_tol: 1e-8,
        },
    )?;

    let mut rows = Vec::with_capacity(subsets.len());
    for (s, f) in subsets.iter().zip(&oracle.statistics) {
        let g = gauss.output.photon_statistics(s)?;
        rows.push(ValidationRow {
            modes: s.iter().filter_map(|&i| ModeIndex::from_index(i)).collect(),
            gaussian_mean: g.mean,
            fock_mean: f.mean,
            gaussian_variance: g.variance,
            fock_variance: f.variance,
            relative_error: relative_error(f.mean, g.mean).max(relative_error(f.variance, g.variance)),
        });
    }
    let gaussian_plane3_total = total_intensity_at_plane3(&gauss.plane3);
    let max_relative_error = rows
        .iter()
        .map(|r| r.relative_error)
        .chain([relative_error(oracle.plane3_total, gaussian_plane3_total)])
        .fold(0.0, f64::max);
    Ok(ValidationReport {
        config: cfg.clone(),
        rows,
        gaussian_plane3_total,
        fock_plane3_total: oracle.plane3_total,
        max_relative_error,
        tolerance: settings.tolerance,
        certificate: oracle.certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::ModeIndex;
    use num_complex::Complex64;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn small_request() -> SweepRequest {
        let mut cfg = ExperimentConfig::default();
        cfg.interferometer.gain = 1.0;
        cfg.sweep.axis.count = 9;
        cfg.map.phi_b.count = 5;
        cfg.map.delta.count = 4;
        cfg.sweep_request()
    }

    #[test]
    fn sweep_rows_follow_the_axis() {
        let t = run_phase_sweep(&small_request()).unwrap();
        assert_eq!(t.rows.len(), 9);
        assert_eq!(t.rows[0].phi_b, -PI);
        assert_eq!(t.rows[8].phi_b, PI);
        for r in &t.rows {
            assert_eq!(r.phi_su, 0.0);
        }
    }

    #[test]
    fn sweep_rejects_other_axes() {
        let mut req = small_request();
        req.axis1.parameter = Parameter::Delta;
        assert!(matches!(run_phase_sweep(&req), Err(SweepError::Config(e)) if e.field == "sweep.axis.parameter"));
    }

    #[test]
    fn map_is_row_major_and_capped() {
        let mut cfg = ExperimentConfig::default();
        cfg.interferometer.gain = 1.0;
        cfg.map.phi_b.count = 5;
        cfg.map.delta.count = 3;
        let req = cfg.map_request();
        let m = run_map(&req).unwrap();
        assert_eq!(m.s2_db.len(), 15);
        for (di, &d) in m.delta.iter().enumerate() {
            let mut c = cfg.interferometer.clone();
            c.delta = d;
            let est = Estimator::new(&c, req.step).unwrap();
            for (pi, &p) in m.phi_b.iter().enumerate() {
                let want = est.evaluate(p, 0.0).unwrap().s2_db.min(MAP_CAP_DB);
                assert_eq!(m.at(di, pi), want);
            }
        }
        assert!(m.s2_db.iter().all(|v| *v <= MAP_CAP_DB));
    }

    #[test]
    fn validation_guards_gain() {
        let cfg = InterferometerConfig {
            gain: 0.55,
            ..Default::default()
        };
        let e = run_validation(&cfg, &ValidationSection::default()).unwrap_err();
        assert!(matches!(e, SweepError::Config(c) if c.field == "interferometer.gain"));
    }

    #[test]
    fn validation_at_zero_gain_is_exact() {
        let cfg = InterferometerConfig {
            gain: 0.0,
            seed: BTreeMap::from([(ModeIndex::SIGNAL_H, Complex64::new(0.8, 0.1))]),
            phi_b: 0.4,
            delta: 0.2,
            ..Default::default()
        };
        let rep = run_validation(&cfg, &ValidationSection::default()).unwrap();
        assert!(rep.converged());
        assert!(rep.max_relative_error < 1e-12, "{}", rep.max_relative_error);
        assert_eq!(rep.rows.len(), 8);
    }

    #[test]
    fn subsets_do_not_repeat() {
        let cfg = InterferometerConfig::default();
        let s = validation_subsets(&cfg);
        assert_eq!(s[0], vec![2]);
        assert_eq!(s.len(), 8);
    }
}
