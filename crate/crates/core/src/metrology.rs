//! Phase sensitivity from error propagation, normalized to the shot-noise
//! limit of the light that reached the measurement amplifiers.
//!
//! ```text
//! δφ² = ΔN² / (∂⟨N⟩/∂φ_b)²        S² = 10·log10(δφ² · N₃)
//! ```

use std::f64::consts::TAU;

use serde::Serialize;
use thiserror::Error;

use crate::gaussian::PhotonStatistics;
use crate::pipeline::{total_intensity_at_plane3, CompiledPipeline, InterferometerConfig, PipelineError, PipelineRun};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative slope below which a working point is reported as insensitive.
pub const INSENSITIVE_RELATIVE: f64 = 1e-12;

/// Multiple of `ε · Σ|terms| / h` treated as pure finite-difference
/// round-off.
pub const ROUNDOFF_FACTOR: f64 = 64.0;

const GOLDEN_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetrologyError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("no light reaches plane (3); the shot-noise reference is undefined")]
    NoReferenceIntensity,
    #[error("phase optimizer needs at least 8 grid points, got {0}")]
    TooFewGridPoints(usize),
    #[error("no sensitive working point: every phi_su on the grid is insensitive")]
    NoSensitiveWorkingPoint,
}

/// Sensitivity at one working point.
///
/// For an insensitive working point `delta_phi_sq` and `s2_db` are `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityResult {
    pub mean_n: f64,
    pub delta_n: f64,
    pub dn_dphi: f64,
    pub delta_phi_sq: f64,
    pub snl_sq: f64,
    pub s2_db: f64,
    pub phi_su_used: f64,
    /// `|D(h/2) − D_richardson|`, an estimate of the derivative error.
    pub richardson_residual: f64,
    pub insensitive: bool,
}

/// `1/n`, in the same squared-phase units as `snl_sq`.
pub fn heisenberg_reference(n_total: f64) -> f64 {
    1.0 / n_total
}

/// `1/n`: the squared shot-noise phase uncertainty for `n` photons.
pub fn shot_noise_reference(n_total: f64) -> f64 {
    1.0 / n_total
}

/// Working point evaluator that reuses one compiled chain across `φ_b` and
/// `φ_su` values.
#[derive(Debug, Clone)]
pub struct Estimator {
    pipeline: CompiledPipeline,
    modes: Vec<usize>,
    h: f64,
}

impl Estimator {
    pub fn new(cfg: &InterferometerConfig, h: f64) -> Result<Self, MetrologyError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(MetrologyError::InvalidStep(h));
        }
        Ok(Estimator {
            pipeline: CompiledPipeline::new(cfg)?,
            modes: cfg.detection.indices(),
            h,
        })
    }

    fn detected(&self, run: &PipelineRun) -> Result<PhotonStatistics, MetrologyError> {
        Ok(run.output.photon_statistics(&self.modes).map_err(PipelineError::from)?)
    }

    pub fn mean_at(&self, phi_b: f64, phi_su: f64) -> Result<f64, MetrologyError> {
        let run = self.pipeline.run_at(phi_b, phi_su).map_err(PipelineError::from)?;
        Ok(self.detected(&run)?.mean)
    }

    /// Central difference of step `h` refined once by Richardson
    /// extrapolation against step `h/2`.
    pub fn evaluate(&self, phi_b: f64, phi_su: f64) -> Result<SensitivityResult, MetrologyError> {
        let h = self.h;
        let run = self.pipeline.run_at(phi_b, phi_su).map_err(PipelineError::from)?;
        let stats = self.detected(&run)?;
        let n3 = total_intensity_at_plane3(&run.plane3);
        if !(n3 > 0.0) {
            return Err(MetrologyError::NoReferenceIntensity);
        }

        let diff = |step: f64| {
            self.pipeline
                .mean_difference(phi_b, phi_su, step, &self.modes)
                .map_err(PipelineError::from)
        };
        let (wide, narrow) = (diff(h)?, diff(h / 2.0)?);
        let d_h = wide.value / (2.0 * h);
        let d_h2 = narrow.value / h;
        let dn = (4.0 * d_h2 - d_h) / 3.0;
        let residual = (dn - d_h2).abs();

        let roundoff = ROUNDOFF_FACTOR * f64::EPSILON * (wide.magnitude / (2.0 * h) + narrow.magnitude / h);
        let insensitive =
            !dn.is_finite() || dn.abs() <= INSENSITIVE_RELATIVE * stats.mean.abs() || dn.abs() <= roundoff;

        let snl_sq = shot_noise_reference(n3);
        let (delta_phi_sq, s2_db) = if insensitive {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let dps = stats.variance / (dn * dn);
            (dps, 10.0 * (dps / snl_sq).log10())
        };
        Ok(SensitivityResult {
            mean_n: stats.mean,
            delta_n: stats.variance.sqrt(),
            dn_dphi: dn,
            delta_phi_sq,
            snl_sq,
            s2_db,
            phi_su_used: phi_su,
            richardson_residual: residual,
            insensitive,
        })
    }

    /// Minimizes `δφ²` over `φ_su` at fixed `φ_b`; see [`optimize_phi_su`].
    pub fn optimize(&self, phi_b: f64, grid_points: usize) -> Result<(f64, SensitivityResult), MetrologyError> {
        if grid_points < 8 {
            return Err(MetrologyError::TooFewGridPoints(grid_points));
        }
        let step = TAU / grid_points as f64;
        let mut best: Option<(usize, SensitivityResult)> = None;
        for k in 0..grid_points {
            let r = self.evaluate(phi_b, k as f64 * step)?;
            if r.insensitive {
                continue;
            }
            if best.map_or(true, |(_, b)| r.delta_phi_sq < b.delta_phi_sq) {
                best = Some((k, r));
            }
        }
        let (k, coarse) = best.ok_or(MetrologyError::NoSensitiveWorkingPoint)?;

        let centre = k as f64 * step;
        let refined = self.golden_section(phi_b, centre - step, centre + step)?;
        let mut out = better(coarse, refined);
        out.phi_su_used = out.phi_su_used.rem_euclid(TAU);
        Ok((out.phi_su_used, out))
    }

    fn golden_section(&self, phi_b: f64, mut lo: f64, mut hi: f64) -> Result<SensitivityResult, MetrologyError> {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut r1 = self.evaluate(phi_b, x1)?;
        let mut r2 = self.evaluate(phi_b, x2)?;
        let mut best = better(r1, r2);
        while hi - lo > GOLDEN_TOL {
            if r1.delta_phi_sq <= r2.delta_phi_sq {
                hi = x2;
                x2 = x1;
                r2 = r1;
                x1 = hi - inv_phi * (hi - lo);
                r1 = self.evaluate(phi_b, x1)?;
                best = better(best, r1);
            } else {
                lo = x1;
                x1 = x2;
                r1 = r2;
                x2 = lo + inv_phi * (hi - lo);
                r2 = self.evaluate(phi_b, x2)?;
                best = better(best, r2);
            }
        }
        Ok(best)
    }
}

/// Sensitivity at `cfg.phi_b`, `cfg.phi_su`.
pub fn sensitivity_at(cfg: &InterferometerConfig, h: f64) -> Result<SensitivityResult, MetrologyError> {
    Estimator::new(cfg, h)?.evaluate(cfg.phi_b, cfg.phi_su)
}

fn better(a: SensitivityResult, b: SensitivityResult) -> SensitivityResult {
    if b.delta_phi_sq < a.delta_phi_sq {
        b
    } else {
        a
    }
}

/// Minimizes `δφ²` over `φ_su`: a uniform scan of `grid_points` values in
/// `[0, 2π)` and golden-section refinement between the neighbours of the
/// best one. The returned result is never worse than any grid value.
pub fn optimize_phi_su(
    cfg: &InterferometerConfig,
    grid_points: usize,
) -> Result<(f64, SensitivityResult), MetrologyError> {
    Estimator::new(cfg, DEFAULT_STEP)?.optimize(cfg.phi_b, grid_points)
}
