//! Runs a [`PipelinePlan`] in the truncated Fock space and certifies the
//! result against a larger cutoff.

use serde::Serialize;

use super::state::{FockError, FockState, DEFAULT_AMPLITUDE_BUDGET, LEAKAGE_TOL};
use crate::elements::OpticalElement;
use crate::gaussian::{CMatrix, ModeIndex, PhotonStatistics, PHYSICAL_MODES};
use crate::pipeline::PipelinePlan;

/// Relative differences are taken against `max(|reference|, ABS_FLOOR)`.
pub const ABS_FLOOR: f64 = 1e-9;

pub fn relative_error(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(ABS_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockRun {
    pub output: FockState,
    /// Photons in the four physical modes at plane (3).
    pub plane3_total: f64,
}

fn apply(state: &mut FockState, el: &OpticalElement) -> Result<(), FockError> {
    match el {
        OpticalElement::Seed { mode, amplitude } => state.displace(mode.index(), *amplitude),
        OpticalElement::Opa(p) => {
            let s = ModeIndex::new(crate::gaussian::Frequency::Signal, p.polarization).index();
            let i = ModeIndex::new(crate::gaussian::Frequency::Idler, p.polarization).index();
            state.two_mode_squeeze(s, i, p.gain, p.sign.value())
        }
        OpticalElement::Waveplate(_) | OpticalElement::PhasePlate(_) => {
            let j = el.jones().expect("passive element has a Jones matrix");
            state.apply_passive(&j)
        }
        // a lossless station only adds a decoupled vacuum mode
        OpticalElement::Loss { transmission, .. } if *transmission == 1.0 => Ok(()),
        OpticalElement::Loss { mode, transmission } => state.apply_loss(mode.index(), *transmission),
    }
}

/// Runs the elements in order, except that each run of consecutive passive
/// elements is multiplied into one matrix first; it then costs two rotations
/// instead of two per plate.
fn run_elements(state: &mut FockState, elements: &[OpticalElement]) -> Result<(), FockError> {
    let mut pending: Option<CMatrix> = None;
    for el in elements {
        match el.jones() {
            Some(j) => pending = Some(pending.map_or(j.clone(), |p| &j * &p)),
            None => {
                if let Some(j) = pending.take() {
                    state.apply_passive(&j)?;
                }
                apply(state, el)?;
            }
        }
    }
    if let Some(j) = pending {
        state.apply_passive(&j)?;
    }
    Ok(())
}

pub fn run_plan_fock(plan: &PipelinePlan, cutoff: usize, budget: usize) -> Result<FockRun, FockError> {
    let mut state = FockState::vacuum_with_budget(PHYSICAL_MODES, cutoff, budget)?;
    run_elements(&mut state, &plan.preparation)?;
    let all: Vec<usize> = (0..PHYSICAL_MODES).collect();
    let plane3_total = state.photon_statistics(&all)?.mean;
    run_elements(&mut state, &plan.measurement)?;
    Ok(FockRun {
        output: state,
        plane3_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSettings {
    pub start_cutoff: usize,
    pub cutoff_step: usize,
    pub budget: usize,
    /// Required agreement between the final cutoff and the one before.
    pub relative_tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            start_cutoff: 16,
            cutoff_step: 8,
            budget: DEFAULT_AMPLITUDE_BUDGET,
            relative_tol: 1e-8,
        }
    }
}

/// Evidence that the truncation does not affect the reported numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceCertificate {
    /// Cutoff of the reported statistics.
    pub cutoff: usize,
    /// Smaller cutoff they were compared against.
    pub previous_cutoff: usize,
    pub max_leakage: f64,
    pub max_relative_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    /// One entry per requested subset, in request order.
    pub statistics: Vec<PhotonStatistics>,
    pub plane3_total: f64,
    pub certificate: ConvergenceCertificate,
}

struct Attempt {
    cutoff: usize,
    stats: Vec<PhotonStatistics>,
    plane3: f64,
    leakage: f64,
}

fn attempt(plan: &PipelinePlan, subsets: &[Vec<usize>], cutoff: usize, budget: usize) -> Result<Attempt, FockError> {
    let run = run_plan_fock(plan, cutoff, budget)?;
    let stats = subsets
        .iter()
        .map(|s| run.output.photon_statistics(s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Attempt {
        cutoff,
        stats,
        plane3: run.plane3_total,
        leakage: run.output.max_leakage(),
    })
}

fn max_change(a: &Attempt, b: &Attempt) -> f64 {
    a.stats
        .iter()
        .zip(&b.stats)
        .flat_map(|(x, y)| [relative_error(x.mean, y.mean), relative_error(x.variance, y.variance)])
        .chain([relative_error(a.plane3, b.plane3)])
        .fold(0.0, f64::max)
}

/// Photon statistics of the plan's output for each subset, raising the
/// cutoff in steps until the edge population is below [`LEAKAGE_TOL`] and
/// two consecutive cutoffs agree to `relative_tol`. When the budget runs out
/// first, the last attempt is returned with `converged = false`.
pub fn certified_statistics(
    plan: &PipelinePlan,
    subsets: &[Vec<usize>],
    settings: &OracleSettings,
) -> Result<OracleReport, FockError> {
    let mut previous: Option<Attempt> = None;
    let mut cutoff = settings.start_cutoff;
    loop {
        let current = match attempt(plan, subsets, cutoff, settings.budget) {
            Ok(a) => a,
            Err(FockError::DimensionBudget { .. }) if previous.is_some() => {
                let last = previous.expect("checked above");
                log::warn!("Fock oracle hit the amplitude budget at cutoff {cutoff}");
                return Ok(OracleReport {
                    certificate: ConvergenceCertificate {
                        cutoff: last.cutoff,
                        previous_cutoff: last.cutoff,
                        max_leakage: last.leakage,
                        max_relative_change: f64::INFINITY,
                        converged: false,
                    },
                    statistics: last.stats,
                    plane3_total: last.plane3,
                });
            }
            Err(e) => return Err(e),
        };
        log::debug!("Fock oracle cutoff {cutoff}: leakage {:e}", current.leakage);
        if let Some(prev) = &previous {
            let change = max_change(&current, prev);
            if current.leakage < LEAKAGE_TOL && prev.leakage < LEAKAGE_TOL && change < settings.relative_tol {
                return Ok(OracleReport {
                    certificate: ConvergenceCertificate {
                        cutoff: current.cutoff,
                        previous_cutoff: prev.cutoff,
                        max_leakage: current.leakage,
                        max_relative_change: change,
                        converged: true,
                    },
                    statistics: current.stats,
                    plane3_total: current.plane3,
                });
            }
        }
        previous = Some(current);
        cutoff += settings.cutoff_step;
    }
}
