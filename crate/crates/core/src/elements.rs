//! Matrices for the physical elements of the interferometer.
//!
//! Passive elements act identically on the signal and idler frequencies: a
//! 2×2 polarization block is placed on `(sH, sV)` and again on `(iH, iV)`.

use std::f64::consts::{FRAC_PI_8, PI, TAU};

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::gaussian::{CMatrix, EngineError, GaussianState, ModeIndex, Polarization, PHYSICAL_MODES};

/// Pump phase of an OPA: `+1` amplifies, `-1` de-amplifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum PumpSign {
    #[default]
    Plus,
    Minus,
}

impl PumpSign {
    pub fn value(self) -> f64 {
        match self {
            PumpSign::Plus => 1.0,
            PumpSign::Minus => -1.0,
        }
    }
}

impl TryFrom<i8> for PumpSign {
    type Error = String;
    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(PumpSign::Plus),
            -1 => Ok(PumpSign::Minus),
            other => Err(format!("pump sign must be 1 or -1, got {other}")),
        }
    }
}

impl From<PumpSign> for i8 {
    fn from(s: PumpSign) -> i8 {
        match s {
            PumpSign::Plus => 1,
            PumpSign::Minus => -1,
        }
    }
}

/// Parametric amplifier acting on one polarization. `gain` is the product
/// of nonlinear coefficient, pump amplitude and crystal length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpaParams {
    pub gain: f64,
    pub polarization: Polarization,
    pub sign: PumpSign,
}

/// Linear retarder with phase `phase` (ψ) and principal axis `axis` (γ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveplateParams {
    pub phase: f64,
    pub axis: f64,
}

impl WaveplateParams {
    pub fn quarter_wave(axis: f64) -> Self {
        WaveplateParams { phase: PI / 2.0, axis }
    }

    pub fn half_wave(axis: f64) -> Self {
        WaveplateParams { phase: PI, axis }
    }
}

/// Phases applied just before the measurement amplifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePlateParams {
    /// Overall SU(1,1) phase, on both idlers.
    pub phi_su: f64,
    /// Pump-flip phase, `e^{-iα/2}` on both V modes.
    pub alpha: f64,
    /// Extra `e^{-iβ}` on signal-V only.
    pub beta: f64,
}

impl PhasePlateParams {
    /// Wraps every phase into `[0, 2π)`.
    pub fn new(phi_su: f64, alpha: f64, beta: f64) -> Self {
        PhasePlateParams {
            phi_su: phi_su.rem_euclid(TAU),
            alpha: alpha.rem_euclid(TAU),
            beta: beta.rem_euclid(TAU),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];
}

/// Phase-plate and waveplate settings selecting a Bell state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellSettings {
    pub alpha: f64,
    pub beta: f64,
    /// Angle shared by both quarter-wave plates.
    pub theta: f64,
}

pub fn bell_config(bell: BellState) -> BellSettings {
    let (alpha, beta, theta) = match bell {
        BellState::PhiPlus => (0.0, 0.0, 0.0),
        BellState::PhiMinus => (PI, 0.0, 0.0),
        BellState::PsiPlus => (PI, 0.0, FRAC_PI_8),
        BellState::PsiMinus => (PI, PI, FRAC_PI_8),
    };
    BellSettings { alpha, beta, theta }
}

/// Two-mode squeezer between signal and idler of one polarization; the
/// other polarization passes unchanged.
pub fn make_opa(p: &OpaParams) -> (CMatrix, CMatrix) {
    let s = ModeIndex::new(crate::gaussian::Frequency::Signal, p.polarization).index();
    let i = ModeIndex::new(crate::gaussian::Frequency::Idler, p.polarization).index();
    let mut u = CMatrix::identity(PHYSICAL_MODES, PHYSICAL_MODES);
    let mut v = CMatrix::zeros(PHYSICAL_MODES, PHYSICAL_MODES);
    let ch = Complex64::new(p.gain.cosh(), 0.0);
    let sh = Complex64::new(p.sign.value() * p.gain.sinh(), 0.0);
    u[(s, s)] = ch;
    u[(i, i)] = ch;
    v[(s, i)] = sh;
    v[(i, s)] = sh;
    (u, v)
}

/// 2×2 Jones matrix of a linear retarder in the `(H, V)` basis.
pub fn jones_block(p: &WaveplateParams) -> Matrix2<Complex64> {
    let (s, c) = (p.phase / 2.0).sin_cos();
    retarder_block(c, s, p.axis)
}

/// The retarder matrix with `cos(ψ/2)`, `sin(ψ/2)` replaced by arbitrary
/// `c`, `s`. It is linear in `(c, s)`, so sums and differences of retarders
/// with a common axis can be formed exactly.
pub fn retarder_block(c: f64, s: f64, axis: f64) -> Matrix2<Complex64> {
    let (s2g, c2g) = (2.0 * axis).sin_cos();
    let diag = |sign: f64| Complex64::new(c, sign * c2g * s);
    let off = Complex64::new(0.0, -s2g * s);
    Matrix2::new(diag(-1.0), off, off, diag(1.0))
}

/// Places a 2×2 polarization block on both frequencies.
pub fn embed_polarization_block(block: &Matrix2<Complex64>) -> CMatrix {
    let mut j = CMatrix::zeros(PHYSICAL_MODES, PHYSICAL_MODES);
    for base in [0, 2] {
        for r in 0..2 {
            for c in 0..2 {
                j[(base + r, base + c)] = block[(r, c)];
            }
        }
    }
    j
}

pub fn make_waveplate(p: &WaveplateParams) -> CMatrix {
    embed_polarization_block(&jones_block(p))
}

pub fn make_phase_plate(p: &PhasePlateParams) -> CMatrix {
    let e = |theta: f64| Complex64::from_polar(1.0, theta);
    let mut j = CMatrix::zeros(PHYSICAL_MODES, PHYSICAL_MODES);
    j[(ModeIndex::SIGNAL_H.index(), ModeIndex::SIGNAL_H.index())] = e(0.0);
    j[(ModeIndex::SIGNAL_V.index(), ModeIndex::SIGNAL_V.index())] = e(-p.beta - p.alpha / 2.0);
    j[(ModeIndex::IDLER_H.index(), ModeIndex::IDLER_H.index())] = e(p.phi_su);
    j[(ModeIndex::IDLER_V.index(), ModeIndex::IDLER_V.index())] = e(p.phi_su - p.alpha / 2.0);
    j
}

/// One linear transformation in the optical chain.
#[derive(Debug, Clone, PartialEq)]
pub enum OpticalElement {
    Seed { mode: ModeIndex, amplitude: Complex64 },
    Opa(OpaParams),
    Waveplate(WaveplateParams),
    PhasePlate(PhasePlateParams),
    Loss { mode: ModeIndex, transmission: f64 },
}

impl OpticalElement {
    /// The 4×4 unitary of a passive element, `None` otherwise.
    pub fn jones(&self) -> Option<CMatrix> {
        match self {
            OpticalElement::Waveplate(p) => Some(make_waveplate(p)),
            OpticalElement::PhasePlate(p) => Some(make_phase_plate(p)),
            _ => None,
        }
    }

    pub fn apply(&self, state: &GaussianState) -> Result<GaussianState, EngineError> {
        match self {
            OpticalElement::Seed { mode, amplitude } => state.displace(*mode, *amplitude),
            OpticalElement::Opa(p) => {
                let (u, v) = make_opa(p);
                state.apply_bogoliubov(&u, &v)
            }
            OpticalElement::Waveplate(p) => state.apply_passive(&make_waveplate(p)),
            OpticalElement::PhasePlate(p) => state.apply_passive(&make_phase_plate(p)),
            OpticalElement::Loss { mode, transmission } => state.apply_loss(*mode, *transmission),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{bogoliubov_residuals, unitarity_residual};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_gain_opa_is_identity() {
        let (u, v) = make_opa(&OpaParams {
            gain: 0.0,
            polarization: Polarization::H,
            sign: PumpSign::Plus,
        });
        assert_eq!(u, CMatrix::identity(4, 4));
        assert_eq!(v, CMatrix::zeros(4, 4));
    }

    #[test]
    fn unit_gain_opa_on_vacuum() {
        let p = OpaParams {
            gain: 1.0,
            polarization: Polarization::H,
            sign: PumpSign::Plus,
        };
        let s = OpticalElement::Opa(p)
            .apply(&GaussianState::vacuum(4).unwrap())
            .unwrap();
        let n = s.mean_photons(ModeIndex::SIGNAL_H).unwrap();
        assert!((n - 1.381_097_845_541_816).abs() < 1e-12);
        assert_eq!(s.mean_photons(ModeIndex::SIGNAL_V).unwrap(), 0.0);
    }

    #[test]
    fn opposite_pump_sign_undoes_amplification() {
        let vac = GaussianState::vacuum(4).unwrap();
        let amp = OpaParams {
            gain: 0.8,
            polarization: Polarization::V,
            sign: PumpSign::Plus,
        };
        let de = OpaParams {
            sign: PumpSign::Minus,
            ..amp
        };
        let s = OpticalElement::Opa(de)
            .apply(&OpticalElement::Opa(amp).apply(&vac).unwrap())
            .unwrap();
        assert!((s.a() - CMatrix::identity(4, 4)).camax() < 1e-12);
        assert!(s.b().camax() < 1e-12);
    }

    #[test]
    fn retarder_with_zero_phase_is_identity() {
        for gamma in [0.0, 0.3, 1.0, 2.5] {
            let j = make_waveplate(&WaveplateParams {
                phase: 0.0,
                axis: gamma,
            });
            assert!((j - CMatrix::identity(4, 4)).camax() < 1e-16);
        }
    }

    #[test]
    fn quarter_wave_at_zero() {
        let j = jones_block(&WaveplateParams::quarter_wave(0.0));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((j[(0, 0)] - c(r, -r)).norm() < 1e-15);
        assert!((j[(1, 1)] - c(r, r)).norm() < 1e-15);
        assert!(j[(0, 1)].norm() < 1e-16 && j[(1, 0)].norm() < 1e-16);
    }

    #[test]
    fn half_wave_at_45_swaps_polarizations() {
        let j = jones_block(&WaveplateParams::half_wave(PI / 4.0));
        assert!(j[(0, 0)].norm() < 1e-15 && j[(1, 1)].norm() < 1e-15);
        assert!((j[(0, 1)] - c(0.0, -1.0)).norm() < 1e-15);
        assert!((j[(1, 0)] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn quarter_wave_at_pi_over_8_matches_direct_evaluation() {
        // independent evaluation of the retarder entries
        let psi: f64 = PI / 2.0;
        let gamma: f64 = PI / 8.0;
        let h = (psi / 2.0).cos();
        let q = (psi / 2.0).sin();
        let a = (2.0 * gamma).cos();
        let b = (2.0 * gamma).sin();
        let expect = [[c(h, -a * q), c(0.0, -b * q)], [c(0.0, -b * q), c(h, a * q)]];
        let j = make_waveplate(&WaveplateParams {
            phase: psi,
            axis: gamma,
        });
        for base in [0, 2] {
            for r in 0..2 {
                for k in 0..2 {
                    assert!((j[(base + r, base + k)] - expect[r][k]).norm() <= 1e-15);
                }
            }
        }
        // no signal/idler cross terms
        assert_eq!(j[(0, 2)], c(0.0, 0.0));
        assert_eq!(j[(3, 1)], c(0.0, 0.0));
    }

    #[test]
    fn phase_plate_cases() {
        let id = make_phase_plate(&PhasePlateParams::new(0.0, 0.0, 0.0));
        assert!((id - CMatrix::identity(4, 4)).camax() < 1e-16);

        let flip = make_phase_plate(&PhasePlateParams::new(0.0, PI, 0.0));
        for m in [ModeIndex::SIGNAL_V, ModeIndex::IDLER_V] {
            assert!((flip[(m.index(), m.index())] - c(0.0, -1.0)).norm() < 1e-15);
        }
        for m in [ModeIndex::SIGNAL_H, ModeIndex::IDLER_H] {
            assert!((flip[(m.index(), m.index())] - c(1.0, 0.0)).norm() < 1e-15);
        }

        let su = make_phase_plate(&PhasePlateParams::new(PI, 0.0, 0.0));
        for m in [ModeIndex::IDLER_H, ModeIndex::IDLER_V] {
            assert!((su[(m.index(), m.index())] - c(-1.0, 0.0)).norm() < 1e-15);
        }
        assert!((su[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn phase_plate_params_wrap() {
        let p = PhasePlateParams::new(-0.5, 7.0, TAU);
        assert!((p.phi_su - (TAU - 0.5)).abs() < 1e-15);
        assert!((p.alpha - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(p.beta, 0.0);
    }

    #[test]
    fn bell_table() {
        assert_eq!(
            bell_config(BellState::PhiPlus),
            BellSettings {
                alpha: 0.0,
                beta: 0.0,
                theta: 0.0
            }
        );
        assert_eq!(
            bell_config(BellState::PhiMinus),
            BellSettings {
                alpha: PI,
                beta: 0.0,
                theta: 0.0
            }
        );
        assert_eq!(
            bell_config(BellState::PsiPlus),
            BellSettings {
                alpha: PI,
                beta: 0.0,
                theta: PI / 8.0
            }
        );
        assert_eq!(
            bell_config(BellState::PsiMinus),
            BellSettings {
                alpha: PI,
                beta: PI,
                theta: PI / 8.0
            }
        );
    }

    #[test]
    fn pump_sign_serde() {
        assert_eq!(PumpSign::try_from(-1).unwrap(), PumpSign::Minus);
        assert!(PumpSign::try_from(0).is_err());
    }

    proptest! {
        #[test]
        fn waveplates_are_unitary(psi in -10.0..10.0f64, gamma in -10.0..10.0f64) {
            let p = WaveplateParams { phase: psi, axis: gamma };
            prop_assert!(unitarity_residual(&make_waveplate(&p)) < 1e-12);
            prop_assert!((jones_block(&p).determinant().norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn axis_swap_reverses_phase(psi in -10.0..10.0f64, gamma in -10.0..10.0f64) {
            let a = jones_block(&WaveplateParams { phase: psi, axis: gamma + PI / 2.0 });
            let b = jones_block(&WaveplateParams { phase: -psi, axis: gamma });
            prop_assert!((a - b).camax() < 1e-12);
        }

        #[test]
        fn opa_is_symplectic(g in 0.0..3.0f64, pol_h: bool, plus: bool) {
            let p = OpaParams {
                gain: g,
                polarization: if pol_h { Polarization::H } else { Polarization::V },
                sign: if plus { PumpSign::Plus } else { PumpSign::Minus },
            };
            let (u, v) = make_opa(&p);
            let r = bogoliubov_residuals(&u, &v);
            prop_assert!(r.commutator < 1e-12 * (1.0 + g.cosh().powi(2)));
            prop_assert!(r.symmetry == 0.0);
        }

        #[test]
        fn phase_plates_are_unitary(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
            prop_assert!(unitarity_residual(&make_phase_plate(&PhasePlateParams::new(a, b, c))) < 1e-12);
        }
    }
}
