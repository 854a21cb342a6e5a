//! The full optical chain: seeds, generating amplifiers, polarization stack
//! with the birefringent target, phases and loss, optional basis rotation,
//! and the measurement amplifiers.
//!
//! ```text
//! (0) seeds ─ OPA-H, OPA-V ─(1)─ λ/4 · target · λ/4 ─(2)─ phases, loss [, λ/2 @ π/8] ─(3)─ OPA-H, OPA-V ─(4)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_8;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elements::{
    bell_config, embed_polarization_block, jones_block, make_opa, make_phase_plate, make_waveplate, retarder_block,
    BellState, OpaParams, OpticalElement, PhasePlateParams, PumpSign, WaveplateParams,
};
use crate::gaussian::{CMatrix, EngineError, Frequency, GaussianState, ModeIndex, Polarization, PHYSICAL_MODES};

/// A configuration value that failed validation, with the path of the
/// offending field.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid configuration")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Where the birefringent target sits relative to the two quarter-wave plates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    BeforePlates,
    #[default]
    BetweenPlates,
    AfterPlates,
}

impl Placement {
    pub const ALL: [Placement; 3] = [
        Placement::BeforePlates,
        Placement::BetweenPlates,
        Placement::AfterPlates,
    ];
}

/// Polarization basis of detection relative to the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Basis {
    #[default]
    HV,
    AD,
}

/// Which output modes are summed into the measured photon number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSpec {
    pub modes: BTreeSet<ModeIndex>,
    pub basis: Basis,
}

impl Default for DetectionSpec {
    fn default() -> Self {
        DetectionSpec {
            modes: BTreeSet::from([ModeIndex::IDLER_H]),
            basis: Basis::HV,
        }
    }
}

impl DetectionSpec {
    pub fn new(modes: impl IntoIterator<Item = ModeIndex>, basis: Basis) -> Self {
        DetectionSpec {
            modes: modes.into_iter().collect(),
            basis,
        }
    }

    pub fn indices(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.index()).collect()
    }
}

/// Complete description of one working point of the experiment.
///
/// Angles are in radians. `loss` is the intensity loss `l` applied to every
/// mode between the polarization stack and the measurement amplifiers; the
/// per-frequency amplitude transmissions default to `√(1−l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterferometerConfig {
    pub gain: f64,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transmission_idler: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transmission_signal: Option<f64>,
    pub seed: BTreeMap<ModeIndex, Complex64>,
    pub bell: BellState,
    pub placement: Placement,
    /// Birefringent phase of the target.
    pub phi_b: f64,
    /// Principal-axis angle of the target.
    pub delta: f64,
    pub phi_su: f64,
    pub measurement_pump_sign: PumpSign,
    pub detection: DetectionSpec,
}

impl Default for InterferometerConfig {
    fn default() -> Self {
        InterferometerConfig {
            gain: 1.0,
            loss: 0.0,
            transmission_idler: None,
            transmission_signal: None,
            seed: BTreeMap::from([(ModeIndex::SIGNAL_H, Complex64::new(100.0, 0.0))]),
            bell: BellState::PhiPlus,
            placement: Placement::BetweenPlates,
            phi_b: 0.0,
            delta: std::f64::consts::FRAC_PI_2,
            phi_su: 0.0,
            measurement_pump_sign: PumpSign::Plus,
            detection: DetectionSpec::default(),
        }
    }
}

impl InterferometerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(name, format!("must be finite, got {v}")))
            }
        };
        finite("gain", self.gain)?;
        if self.gain < 0.0 {
            return Err(ConfigError::new("gain", format!("must be >= 0, got {}", self.gain)));
        }
        finite("loss", self.loss)?;
        if !(0.0..1.0).contains(&self.loss) {
            return Err(ConfigError::new(
                "loss",
                format!("must lie in [0, 1), got {}", self.loss),
            ));
        }
        for (name, t) in [
            ("transmission_idler", self.transmission_idler),
            ("transmission_signal", self.transmission_signal),
        ] {
            if let Some(t) = t {
                if !(0.0..=1.0).contains(&t) {
                    return Err(ConfigError::new(name, format!("must lie in [0, 1], got {t}")));
                }
            }
        }
        finite("phi_b", self.phi_b)?;
        finite("delta", self.delta)?;
        finite("phi_su", self.phi_su)?;
        for (mode, amp) in &self.seed {
            if !amp.is_finite() {
                return Err(ConfigError::new(format!("seed.{mode}"), "amplitude must be finite"));
            }
        }
        if self.detection.modes.is_empty() {
            return Err(ConfigError::new("detection.modes", "must not be empty"));
        }
        Ok(())
    }

    /// Amplitude transmissions `(t_signal, t_idler)`.
    pub fn transmissions(&self) -> (f64, f64) {
        let t = (1.0 - self.loss).sqrt();
        (
            self.transmission_signal.unwrap_or(t),
            self.transmission_idler.unwrap_or(t),
        )
    }
}

/// Ordered elements up to plane (3) and after it.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelinePlan {
    pub preparation: Vec<OpticalElement>,
    pub measurement: Vec<OpticalElement>,
}

fn opa_pair(gain: f64, sign: PumpSign) -> [OpticalElement; 2] {
    [Polarization::H, Polarization::V].map(|polarization| {
        OpticalElement::Opa(OpaParams {
            gain,
            polarization,
            sign,
        })
    })
}

/// Lays out the element sequence for a configuration.
pub fn plan(cfg: &InterferometerConfig) -> Result<PipelinePlan, ConfigError> {
    cfg.validate()?;
    let bell = bell_config(cfg.bell);
    let mut prep = Vec::with_capacity(16);

    for (&mode, &amplitude) in &cfg.seed {
        prep.push(OpticalElement::Seed { mode, amplitude });
    }
    prep.extend(opa_pair(cfg.gain, PumpSign::Plus));

    let plate = OpticalElement::Waveplate(WaveplateParams::quarter_wave(bell.theta));
    let target = OpticalElement::Waveplate(WaveplateParams {
        phase: cfg.phi_b,
        axis: cfg.delta,
    });
    let stack = match cfg.placement {
        Placement::BeforePlates => [target, plate.clone(), plate],
        Placement::BetweenPlates => [plate.clone(), target, plate],
        Placement::AfterPlates => [plate.clone(), plate, target],
    };
    prep.extend(stack);

    prep.push(OpticalElement::PhasePlate(PhasePlateParams::new(
        cfg.phi_su, bell.alpha, bell.beta,
    )));
    let (t_signal, t_idler) = cfg.transmissions();
    for mode in ModeIndex::ALL {
        let transmission = match mode.frequency {
            Frequency::Signal => t_signal,
            Frequency::Idler => t_idler,
        };
        prep.push(OpticalElement::Loss { mode, transmission });
    }
    if cfg.detection.basis == Basis::AD {
        prep.push(OpticalElement::Waveplate(WaveplateParams::half_wave(FRAC_PI_8)));
    }

    Ok(PipelinePlan {
        preparation: prep,
        measurement: opa_pair(cfg.gain, cfg.measurement_pump_sign).to_vec(),
    })
}

/// Output state at plane (4) and the snapshot at plane (3).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub output: GaussianState,
    pub plane3: GaussianState,
}

pub fn run_plan(plan: &PipelinePlan) -> Result<PipelineRun, EngineError> {
    let mut state = GaussianState::vacuum(PHYSICAL_MODES)?;
    for el in &plan.preparation {
        state = el.apply(&state)?;
    }
    let plane3 = state.clone();
    for el in &plan.measurement {
        state = el.apply(&state)?;
    }
    Ok(PipelineRun { output: state, plane3 })
}

pub fn build_and_run(cfg: &InterferometerConfig) -> Result<PipelineRun, PipelineError> {
    let plan = plan(cfg)?;
    Ok(run_plan(&plan)?)
}

/// Total photon number over the four physical modes at plane (3); the
/// shot-noise reference.
pub fn total_intensity_at_plane3(plane3: &GaussianState) -> f64 {
    (0..PHYSICAL_MODES)
        .map(|m| plane3.mean_photons(m).expect("plane-3 state has four modes"))
        .sum()
}

/// `(U₂U₁ + V₂·conj(V₁), U₂V₁ + V₂·conj(U₁))`: element 1 followed by 2.
fn compose_bogoliubov(first: (CMatrix, CMatrix), second: (CMatrix, CMatrix)) -> (CMatrix, CMatrix) {
    let (u1, v1) = first;
    let (u2, v2) = second;
    (
        &u2 * &u1 + &v2 * v1.map(|z| z.conj()),
        &u2 * &v1 + &v2 * u1.map(|z| z.conj()),
    )
}

fn opa_pair_matrices(gain: f64, sign: PumpSign) -> (CMatrix, CMatrix) {
    let [h, v] = [Polarization::H, Polarization::V].map(|polarization| {
        make_opa(&OpaParams {
            gain,
            polarization,
            sign,
        })
    });
    compose_bogoliubov(h, v)
}

/// The chain with everything that does not depend on `(φ_b, φ_su)` worked
/// out once: the state after the first amplifier pair, the fused measurement
/// pair, and the fixed plates. Sweeps and optimizers re-evaluate only the
/// phase-dependent tail.
#[derive(Debug, Clone)]
pub struct CompiledPipeline {
    prefix: GaussianState,
    placement: Placement,
    plate: Matrix2<Complex64>,
    delta: f64,
    alpha: f64,
    beta: f64,
    transmissions: [f64; PHYSICAL_MODES],
    rotation: Option<CMatrix>,
    measurement: (CMatrix, CMatrix),
}

impl CompiledPipeline {
    pub fn new(cfg: &InterferometerConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let bell = bell_config(cfg.bell);
        let mut prefix = GaussianState::vacuum(PHYSICAL_MODES)?;
        for (&mode, &amp) in &cfg.seed {
            prefix = prefix.displace(mode, amp)?;
        }
        let (u, v) = opa_pair_matrices(cfg.gain, PumpSign::Plus);
        prefix = prefix.apply_bogoliubov(&u, &v)?;
        let (t_signal, t_idler) = cfg.transmissions();
        let transmissions = ModeIndex::ALL.map(|m| match m.frequency {
            Frequency::Signal => t_signal,
            Frequency::Idler => t_idler,
        });
        let rotation =
            (cfg.detection.basis == Basis::AD).then(|| make_waveplate(&WaveplateParams::half_wave(FRAC_PI_8)));
        Ok(CompiledPipeline {
            prefix,
            placement: cfg.placement,
            plate: jones_block(&WaveplateParams::quarter_wave(bell.theta)),
            delta: cfg.delta,
            alpha: bell.alpha,
            beta: bell.beta,
            transmissions,
            rotation,
            measurement: opa_pair_matrices(cfg.gain, cfg.measurement_pump_sign),
        })
    }

    /// `J = phases · stack(target)`; linear in `target`.
    fn passive(&self, target: &Matrix2<Complex64>, phi_su: f64) -> CMatrix {
        let q = &self.plate;
        let stack = match self.placement {
            Placement::BeforePlates => q * q * target,
            Placement::BetweenPlates => q * target * q,
            Placement::AfterPlates => target * q * q,
        };
        make_phase_plate(&PhasePlateParams::new(phi_su, self.alpha, self.beta)) * embed_polarization_block(&stack)
    }

    /// Same result as [`build_and_run`] with `phi_b` and `phi_su` replaced.
    pub fn run_at(&self, phi_b: f64, phi_su: f64) -> Result<PipelineRun, EngineError> {
        let target = jones_block(&WaveplateParams {
            phase: phi_b,
            axis: self.delta,
        });
        let j = self.passive(&target, phi_su);

        let mut state = self.prefix.apply_passive(&j)?.apply_losses(&self.transmissions)?;
        if let Some(r) = &self.rotation {
            state = state.apply_passive(r)?;
        }
        let plane3 = state.clone();
        let (u, v) = &self.measurement;
        Ok(PipelineRun {
            output: state.apply_bogoliubov(u, v)?,
            plane3,
        })
    }

    /// `⟨N⟩(φ_b + h) − ⟨N⟩(φ_b − h)` for the modes in `subset`.
    ///
    /// The output moments are real-linear in the passive matrix `J`, so with
    /// `x± = F(J±)` the difference is `Σ Re((x₊ − x₋)·conj(x₊ + x₋))` where
    /// `x₊ − x₋ = F(J₊ − J₋)`. `J₊ − J₋` is formed analytically, which avoids
    /// subtracting two nearly equal photon numbers.
    pub fn mean_difference(
        &self,
        phi_b: f64,
        phi_su: f64,
        h: f64,
        subset: &[usize],
    ) -> Result<MeanDifference, EngineError> {
        if subset.is_empty() {
            return Err(EngineError::EmptySubset);
        }
        if let Some(&mode) = subset.iter().find(|&&m| m >= PHYSICAL_MODES) {
            return Err(EngineError::ModeOutOfRange {
                mode,
                n_modes: PHYSICAL_MODES,
            });
        }
        let (s, c) = (phi_b / 2.0).sin_cos();
        let (sh, ch) = (h / 2.0).sin_cos();
        let sum = retarder_block(2.0 * c * ch, 2.0 * s * ch, self.delta);
        let diff = retarder_block(-2.0 * s * sh, 2.0 * c * sh, self.delta);

        let mut m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            PHYSICAL_MODES,
            self.transmissions.iter().map(|&t| Complex64::new(t, 0.0)),
        ));
        if let Some(r) = &self.rotation {
            m = r * m;
        }
        let (u, v) = &self.measurement;
        let rows: Vec<usize> = subset.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let u_s = u.select_rows(&rows);
        let v_s = v.select_rows(&rows);
        let (a0, b0, d0) = (self.prefix.a(), self.prefix.b(), self.prefix.displacement());

        // rows of the output B and d before any cancellation, and the entrywise
        // magnitude bound |U||X||B0| + |V||X||A0| used for the rounding estimate
        let image = |j: &CMatrix| {
            let x = &m * j;
            let xb = &x * b0;
            let xa = &x * a0;
            let xd = &x * d0;
            let b = &u_s * &xb + &v_s * xa.map(|z| z.conj());
            let d = &u_s * &xd + &v_s * xd.map(|z| z.conj());
            let (au, av) = (u_s.map(|w| w.norm()), v_s.map(|w| w.norm()));
            let bound_b = &au * xb.map(|w| w.norm()) + &av * xa.map(|w| w.norm());
            let bound_d = (&au + &av) * xd.map(|w| w.norm());
            (b, d, bound_b, bound_d)
        };
        let (bs, ds, bbs, bds) = image(&self.passive(&sum, phi_su));
        let (bd, dd, bbd, bdd) = image(&self.passive(&diff, phi_su));

        let mut value = 0.0;
        let mut magnitude = 0.0;
        for (x, y) in bd.iter().zip(bs.iter()).chain(dd.iter().zip(ds.iter())) {
            value += (x * y.conj()).re;
        }
        for (x, y) in bbd.iter().zip(bbs.iter()).chain(bdd.iter().zip(bds.iter())) {
            magnitude += x * y;
        }
        Ok(MeanDifference { value, magnitude })
    }
}

/// Result of [`CompiledPipeline::mean_difference`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanDifference {
    pub value: f64,
    /// Sum of the magnitudes of the products that make up `value`; the
    /// rounding error of `value` is a small multiple of `ε · magnitude`.
    pub magnitude: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn seeded(amp: f64) -> BTreeMap<ModeIndex, Complex64> {
        BTreeMap::from([(ModeIndex::SIGNAL_H, Complex64::new(amp, 0.0))])
    }

    fn all_modes() -> Vec<usize> {
        (0..4).collect()
    }

    #[test]
    fn element_order_between_plates() {
        let cfg = InterferometerConfig {
            detection: DetectionSpec::new([ModeIndex::IDLER_H], Basis::AD),
            ..Default::default()
        };
        let p = plan(&cfg).unwrap();
        let kinds: Vec<&str> = p
            .preparation
            .iter()
            .map(|e| match e {
                OpticalElement::Seed { .. } => "seed",
                OpticalElement::Opa(_) => "opa",
                OpticalElement::Waveplate(w) if w.phase == PI / 2.0 => "qwp",
                OpticalElement::Waveplate(w) if w.phase == PI && w.axis == FRAC_PI_8 => "ad",
                OpticalElement::Waveplate(_) => "target",
                OpticalElement::PhasePlate(_) => "phase",
                OpticalElement::Loss { .. } => "loss",
            })
            .collect();
        assert_eq!(
            kinds,
            ["seed", "opa", "opa", "qwp", "target", "qwp", "phase", "loss", "loss", "loss", "loss", "ad"]
        );
        assert_eq!(p.measurement.len(), 2);
    }

    #[test]
    fn nothing_happens_without_gain_or_seed() {
        let cfg = InterferometerConfig {
            gain: 0.0,
            seed: BTreeMap::new(),
            phi_b: 0.4,
            delta: 0.3,
            ..Default::default()
        };
        let run = build_and_run(&cfg).unwrap();
        let st = run.output.photon_statistics(&all_modes()).unwrap();
        assert_eq!(st.mean, 0.0);
        assert_eq!(st.variance, 0.0);
        assert_eq!(total_intensity_at_plane3(&run.plane3), 0.0);
    }

    #[test]
    fn lossless_dark_fringe_without_target_phase() {
        // with θ = 0 the plate pair is diag(-i, i) per frequency, so φ_su = 0
        // de-amplifies both polarizations
        for g in [0.3, 1.0, 2.0] {
            let cfg = InterferometerConfig {
                gain: g,
                seed: BTreeMap::new(),
                ..Default::default()
            };
            let run = build_and_run(&cfg).unwrap();
            let n = run.output.photon_statistics(&all_modes()).unwrap().mean;
            assert!(n.abs() < 1e-10, "g={g}: {n}");
        }
    }

    #[test]
    fn passive_chain_conserves_seed_photons() {
        let cfg = InterferometerConfig {
            gain: 0.0,
            seed: seeded(10.0),
            phi_b: 1.1,
            delta: 0.4,
            phi_su: 2.0,
            bell: BellState::PsiMinus,
            ..Default::default()
        };
        let run = build_and_run(&cfg).unwrap();
        assert!((total_intensity_at_plane3(&run.plane3) - 100.0).abs() < 1e-11);
    }

    #[test]
    fn placements_coincide_without_target_phase() {
        for bell in BellState::ALL {
            let base = InterferometerConfig {
                gain: 0.9,
                loss: 0.1,
                bell,
                phi_b: 0.0,
                delta: 0.7,
                phi_su: 0.3,
                ..Default::default()
            };
            let runs: Vec<_> = Placement::ALL
                .iter()
                .map(|&placement| {
                    build_and_run(&InterferometerConfig {
                        placement,
                        ..base.clone()
                    })
                    .unwrap()
                })
                .collect();
            for r in &runs[1..] {
                assert!((r.output.a() - runs[0].output.a()).camax() < 1e-12);
                assert!((r.output.b() - runs[0].output.b()).camax() < 1e-12);
                assert!((r.output.displacement() - runs[0].output.displacement()).camax() < 1e-12);
            }
        }
    }

    #[test]
    fn output_is_periodic_in_phases_and_axis() {
        let base = InterferometerConfig {
            gain: 0.8,
            loss: 0.2,
            seed: seeded(3.0),
            bell: BellState::PsiPlus,
            phi_b: 0.37,
            delta: 0.81,
            phi_su: 1.3,
            detection: DetectionSpec::new([ModeIndex::IDLER_V, ModeIndex::SIGNAL_V], Basis::HV),
            ..Default::default()
        };
        let idx = base.detection.indices();
        let mean = |c: &InterferometerConfig| build_and_run(c).unwrap().output.photon_statistics(&idx).unwrap().mean;
        let n0 = mean(&base);
        let shifted = [
            InterferometerConfig {
                phi_b: base.phi_b + TAU,
                ..base.clone()
            },
            InterferometerConfig {
                phi_su: base.phi_su + TAU,
                ..base.clone()
            },
            InterferometerConfig {
                delta: base.delta + PI,
                ..base.clone()
            },
        ];
        for c in &shifted {
            assert!((mean(c) - n0).abs() < 1e-9 * n0.max(1.0));
        }
    }

    #[test]
    fn compiled_tail_matches_element_chain() {
        for (k, bell) in BellState::ALL.into_iter().enumerate() {
            for placement in Placement::ALL {
                for basis in [Basis::HV, Basis::AD] {
                    let cfg = InterferometerConfig {
                        gain: 1.3,
                        loss: 0.15,
                        transmission_idler: Some(0.8),
                        seed: BTreeMap::from([
                            (ModeIndex::SIGNAL_H, Complex64::new(4.0, 1.0)),
                            (ModeIndex::IDLER_V, Complex64::new(0.0, -0.5)),
                        ]),
                        bell,
                        placement,
                        phi_b: 0.3 + k as f64,
                        delta: 0.2 * k as f64 + 0.1,
                        phi_su: 5.0 - k as f64,
                        measurement_pump_sign: if k % 2 == 0 { PumpSign::Plus } else { PumpSign::Minus },
                        detection: DetectionSpec::new([ModeIndex::IDLER_H], basis),
                        ..Default::default()
                    };
                    let slow = build_and_run(&cfg).unwrap();
                    let fast = CompiledPipeline::new(&cfg)
                        .unwrap()
                        .run_at(cfg.phi_b, cfg.phi_su)
                        .unwrap();
                    for (x, y) in [(&slow.output, &fast.output), (&slow.plane3, &fast.plane3)] {
                        let scale = x.b().camax().max(x.displacement().camax()).max(1.0);
                        assert!((x.a() - y.a()).camax() < 1e-12 * scale);
                        assert!((x.b() - y.b()).camax() < 1e-12 * scale);
                        assert!((x.displacement() - y.displacement()).camax() < 1e-12 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn mean_difference_matches_direct_difference() {
        for (k, bell) in BellState::ALL.into_iter().enumerate() {
            for basis in [Basis::HV, Basis::AD] {
                let cfg = InterferometerConfig {
                    gain: 1.1,
                    loss: 0.1,
                    seed: seeded(3.0),
                    bell,
                    placement: Placement::ALL[k % 3],
                    delta: 0.4 + k as f64,
                    detection: DetectionSpec::new([ModeIndex::IDLER_H], basis),
                    ..Default::default()
                };
                let c = CompiledPipeline::new(&cfg).unwrap();
                let mean = |phi: f64, modes: &[usize]| {
                    c.run_at(phi, 0.7)
                        .unwrap()
                        .output
                        .photon_statistics(modes)
                        .unwrap()
                        .mean
                };
                for modes in [vec![2], vec![0, 2], all_modes()] {
                    for h in [0.3, 0.01] {
                        let direct = mean(0.2 + h, &modes) - mean(0.2 - h, &modes);
                        let d = c.mean_difference(0.2, 0.7, h, &modes).unwrap();
                        assert!(
                            (d.value - direct).abs() < 1e-9 * mean(0.2, &modes),
                            "{bell:?} {modes:?} {h}"
                        );
                        assert!(d.magnitude >= d.value.abs());
                    }
                }
            }
        }
        let c = CompiledPipeline::new(&InterferometerConfig::default()).unwrap();
        assert!(matches!(
            c.mean_difference(0.0, 0.0, 0.1, &[]),
            Err(EngineError::EmptySubset)
        ));
        assert!(matches!(
            c.mean_difference(0.0, 0.0, 0.1, &[4]),
            Err(EngineError::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_configs_report_field() {
        let bad = [
            (
                InterferometerConfig {
                    loss: 1.0,
                    ..Default::default()
                },
                "loss",
            ),
            (
                InterferometerConfig {
                    gain: -0.1,
                    ..Default::default()
                },
                "gain",
            ),
            (
                InterferometerConfig {
                    phi_b: f64::NAN,
                    ..Default::default()
                },
                "phi_b",
            ),
            (
                InterferometerConfig {
                    transmission_idler: Some(1.5),
                    ..Default::default()
                },
                "transmission_idler",
            ),
            (
                InterferometerConfig {
                    detection: DetectionSpec::new([], Basis::HV),
                    ..Default::default()
                },
                "detection.modes",
            ),
        ];
        for (cfg, field) in bad {
            match build_and_run(&cfg) {
                Err(PipelineError::Config(e)) => assert_eq!(e.field, field),
                other => panic!("{field}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn per_frequency_transmission_override() {
        let cfg = InterferometerConfig {
            loss: 0.19,
            transmission_idler: Some(0.5),
            ..Default::default()
        };
        let (ts, ti) = cfg.transmissions();
        assert!((ts - 0.9).abs() < 1e-15);
        assert_eq!(ti, 0.5);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = InterferometerConfig {
            transmission_signal: Some(0.8),
            detection: DetectionSpec::new([ModeIndex::IDLER_H, ModeIndex::SIGNAL_H], Basis::AD),
            measurement_pump_sign: PumpSign::Minus,
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: InterferometerConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<InterferometerConfig>("gain = 1.0\ngian = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("gian"), "{err}");
    }
}
