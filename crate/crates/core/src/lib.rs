//! Simulation of a dual-polarization SU(1,1) interferometer used as a
//! birefringence sensor.

pub mod elements;
pub mod fock;
pub mod gaussian;
pub mod metrology;
pub mod pipeline;

pub use elements::{BellState, OpticalElement, PumpSign};
pub use gaussian::{
    CMatrix, EngineError, Frequency, GaussianState, ModeIndex, PhotonStatistics, Polarization, PHYSICAL_MODES,
};
pub use metrology::{optimize_phi_su, sensitivity_at, Estimator, MetrologyError, SensitivityResult};
pub use pipeline::{build_and_run, Basis, ConfigError, DetectionSpec, InterferometerConfig, PipelineError, Placement};
pub mod sweep;
pub use sweep::{
    run_map, run_phase_sweep, run_phi_optimization, run_validation, Axis, ExperimentConfig, Parameter, SensitivityMap,
    SweepError, SweepRequest, SweepTable, ValidationReport,
};
