//! Brute-force reference simulator on a truncated Fock space.

pub mod expm;
pub mod pipeline;
pub mod state;

pub use pipeline::{
    certified_statistics, relative_error, run_plan_fock, ConvergenceCertificate, FockRun, OracleReport, OracleSettings,
};
pub use state::{FockError, FockState};
