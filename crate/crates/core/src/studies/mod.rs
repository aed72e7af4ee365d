//! Seeded Monte Carlo studies of the estimators.

mod descriptor;
mod report;
mod run;

pub use descriptor::{
    default_markers, DeflectionMode, StudyDescriptor, StudyKind, WorkspaceGrid, DEFAULT_TRIALS, DEFAULT_VELOCITY_DT,
};
pub use report::{CellCoords, CellRecord, Provenance, StudyResult, TrialRecord};
pub use run::{run_deflection_sweep, run_noise_sweep, run_study, run_workspace_sweep, simulate_log, trial_rng};
