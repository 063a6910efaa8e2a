//! Local and global minimization of the variational energy.

mod lbfgs;
mod multistart;
mod registry;
mod sweep;

pub use lbfgs::{local_minimize, FnObjective, LocalResult, LocalSearchConfig, Objective, StopReason};
pub use multistart::{derive_seed, minimize_from, multistart, EnergyObjective, LevelSummary, MultistartConfig, MultistartOutcome};
pub use registry::{registry_update, Candidate, HistoryEntry, RunRecord};
pub use sweep::{
    initial_state, plan_jobs, refresh_observables, run_sweep, sweep_diagnostic, sweep_step, Diagnostic, Job, JobKind, JobLog,
    SweepConfig, SweepPoint, SweepState,
};
