//! SGD with replacement sampling, coupled runs on neighbouring datasets, and
//! empirical risk minimization.

pub(crate) mod descent;
mod erm;
mod schedule;
mod sgd;

pub use erm::{erm_solve, erm_solve_with, optimization_error, ErmMethod, ErmOptions, ErmSolution, OptimizationError};
pub use schedule::{step_size, StepSchedule};
pub use sgd::{
    coupled_sgd_last, coupled_sgd_run, replay_audit, sgd_last_iterate, sgd_run, write_trajectory_csv, SgdOutcome,
    Trajectory,
};
