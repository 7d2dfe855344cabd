//! Empirical checks of excess-risk, optimization-error and stability rates
//! for empirical risk minimization and SGD.
//!
//! Problems have finite-support designs, so population risks, gradients and
//! minimizers are exact. On top of them sit solvers ([`optim`]), certifiers
//! for curvature and smoothness conditions ([`conditions`]), uniform stability
//! measurements ([`stability`]), rate sweeps and log-log fits ([`rates`]) and
//! a config-driven runner ([`experiment`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`).
//!
//! ```
//! use ratecheck::{erm_solve, sample_dataset, DesignSpec, Problem64, ProblemKind, ProblemParams};
//!
//! let params = ProblemParams {
//!     design: Some(DesignSpec::Hypercube { radius: 1.0 }),
//!     w_star: Some(vec![1.0, -0.5]),
//!     noise_level: 0.0,
//!     ..Default::default()
//! };
//! let problem = Problem64::new(ProblemKind::LeastSquares, 2, &params).unwrap();
//! let data = sample_dataset(&problem, 64, 7);
//! let fit = erm_solve(&data, &problem).unwrap();
//! assert!(problem.exact_excess_risk(&fit.w_hat) < 1e-20);
//! ```

// `!(x > 0.0)` style range checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod optim;
pub mod problems;
pub mod rates;
pub mod rng;
pub mod scalar;
pub mod stability;

pub use conditions::{certify, hierarchy_audit, CertificateResult, Condition, Target};
pub use error::{Error, Result};
pub use experiment::{emit_report, run_experiment, ExitStatus, ExperimentConfig};
pub use optim::{erm_solve, optimization_error, sgd_last_iterate, StepSchedule};
pub use problems::{sample_dataset, Dataset, DesignSpec, Problem, ProblemKind, ProblemParams, ProblemSpec, Sample};
pub use rates::{compare_to_theory, fit_loglog, quantile_curve, run_sweep, RateFit, SweepConfig, Verdict};
pub use scalar::Scalar;
pub use stability::{empirical_uniform_stability, theoretical_stability_bound, Algorithm, BoundKind};

pub type Problem64 = Problem<f64>;
pub type Problem32 = Problem<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Sample64 = Sample<f64>;
pub type Sample32 = Sample<f32>;
