//! Sample-size and iteration sweeps, quantile curves and exponent fits.

mod fit;
mod sweep;

use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::problems::{Dataset, PopRiskMode, Problem, RiskValue};
use crate::scalar::Scalar;

pub use fit::{
    compare_to_theory, compare_with_slack, fit_loglog, theorem_entry, theorem_table, Axis, EstimatorKind,
    LogCorrection, RateFit, TRuleRequirement, TheoremEntry, TheorySetup, Verdict, VerdictKind, DEFAULT_SLACK,
};
pub use sweep::{
    metric_quantile_curve, opt_error_sweep, quantile_curve, run_sweep, Estimator, Metric, NoiseRule, SweepConfig,
    SweepRow, SweepTable, TRule, T_CAP,
};

/// `F(w) − F*`; closed forms are clamped at zero, Monte-Carlo values carry their error bar.
pub fn excess_risk<T: Scalar>(problem: &Problem<T>, w: &[T]) -> Result<RiskValue<T>> {
    problem.check_domain(w)?;
    Ok(match problem.pop_risk_mode() {
        PopRiskMode::ClosedForm => RiskValue {
            value: problem.exact_excess_risk(w).max(T::zero()),
            stderr: None,
            samples: None,
        },
        PopRiskMode::MonteCarlo { .. } => {
            let r = problem.population_risk(w)?;
            RiskValue {
                value: r.value - problem.f_star(),
                ..r
            }
        }
    })
}

/// `‖∇F(w) − ∇F_S(w)‖` with the exact population gradient.
pub fn gradient_deviation<T: Scalar>(problem: &Problem<T>, data: &Dataset<T>, w: &[T]) -> T {
    dist(&problem.exact_gradient(w), &problem.empirical_gradient(data, w))
}

/// `B ln(2/δ)/n + √(2σ² ln(2/δ)/n)`.
pub fn vector_bernstein_bound<T: Scalar>(bstar: T, sigma_sq_at_opt: T, n: usize, delta: T) -> Result<T> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::config(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(Error::config("n must be positive"));
    }
    if !(bstar >= T::zero() && sigma_sq_at_opt >= T::zero()) {
        return Err(Error::config("B* and sigma^2 must be nonnegative"));
    }
    let l = (T::of(2.0) / delta).ln();
    let nt = T::of_usize(n);
    Ok(bstar * l / nt + (T::of(2.0) * sigma_sq_at_opt * l / nt).sqrt())
}
