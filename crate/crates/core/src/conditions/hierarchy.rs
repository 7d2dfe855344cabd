use serde::{Deserialize, Serialize};

use super::{certify, estimate_constant, CertificateResult, Condition, ConstantKind, GridSpec, Target};
use crate::error::{Error, Result};
use crate::problems::{PopRiskMode, Problem};
use crate::rng::{derive_seed, tag};
use crate::scalar::Scalar;

/// One constant per curvature condition, in chain order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConstants<T> {
    pub sc: T,
    pub wsc: T,
    pub rsi: T,
    pub eb: T,
    pub pl: T,
    pub qg: T,
}

impl<T: Scalar> ChainConstants<T> {
    /// Constants implied by `μ`-strong convexity on a ball of radius `R`.
    ///
    /// The error bound is the quadratic form `‖∇F‖ ≥ μ′‖w − w*‖²`, which
    /// `‖∇F‖ ≥ μ‖w − w*‖` implies with `μ′ = μ/R` on the ball.
    pub fn from_strong_convexity(mu: T, radius: T) -> Self {
        ChainConstants {
            sc: mu,
            wsc: mu,
            rsi: mu,
            eb: mu / radius,
            pl: mu,
            qg: mu,
        }
    }

    fn ordered(&self) -> [(Condition, T); 6] {
        [
            (Condition::Sc, self.sc),
            (Condition::Wsc, self.wsc),
            (Condition::Rsi, self.rsi),
            (Condition::Eb, self.eb),
            (Condition::Pl, self.pl),
            (Condition::Qg, self.qg),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyAudit<T> {
    /// SC, WSC, RSI, EB, PL, QG in that order.
    pub results: Vec<CertificateResult<T>>,
    pub first_failure: Option<Condition>,
    /// For convex losses with a passing QG: the grid PL estimate and its certificate.
    pub convex_pl: Option<(T, Option<CertificateResult<T>>)>,
}

impl<T: Scalar> HierarchyAudit<T> {
    pub fn result(&self, condition: Condition) -> Option<&CertificateResult<T>> {
        self.results.iter().find(|r| r.condition == condition)
    }

    pub fn all_passed(&self) -> bool {
        self.first_failure.is_none()
    }
}

pub fn hierarchy_audit<T: Scalar>(
    problem: &Problem<T>,
    constants: &ChainConstants<T>,
    probes: usize,
    seed: u64,
) -> Result<HierarchyAudit<T>> {
    if problem.pop_risk_mode() != PopRiskMode::ClosedForm {
        return Err(Error::config("hierarchy audit needs a closed-form population risk"));
    }
    let mut results = Vec::with_capacity(6);
    for (condition, constant) in constants.ordered() {
        let s = derive_seed(seed, &[tag(condition.name())]);
        results.push(certify(condition, Target::PopulationF, problem, None, constant, probes, s)?);
    }
    let first_failure = results.iter().find(|r| !r.passed).map(|r| r.condition);
    let qg_passed = results.last().is_some_and(|r| r.passed);
    let convex_pl = if problem.kind().is_convex() && qg_passed {
        let d = problem.dimension() as f64;
        let step = 2.0 * problem.radius().as_f64() / 20_000f64.powf(1.0 / d).floor().max(2.0);
        let estimate = estimate_constant(ConstantKind::Pl, problem, None, &GridSpec::with_step(step))?;
        let record = if estimate > T::zero() {
            let s = derive_seed(seed, &[tag("convex_pl")]);
            Some(certify(Condition::Pl, Target::PopulationF, problem, None, estimate, probes, s)?)
        } else {
            None
        };
        Some((estimate, record))
    } else {
        None
    };
    Ok(HierarchyAudit {
        results,
        first_failure,
        convex_pl,
    })
}
