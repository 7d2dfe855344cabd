use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::sweep::{Estimator, NoiseRule, SweepConfig, TRule};
use EstimatorKind::{Erm, Sgd};
use TRuleRequirement::{Any, NPow, NSquared};

/// The variable a rate is stated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Sample size `n`.
    N,
    /// Iteration count `T`.
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogCorrection {
    #[default]
    None,
    /// Also fit `log(q / log x)` against `log x`.
    DivideLogN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci_95: (f64, f64),
    pub r_squared: f64,
    /// Slope of `log(q / log x)`; present when the fit was asked for it.
    pub log_corrected_slope: Option<f64>,
    pub points: usize,
    pub theory_exponent: Option<f64>,
    pub theorem_id: Option<String>,
}

struct Ols {
    slope: f64,
    intercept: f64,
    se: f64,
    r_squared: f64,
}

fn ols(x: &[f64], y: &[f64]) -> Ols {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    let se = if x.len() > 2 { (sse / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    Ols {
        slope,
        intercept,
        se,
        r_squared,
    }
}

/// Ordinary least squares of `log q` on `log x` with a 95% t-interval for the slope.
pub fn fit_loglog<T: Scalar>(curve: &[(usize, T)], log_correction: LogCorrection) -> Result<RateFit> {
    if curve.len() < 3 {
        return Err(Error::config(format!("a rate fit needs at least 3 points, got {}", curve.len())));
    }
    let mut xs = Vec::with_capacity(curve.len());
    let mut ys = Vec::with_capacity(curve.len());
    for &(x, q) in curve {
        let v = q.as_f64();
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive { n: x as f64, value: v });
        }
        if x == 0 {
            return Err(Error::config("abscissa 0 has no logarithm"));
        }
        xs.push((x as f64).ln());
        ys.push(v.ln());
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("abscissae must be strictly increasing"));
    }
    let fit = ols(&xs, &ys);
    let half_width = if curve.len() > 2 && fit.se > 0.0 {
        let t = StudentsT::new(0.0, 1.0, (curve.len() - 2) as f64)
            .map_err(|e| Error::config(e.to_string()))?
            .inverse_cdf(0.975);
        t * fit.se
    } else {
        0.0
    };
    let log_corrected_slope = match log_correction {
        LogCorrection::None => None,
        LogCorrection::DivideLogN => {
            if curve[0].0 < 2 {
                return Err(Error::config("log correction needs every abscissa above 1"));
            }
            let corrected: Vec<f64> = xs.iter().zip(&ys).map(|(lx, ly)| ly - lx.ln()).collect();
            Some(ols(&xs, &corrected).slope)
        }
    };
    Ok(RateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_ci_95: (fit.slope - half_width, fit.slope + half_width),
        r_squared: fit.r_squared,
        log_corrected_slope,
        points: curve.len(),
        theory_exponent: None,
        theorem_id: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Erm,
    Sgd,
}

/// Iteration budget a theorem's rate is stated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TRuleRequirement {
    NSquared,
    /// `T = n^p` for some exponent `p` set by the smoothness or step parameter.
    NPow,
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremEntry {
    pub id: &'static str,
    pub description: &'static str,
    pub estimator: EstimatorKind,
    pub axis: Axis,
    pub exponent: f64,
    /// The rate carries `log n` factors; verdicts then use the log-corrected slope.
    pub log_correction: bool,
    pub t_rule: Option<TRuleRequirement>,
    /// Stated for instances with `F* = O(1/n)`.
    pub requires_small_fstar: bool,
    /// Stated for instances with `F* > 0` fixed in `n`.
    pub requires_fixed_noise: bool,
}

const fn entry(
    id: &'static str,
    description: &'static str,
    estimator: EstimatorKind,
    exponent: f64,
    log_correction: bool,
    t_rule: Option<TRuleRequirement>,
    requires_small_fstar: bool,
) -> TheoremEntry {
    TheoremEntry {
        id,
        description,
        estimator,
        axis: Axis::N,
        exponent,
        log_correction,
        t_rule,
        requires_small_fstar,
        requires_fixed_noise: false,
    }
}

static TABLE: [TheoremEntry; 14] = [
    entry("erm_stability_bound", "uniform stability of ERM under quadratic growth: 4L²/(nμ)", Erm, -1.0, false, None, false),
    entry("erm_stability_nonconvex", "ERM, nonconvex loss, F_S quadratic growth: O(log n / n)", Erm, -1.0, true, None, false),
    entry("erm_stability_qg", "ERM, convex Lipschitz loss, F_S quadratic growth: O(log n / n)", Erm, -1.0, true, None, false),
    entry("erm_uc_pl", "ERM, smooth loss, F PL, F* = O(1/n): O(log²(1/δ) / n²)", Erm, -2.0, false, None, true),
    entry("erm_uc_qg", "ERM, smooth convex loss, F quadratic growth, F* = O(1/n): O(log²(1/δ) / n²)", Erm, -2.0, false, None, true),
    TheoremEntry {
        requires_fixed_noise: true,
        ..entry("erm_uc_slow", "ERM, smooth loss with F* > 0 fixed: O(F* log(1/δ) / n)", Erm, -1.0, false, None, false)
    },
    entry("gradnorm_pl", "SGD gradient norm, F_S PL, F* = O(1/n): O(log²(1/δ) / n²)", Sgd, -2.0, false, Some(NPow), true),
    entry("gradnorm_poly", "SGD gradient norm, polynomial steps θ > 1/2: O(√(d/n))", Sgd, -0.5, false, Some(Any), false),
    TheoremEntry {
        axis: Axis::T,
        ..entry("opt_error_pl", "SGD optimization error, F_S PL, inverse-time steps: O(1/T)", Sgd, -1.0, false, None, false)
    },
    entry("sgd_holder_nonconvex", "SGD, nonconvex Hölder-smooth loss, F_S PL, T ≍ n^(2/α): O(log n / n)", Sgd, -1.0, true, Some(NPow), false),
    entry("sgd_holder_pl", "SGD, convex Hölder-smooth loss, F_S PL, T ≍ n^(2/α): O(log n / n)", Sgd, -1.0, true, Some(NPow), false),
    entry("sgd_smooth_qg", "SGD, convex smooth loss, F_S quadratic growth, T ≍ n²: O(log^(3/2) n / n)", Sgd, -1.0, true, Some(NSquared), false),
    entry("sgd_uc_pl", "SGD, smooth loss, F_S PL, F* = O(1/n), T ≍ n²: O(log n / n²)", Sgd, -2.0, false, Some(NSquared), true),
    entry("sgd_uc_qg", "SGD, smooth convex loss, F_S quadratic growth, F* = O(1/n), T ≍ n²: O(log n / n²)", Sgd, -2.0, false, Some(NSquared), true),
];

/// Built-in rate table, sorted by id.
pub fn theorem_table() -> &'static [TheoremEntry] {
    &TABLE
}

pub fn theorem_entry(id: &str) -> Result<&'static TheoremEntry> {
    TABLE
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::config(format!("unknown theorem id '{id}'")))
}

/// What the experiment behind a fit actually did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySetup {
    pub estimator: EstimatorKind,
    pub axis: Axis,
    pub t_rule: Option<TRule>,
    pub noise_rule: NoiseRule,
    /// The instance has `F* = 0` at every `n`.
    pub noiseless: bool,
}

impl TheorySetup {
    pub fn from_sweep(config: &SweepConfig, noiseless: bool) -> Self {
        let (estimator, t_rule) = match config.estimator {
            Estimator::Erm => (EstimatorKind::Erm, None),
            Estimator::Sgd { t_rule, .. } => (EstimatorKind::Sgd, Some(t_rule)),
        };
        TheorySetup {
            estimator,
            axis: Axis::N,
            t_rule,
            noise_rule: config.noise_rule,
            noiseless,
        }
    }
}

pub const DEFAULT_SLACK: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub theorem_id: String,
    pub description: String,
    pub theory_exponent: f64,
    pub slack: f64,
    /// The slope the verdict is based on (log-corrected when the rate has log factors).
    pub fitted_slope: f64,
    pub verdict: VerdictKind,
    pub diagnostics: String,
    pub fit: RateFit,
}

pub fn compare_to_theory(fit: &RateFit, theorem_id: &str, setup: &TheorySetup) -> Result<Verdict> {
    compare_with_slack(fit, theorem_id, setup, DEFAULT_SLACK)
}

/// Upper-bound semantics: a slope at or below `exponent + slack` is consistent.
pub fn compare_with_slack(fit: &RateFit, theorem_id: &str, setup: &TheorySetup, slack: f64) -> Result<Verdict> {
    let e = theorem_entry(theorem_id)?;
    let unmet = |why: String| Err(Error::Precondition(format!("{theorem_id}: {why}")));
    if e.estimator != setup.estimator {
        return unmet(format!("stated for {:?}, experiment used {:?}", e.estimator, setup.estimator));
    }
    if e.axis != setup.axis {
        return unmet(format!("rate is in {:?}, experiment varied {:?}", e.axis, setup.axis));
    }
    if e.requires_small_fstar && !matches!(setup.noise_rule, NoiseRule::InvSqrtN { .. }) {
        return unmet("needs an instance family with F* = O(1/n) (noise rule inv_sqrt_n)".into());
    }
    if e.requires_fixed_noise && (setup.noiseless || setup.noise_rule != NoiseRule::Fixed) {
        return unmet("needs a fixed noise level with F* > 0".into());
    }
    match (e.t_rule, setup.t_rule) {
        (Some(TRuleRequirement::NSquared), Some(TRule::NSquared)) => {}
        (Some(TRuleRequirement::NPow), Some(TRule::NPow { .. })) => {}
        (Some(TRuleRequirement::Any), Some(_)) | (None, _) => {}
        (Some(req), got) => return unmet(format!("needs T rule {req:?}, experiment used {got:?}")),
    }
    let fitted_slope = if e.log_correction {
        match fit.log_corrected_slope {
            Some(s) => s,
            None => return unmet("rate carries log n factors; fit with divide_log_n".into()),
        }
    } else {
        fit.slope
    };
    let consistent = fitted_slope <= e.exponent + slack;
    let diagnostics = format!(
        "{} slope {fitted_slope:.4} vs exponent {} + slack {slack}; r² = {:.4}, 95% CI [{:.4}, {:.4}] over {} points",
        if e.log_correction { "log-corrected" } else { "fitted" },
        e.exponent,
        fit.r_squared,
        fit.slope_ci_95.0,
        fit.slope_ci_95.1,
        fit.points
    );
    let mut fit = fit.clone();
    fit.theory_exponent = Some(e.exponent);
    fit.theorem_id = Some(e.id.to_string());
    Ok(Verdict {
        theorem_id: e.id.to_string(),
        description: e.description.to_string(),
        theory_exponent: e.exponent,
        slack,
        fitted_slope,
        verdict: if consistent {
            VerdictKind::Consistent
        } else {
            VerdictKind::Inconsistent
        },
        diagnostics,
        fit,
    })
}
