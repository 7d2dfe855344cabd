//! Executable certifiers for the regularity and curvature conditions.
//!
//! A certifier evaluates the defining inequality of a condition on random
//! probes in the domain ball plus a fixed stratified grid, and reports the
//! largest ratio of the side that must be small to the side that bounds it.
//! A ratio above `1 + certify_slack` is a refutation; a pass is only
//! probabilistic evidence and always carries its probe count.

mod estimate;
mod grid;
mod hierarchy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use estimate::{estimate_constant, ConstantKind, GridSpec};
pub use hierarchy::{hierarchy_audit, ChainConstants, HierarchyAudit};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm, norm_sq, sub};
use crate::optim::erm_solve;
use crate::problems::{Dataset, PopRiskMode, Problem, Sample};
use crate::rng::{derive_seed, tag};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Lipschitz,
    Smooth,
    Holder,
    Qg,
    Pl,
    Rsi,
    Eb,
    /// Weak strong convexity.
    Wsc,
    /// Strong convexity.
    Sc,
    VarianceBound,
    RelaxedGradient,
    BernsteinAtOpt,
}

impl Condition {
    pub fn name(&self) -> &'static str {
        match self {
            Condition::Lipschitz => "lipschitz",
            Condition::Smooth => "smooth",
            Condition::Holder => "holder",
            Condition::Qg => "qg",
            Condition::Pl => "pl",
            Condition::Rsi => "rsi",
            Condition::Eb => "eb",
            Condition::Wsc => "wsc",
            Condition::Sc => "sc",
            Condition::VarianceBound => "variance_bound",
            Condition::RelaxedGradient => "relaxed_gradient",
            Condition::BernsteinAtOpt => "bernstein_at_opt",
        }
    }

    fn is_pairwise(&self) -> bool {
        matches!(self, Condition::Lipschitz | Condition::Smooth | Condition::Holder | Condition::Sc)
    }

    /// Conditions stated relative to the minimizer set of `F` or `F_S`.
    fn is_curvature(&self) -> bool {
        matches!(
            self,
            Condition::Qg | Condition::Pl | Condition::Rsi | Condition::Eb | Condition::Wsc | Condition::Sc
        )
    }

    /// Curvature constants certify lower bounds: smaller values are weaker claims.
    pub fn is_lower_bound(&self) -> bool {
        self.is_curvature()
    }
}

/// Which function a condition is checked on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Every `f(·; z)` with `z` in the support (or in the dataset, when given).
    PerSampleF,
    EmpiricalFs,
    PopulationF,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateResult<T> {
    pub condition: Condition,
    pub target: Target,
    pub constant_tested: T,
    pub passed: bool,
    /// Maximum over probes of (side required small) / (side allowed); `+∞`
    /// when the allowed side vanishes while the required side does not.
    pub worst_ratio: T,
    /// One point, or two for pairwise conditions.
    pub worst_point: Vec<Vec<T>>,
    pub worst_sample: Option<Sample<T>>,
    /// Moment order attaining the worst ratio for `bernstein_at_opt`.
    pub worst_moment: Option<u32>,
    pub probe_count: usize,
    pub seed: u64,
    /// Propagated Monte-Carlo error bar on `worst_ratio`.
    pub mc_error_bar: Option<T>,
}

impl<T: Scalar> CertificateResult<T> {
    /// JSON record; infinite ratios are written as the string `"inf"`.
    pub fn to_json(&self) -> Value {
        let vecs = |v: &[Vec<T>]| -> Value {
            Value::Array(v.iter().map(|p| json!(p.iter().map(|x| x.as_f64()).collect::<Vec<_>>())).collect())
        };
        json!({
            "condition": self.condition.name(),
            "target": self.target,
            "constant": self.constant_tested.as_f64(),
            "passed": self.passed,
            "worst_ratio": ratio_json(self.worst_ratio.as_f64()),
            "worst_point": vecs(&self.worst_point),
            "worst_moment": self.worst_moment,
            "probes": self.probe_count,
            "seed": self.seed,
            "mc_error_bar": self.mc_error_bar.map(|b| b.as_f64()),
        })
    }
}

pub(crate) fn ratio_json(r: f64) -> Value {
    if r.is_finite() {
        json!(r)
    } else if r.is_nan() {
        json!("nan")
    } else if r > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// `needed / allowed`, with the conventions `0/x = 0` and `x/0 = +∞` for `x > 0`.
fn ratio<T: Scalar>(needed: T, allowed: T) -> T {
    if needed.is_nan() || allowed.is_nan() {
        return T::infinity();
    }
    if needed <= T::zero() {
        if allowed >= needed {
            T::zero()
        } else {
            T::infinity()
        }
    } else if allowed <= T::zero() {
        T::infinity()
    } else {
        needed / allowed
    }
}

/// Shared evaluation state for one target.
pub(crate) struct Context<'a, T> {
    problem: &'a Problem<T>,
    target: Target,
    /// Minimizers of the measured function (`F` or `F_S`).
    minimizers: Vec<Vec<T>>,
    empirical: Option<(&'a Dataset<T>, T)>,
    /// `(z, weight)`; the dataset when given, else the exact support.
    samples: Vec<(Sample<T>, T)>,
    eta_cap: T,
    mc: Option<(usize, u64)>,
}

/// A measured value with its Monte-Carlo standard error (0 when exact).
#[derive(Clone, Copy)]
struct Est<T> {
    v: T,
    se: T,
}

impl<'a, T: Scalar> Context<'a, T> {
    pub(crate) fn new(target: Target, problem: &'a Problem<T>, data: Option<&'a Dataset<T>>) -> Result<Self> {
        let samples = match data {
            Some(d) if d.is_empty() => return Err(Error::config("dataset is empty")),
            Some(d) => {
                let w = T::one() / T::of_usize(d.len());
                d.samples().iter().map(|z| (z.clone(), w)).collect()
            }
            None => problem.support(),
        };
        let (minimizers, empirical) = match target {
            Target::EmpiricalFs => {
                let d = data.ok_or_else(|| Error::config("empirical target needs a dataset"))?;
                let sol = erm_solve(d, problem)?;
                let fs_star = problem.empirical_risk(d, &sol.w_hat);
                let mut mins = vec![sol.w_hat.clone()];
                if problem.kind().is_even() {
                    mins.push(sol.w_hat.iter().map(|&v| -v).collect());
                }
                (mins, Some((d, fs_star)))
            }
            _ => (problem.minimizers().to_vec(), None),
        };
        let mc = match (target, problem.pop_risk_mode()) {
            (Target::PopulationF, PopRiskMode::MonteCarlo { samples, seed }) => Some((samples, seed)),
            _ => None,
        };
        let eta_cap = problem
            .certificate()
            .smooth_beta
            .map_or(T::one(), |b| T::one() / (T::of(2.0) * b));
        Ok(Context {
            problem,
            target,
            minimizers,
            empirical,
            samples,
            eta_cap,
            mc,
        })
    }

    pub(crate) fn minimizers(&self) -> &[Vec<T>] {
        &self.minimizers
    }

    pub(crate) fn is_monte_carlo(&self) -> bool {
        self.mc.is_some()
    }

    pub(crate) fn nearest_minimizer(&self, w: &[T]) -> &[T] {
        self.minimizers
            .iter()
            .min_by(|a, b| dist(a, w).partial_cmp(&dist(b, w)).unwrap_or(std::cmp::Ordering::Equal))
            .expect("at least one minimizer")
    }

    /// `F(w) − F*` of the measured function.
    fn excess(&self, w: &[T]) -> Est<T> {
        if let Some((d, fs_star)) = self.empirical {
            return Est {
                v: self.problem.empirical_risk(d, w) - fs_star,
                se: T::zero(),
            };
        }
        match self.mc {
            None => Est {
                v: self.problem.exact_excess_risk(w),
                se: T::zero(),
            },
            Some((m, seed)) => {
                let (mean, se) = self.problem.monte_carlo(m, seed, |z| self.problem.loss(w, z));
                Est {
                    v: mean - self.problem.f_star(),
                    se,
                }
            }
        }
    }

    pub(crate) fn excess_value(&self, w: &[T]) -> T {
        self.excess(w).v
    }

    /// Gradient of the measured function and the standard error of its norm.
    fn gradient(&self, w: &[T]) -> (Vec<T>, T) {
        if let Some((d, _)) = self.empirical {
            return (self.problem.empirical_gradient(d, w), T::zero());
        }
        match self.mc {
            None => (self.problem.exact_gradient(w), T::zero()),
            Some((m, seed)) => {
                let dim = w.len();
                let mut mean = vec![0.0f64; dim];
                let mut m2 = vec![0.0f64; dim];
                let mut g = vec![T::zero(); dim];
                for k in 0..m {
                    let z = self.problem.sample(seed, k as u64);
                    self.problem.grad_into(w, &z, &mut g);
                    for i in 0..dim {
                        let v = g[i].as_f64();
                        let delta = v - mean[i];
                        mean[i] += delta / (k + 1) as f64;
                        m2[i] += delta * (v - mean[i]);
                    }
                }
                let var: f64 = m2.iter().sum::<f64>() / (m.max(2) - 1) as f64;
                (
                    mean.into_iter().map(T::of).collect(),
                    T::of((var / m as f64).sqrt()),
                )
            }
        }
    }

    pub(crate) fn gradient_value(&self, w: &[T]) -> Vec<T> {
        self.gradient(w).0
    }

    pub(crate) fn samples(&self) -> &[(Sample<T>, T)] {
        &self.samples
    }

    pub(crate) fn eta_cap(&self) -> T {
        self.eta_cap
    }

    pub(crate) fn problem(&self) -> &Problem<T> {
        self.problem
    }

    /// Weighted `E‖∇f(w,z) − E∇f(w,z)‖²` over the sample set, shifted by the
    /// first gradient so identical samples give exactly zero.
    pub(crate) fn gradient_variance(&self, w: &[T]) -> T {
        let shift = self.problem.grad(w, &self.samples[0].0);
        let mut mean = vec![T::zero(); w.len()];
        let mut second = T::zero();
        for (z, p) in &self.samples {
            let d = sub(&self.problem.grad(w, z), &shift);
            second = second + *p * norm_sq(&d);
            for (m, &di) in mean.iter_mut().zip(&d) {
                *m = *m + *p * di;
            }
        }
        (second - norm_sq(&mean)).max(T::zero())
    }

    /// Bregman divergence `F(a) − F(b) − ∇F(b)ᵀ(a − b)`.
    ///
    /// Short segments integrate `(∇F(b + s(a−b)) − ∇F(b))ᵀ(a − b)` by composite
    /// Gauss-Legendre quadrature, which avoids cancelling large risk values.
    fn bregman(&self, a: &[T], b: &[T]) -> Est<T> {
        let h = sub(a, b);
        let (gb, sgb) = self.gradient(b);
        if self.mc.is_some() || norm(&h) > self.problem.radius() * T::of(0.05) {
            let (ea, eb) = (self.excess(a), self.excess(b));
            return Est {
                v: ea.v - eb.v - dot(&gb, &h),
                se: (ea.se * ea.se + eb.se * eb.se).sqrt() + sgb * norm(&h),
            };
        }
        const NODES: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683_1,
            0.0,
            0.538_469_310_105_683_1,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.236_926_885_056_189_1,
            0.478_628_670_499_366_5,
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
        ];
        const SEGMENTS: usize = 4;
        let mut total = T::zero();
        for seg in 0..SEGMENTS {
            for (x, wt) in NODES.iter().zip(WEIGHTS) {
                let s = T::of((seg as f64 + (x + 1.0) * 0.5) / SEGMENTS as f64);
                let point: Vec<T> = b.iter().zip(&h).map(|(&bi, &hi)| bi + s * hi).collect();
                let g = self.gradient(&point).0;
                let diff: T = g.iter().zip(&gb).zip(&h).map(|((&gi, &gbi), &hi)| (gi - gbi) * hi).sum();
                total = total + T::of(wt * 0.5 / SEGMENTS as f64) * diff;
            }
        }
        Est {
            v: total,
            se: T::zero(),
        }
    }

    /// Ratio and error bar of `condition` at `points`, for `sample` when the
    /// target is per-sample and for moment `k` for the Bernstein condition.
    fn evaluate(
        &self,
        condition: Condition,
        constant: T,
        points: &[Vec<T>],
        sample: Option<&Sample<T>>,
        k: Option<u32>,
    ) -> (T, T) {
        let half = T::of(0.5);
        let two = T::of(2.0);
        // relative error bar propagated from the two sides
        let bar = |r: T, needed: Est<T>, allowed: Est<T>| -> T {
            if !r.is_finite() || r == T::zero() {
                return T::zero();
            }
            let rel = |e: Est<T>| if e.v == T::zero() { T::zero() } else { e.se / e.v.abs() };
            r * (rel(needed) + rel(allowed))
        };
        let exact = |v: T| Est { v, se: T::zero() };
        match condition {
            Condition::Lipschitz | Condition::Smooth | Condition::Holder => {
                let (a, b) = (&points[0], &points[1]);
                let gap = dist(a, b);
                let allowed = match condition {
                    Condition::Holder => constant * gap.powf(self.problem.certificate().holder_alpha),
                    _ => constant * gap,
                };
                let (needed, se) = match (self.target, condition) {
                    (Target::PerSampleF, Condition::Lipschitz) => {
                        let z = sample.expect("per-sample evaluation needs a sample");
                        ((self.problem.loss(a, z) - self.problem.loss(b, z)).abs(), T::zero())
                    }
                    (Target::PerSampleF, _) => {
                        let z = sample.expect("per-sample evaluation needs a sample");
                        (dist(&self.problem.grad(a, z), &self.problem.grad(b, z)), T::zero())
                    }
                    (_, Condition::Lipschitz) => {
                        let (ea, eb) = (self.excess(a), self.excess(b));
                        ((ea.v - eb.v).abs(), (ea.se * ea.se + eb.se * eb.se).sqrt())
                    }
                    _ => {
                        let ((ga, sa), (gb, sb)) = (self.gradient(a), self.gradient(b));
                        (dist(&ga, &gb), (sa * sa + sb * sb).sqrt())
                    }
                };
                let r = ratio(needed, allowed);
                (r, bar(r, Est { v: needed, se }, exact(allowed)))
            }
            Condition::Sc => {
                let (a, b) = (&points[0], &points[1]);
                let needed = half * constant * norm_sq(&sub(a, b));
                let allowed = self.bregman(a, b);
                let r = ratio(needed, allowed.v);
                (r, bar(r, exact(needed), allowed))
            }
            Condition::Qg | Condition::Pl | Condition::Rsi | Condition::Eb | Condition::Wsc => {
                let w = &points[0];
                let w_star = self.nearest_minimizer(w);
                let d2 = norm_sq(&sub(w, w_star));
                match condition {
                    Condition::Qg => {
                        let e = self.excess(w);
                        let r = ratio(half * constant * d2, e.v);
                        (r, bar(r, exact(half * constant * d2), e))
                    }
                    Condition::Pl => {
                        let e = self.excess(w);
                        let (g, sg) = self.gradient(w);
                        let gn = norm(&g);
                        let allowed = gn * gn / (two * constant);
                        let r = ratio(e.v, allowed);
                        let allowed_se = two * gn * sg / (two * constant);
                        (r, bar(r, e, Est { v: allowed, se: allowed_se }))
                    }
                    Condition::Rsi => {
                        let (g, sg) = self.gradient(w);
                        let allowed = dot(&g, &sub(w, w_star));
                        let r = ratio(constant * d2, allowed);
                        (r, bar(r, exact(constant * d2), Est { v: allowed, se: sg * d2.sqrt() }))
                    }
                    Condition::Eb => {
                        let (g, sg) = self.gradient(w);
                        let r = ratio(constant * d2, norm(&g));
                        (r, bar(r, exact(constant * d2), Est { v: norm(&g), se: sg }))
                    }
                    _ => {
                        // F(w*) − F(w) − ∇F(w)ᵀ(w* − w) ≥ μ/2 ‖w* − w‖²
                        let allowed = self.bregman(w_star, w);
                        let r = ratio(half * constant * d2, allowed.v);
                        (r, bar(r, exact(half * constant * d2), allowed))
                    }
                }
            }
            Condition::VarianceBound => {
                let r = ratio(self.gradient_variance(&points[0]), constant);
                (r, T::zero())
            }
            Condition::RelaxedGradient => {
                let w = &points[0];
                let (gn, se) = match self.target {
                    Target::PerSampleF => {
                        let z = sample.expect("per-sample evaluation needs a sample");
                        (norm(&self.problem.grad(w, z)), T::zero())
                    }
                    _ => {
                        let (g, se) = self.gradient(w);
                        (norm(&g), se)
                    }
                };
                let scale = self.eta_cap.sqrt();
                let r = ratio(scale * gn, constant);
                (r, bar(r, Est { v: scale * gn, se: scale * se }, exact(constant)))
            }
            Condition::BernsteinAtOpt => {
                let k = k.expect("moment order");
                let w = &points[0];
                let norms: Vec<(T, T)> = self
                    .samples
                    .iter()
                    .map(|(z, p)| (norm(&self.problem.grad(w, z)), *p))
                    .collect();
                let moment = |j: u32| -> T { norms.iter().map(|&(g, p)| p * g.powi(j as i32)).sum() };
                let factorial = (1..=k).fold(T::one(), |acc, i| acc * T::of(i as f64));
                let allowed = half * factorial * moment(2) * constant.powi(k as i32 - 2);
                (ratio(moment(k), allowed), T::zero())
            }
        }
    }
}

/// Reports whether `condition` holds with `constant` for the chosen target.
///
/// Points are `probes` random draws from `B(w*, R)` (pairs for pairwise
/// conditions) plus a fixed stratified grid; curvature conditions skip points
/// within `10⁻³·R` of a minimizer, where their ratio is `0/0`.
#[allow(clippy::too_many_arguments)]
pub fn certify<T: Scalar>(
    condition: Condition,
    target: Target,
    problem: &Problem<T>,
    data: Option<&Dataset<T>>,
    constant: T,
    probes: usize,
    seed: u64,
) -> Result<CertificateResult<T>> {
    if !(constant > T::zero()) || !constant.is_finite() {
        return Err(Error::config(format!("constant must be positive, got {constant}")));
    }
    if probes < 100 {
        return Err(Error::config("certify needs at least 100 probes"));
    }
    if condition.is_curvature() && target == Target::PerSampleF {
        return Err(Error::config(format!(
            "{} is a condition on F or F_S, not on individual losses",
            condition.name()
        )));
    }
    if condition == Condition::VarianceBound && target == Target::EmpiricalFs && data.is_none() {
        return Err(Error::config("variance bound on F_S needs a dataset"));
    }
    let ctx = Context::new(target, problem, data)?;
    let center = problem.w_star().to_vec();
    let radius = problem.radius();
    let budget = if ctx.is_monte_carlo() {
        grid::GRID_BUDGET_MC
    } else {
        grid::GRID_BUDGET
    };

    // candidate point sets (one or two points each)
    let candidates: Vec<Vec<Vec<T>>> = if condition == Condition::BernsteinAtOpt {
        let at = match target {
            Target::EmpiricalFs => ctx.minimizers()[0].clone(),
            _ => center.clone(),
        };
        vec![vec![at]]
    } else if condition.is_pairwise() {
        let sub_seed = derive_seed(seed, &[tag(condition.name()), tag("pairs")]);
        let mut c: Vec<Vec<Vec<T>>> = grid::random_pairs(&center, radius, probes, sub_seed)
            .into_iter()
            .map(|(a, b)| vec![a, b])
            .collect();
        let (points, pairs) = grid::stratified(&center, radius, budget);
        c.extend(pairs.into_iter().map(|(a, b)| vec![points[a].clone(), points[b].clone()]));
        c
    } else {
        let sub_seed = derive_seed(seed, &[tag(condition.name()), tag("points")]);
        let mut c: Vec<Vec<Vec<T>>> = grid::random_points(&center, radius, probes, sub_seed)
            .into_iter()
            .map(|p| vec![p])
            .collect();
        c.extend(grid::stratified(&center, radius, budget).0.into_iter().map(|p| vec![p]));
        if condition.is_curvature() {
            let excl = radius * T::of(1e-3);
            c.retain(|pts| dist(&pts[0], ctx.nearest_minimizer(&pts[0])) > excl);
        }
        c
    };
    if candidates.is_empty() {
        return Err(Error::config("no probe points left after exclusion"));
    }

    let per_sample = target == Target::PerSampleF
        && matches!(
            condition,
            Condition::Lipschitz | Condition::Smooth | Condition::Holder | Condition::RelaxedGradient
        );
    let moments: Vec<Option<u32>> = if condition == Condition::BernsteinAtOpt {
        (2..=6).map(Some).collect()
    } else {
        vec![None]
    };
    let sample_count = if per_sample { ctx.samples().len() } else { 1 };

    // (ratio, candidate, sample, moment); ties keep the earliest index
    let best = candidates
        .par_iter()
        .enumerate()
        .map(|(ci, pts)| {
            let mut best = (T::neg_infinity(), ci, 0usize, moments[0]);
            for si in 0..sample_count {
                let z = per_sample.then(|| &ctx.samples()[si].0);
                for &k in &moments {
                    let (r, _) = ctx.evaluate(condition, constant, pts, z, k);
                    if r > best.0 {
                        best = (r, ci, si, k);
                    }
                }
            }
            best
        })
        .reduce(
            || (T::neg_infinity(), usize::MAX, 0, None),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    let (worst_ratio, ci, si, k) = best;
    let worst_point = candidates[ci].clone();
    let worst_sample = per_sample.then(|| ctx.samples()[si].0.clone());
    let (_, bar) = ctx.evaluate(condition, constant, &worst_point, worst_sample.as_ref(), k);
    let threshold = T::one() + T::certify_slack();
    let mc_error_bar = if ctx.is_monte_carlo() {
        let margin = (threshold - worst_ratio).abs();
        if bar > T::of(0.1) * margin {
            return Err(Error::MonteCarloTooNoisy {
                bar: bar.as_f64(),
                margin: margin.as_f64(),
            });
        }
        Some(bar)
    } else {
        None
    };
    Ok(CertificateResult {
        condition,
        target,
        constant_tested: constant,
        passed: worst_ratio <= threshold,
        worst_ratio,
        worst_point,
        worst_sample,
        worst_moment: k,
        probe_count: candidates.len() * sample_count * moments.len(),
        seed,
        mc_error_bar,
    })
}

/// Recomputes the ratio stored in `result` at its worst point.
pub fn reevaluate<T: Scalar>(
    result: &CertificateResult<T>,
    problem: &Problem<T>,
    data: Option<&Dataset<T>>,
) -> Result<T> {
    let ctx = Context::new(result.target, problem, data)?;
    Ok(ctx
        .evaluate(
            result.condition,
            result.constant_tested,
            &result.worst_point,
            result.worst_sample.as_ref(),
            result.worst_moment,
        )
        .0)
}

#[cfg(test)]
mod tests;
