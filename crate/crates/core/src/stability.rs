//! Empirical uniform stability and the closed-form bounds it is compared to.
//!
//! Stability is measured by replacing one training example at a time and
//! taking the largest change of the loss over a fixed probe grid of samples.
//! The probe grid only lower-bounds the supremum over all samples, so an
//! empirical value above a bound refutes it while one below is evidence only.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{erm_solve, sgd_last_iterate, StepSchedule};
use crate::problems::{sample_dataset, Dataset, Problem, ProblemKind, Sample};
use crate::rng::{derive_seed, seeded, tag};
use crate::scalar::Scalar;

/// Indices tested when `n` exceeds this; below it every index is replaced.
pub const ALL_INDICES_UP_TO: usize = 64;
pub const SAMPLED_INDICES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Erm,
    Sgd { steps: usize, schedule: StepSchedule },
}

impl Algorithm {
    /// Output of the algorithm on `data`; SGD draws its indices from `seed`.
    pub fn run<T: Scalar>(&self, problem: &Problem<T>, data: &Dataset<T>, seed: u64) -> Result<Vec<T>> {
        match self {
            Algorithm::Erm => Ok(erm_solve(data, problem)?.w_hat),
            Algorithm::Sgd { steps, schedule } => Ok(sgd_last_iterate(problem, data, schedule, *steps, seed)?.w_last),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport<T> {
    pub n: usize,
    pub algorithm: Algorithm,
    /// One-based indices, aligned with `per_index_sup`.
    pub replacement_indices: Vec<usize>,
    /// For each replaced index, the largest loss change over trials and probes.
    pub per_index_sup: Vec<T>,
    pub empirical_sup: T,
    pub probe_grid_size: usize,
    pub trials: usize,
    pub delta: f64,
    /// Lower nearest-rank `(1 − δ)`-quantile over trials of the per-trial sup.
    pub quantile_1_minus_delta: T,
}

/// Design support crossed with the extreme labels each design point can carry.
pub fn default_probe_grid<T: Scalar>(problem: &Problem<T>) -> Vec<Sample<T>> {
    let mut out: Vec<Sample<T>> = Vec::new();
    for x in problem.design().points() {
        let labels = match problem.kind() {
            ProblemKind::LeastSquares => {
                let m: T = x.iter().zip(problem.w_star()).map(|(&a, &b)| a * b).sum();
                [m - problem.noise_level(), m + problem.noise_level()]
            }
            _ => [-T::one(), T::one()],
        };
        for y in labels {
            let z = Sample { x: x.clone(), y };
            if !out.contains(&z) {
                out.push(z);
            }
        }
    }
    out
}

/// All indices `1..=n` for small `n`, else 32 distinct indices drawn from `seed`.
pub fn default_replacement_indices(n: usize, seed: u64) -> Vec<usize> {
    if n <= ALL_INDICES_UP_TO {
        return (1..=n).collect();
    }
    let mut rng = seeded(derive_seed(seed, &[tag("replacement_indices")]));
    let mut idx: Vec<usize> = sample_indices(&mut rng, n, SAMPLED_INDICES).into_iter().map(|i| i + 1).collect();
    idx.sort_unstable();
    idx
}

/// `max_z |f(w, z) − f(v, z)|` over the probe grid.
pub fn loss_gap_sup<T: Scalar>(problem: &Problem<T>, w: &[T], v: &[T], probes: &[Sample<T>]) -> T {
    probes
        .iter()
        .map(|z| (problem.loss(w, z) - problem.loss(v, z)).abs())
        .fold(T::zero(), T::max)
}

/// Loss change when example `index` (one-based) of `data` is replaced by `z_prime`.
///
/// SGD runs on both datasets share the index sequence drawn from `seed`.
pub fn replace_one_sup<T: Scalar>(
    problem: &Problem<T>,
    algorithm: &Algorithm,
    data: &Dataset<T>,
    index: usize,
    z_prime: Sample<T>,
    probes: &[Sample<T>],
    seed: u64,
) -> Result<T> {
    check_index(index, data.len())?;
    let w = algorithm.run(problem, data, seed)?;
    let v = algorithm.run(problem, &data.replaced(index - 1, z_prime), seed)?;
    Ok(loss_gap_sup(problem, &w, &v, probes))
}

fn check_index(index: usize, n: usize) -> Result<()> {
    if index == 0 || index > n {
        return Err(Error::config(format!("replacement index {index} outside 1..={n}")));
    }
    Ok(())
}

/// Lower nearest-rank quantile: the `⌈q·m⌉`-th smallest of `m` values.
pub(crate) fn nearest_rank<T: Scalar>(values: &[T], q: f64) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    // tolerance so that 0.95 · 100 lands on rank 95 despite rounding
    let rank = ((q * sorted.len() as f64 - 1e-9).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Seeds of trial `t`: dataset, replacement draws, SGD index stream.
fn trial_seeds(seed: u64, trial: usize) -> (u64, u64, u64) {
    let base = derive_seed(seed, &[tag("trial"), trial as u64]);
    (
        derive_seed(base, &[tag("data")]),
        derive_seed(base, &[tag("replace")]),
        derive_seed(base, &[tag("sgd")]),
    )
}

/// Empirical uniform stability of `algorithm` at sample size `n`.
///
/// Each trial draws `S`, one fresh replacement per index, runs the algorithm
/// on `S` and on every `Sⁱ`, and records the probe-grid sup of the loss gap.
#[allow(clippy::too_many_arguments)]
pub fn empirical_uniform_stability<T: Scalar>(
    problem: &Problem<T>,
    n: usize,
    algorithm: &Algorithm,
    replacement_indices: &[usize],
    z_probe_grid: &[Sample<T>],
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<StabilityReport<T>> {
    if z_probe_grid.is_empty() {
        return Err(Error::config("probe grid is empty"));
    }
    if replacement_indices.is_empty() {
        return Err(Error::config("no replacement indices"));
    }
    for &i in replacement_indices {
        check_index(i, n)?;
    }
    if trials == 0 {
        return Err(Error::config("stability needs at least one trial"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("delta must lie in (0, 1), got {delta}")));
    }
    if let Algorithm::Sgd { schedule, .. } = algorithm {
        schedule.validate()?;
    }

    // errors are collected in order first, so the reported trial is the lowest failing one
    let with_trial = |trial: usize| move |e: Error| Error::Trial { trial, source: Box::new(e) };
    let bases: Vec<(Dataset<T>, Vec<T>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (data_seed, _, sgd_seed) = trial_seeds(seed, t);
            let data = sample_dataset(problem, n, data_seed);
            let w = algorithm.run(problem, &data, sgd_seed).map_err(with_trial(t))?;
            Ok((data, w))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..trials)
        .flat_map(|t| replacement_indices.iter().map(move |&i| (t, i)))
        .collect();
    let gaps: Vec<T> = cells
        .par_iter()
        .map(|&(t, i)| {
            let (_, replace_seed, sgd_seed) = trial_seeds(seed, t);
            let (data, w) = &bases[t];
            let z_prime = problem.sample(replace_seed, (i - 1) as u64);
            let v = algorithm
                .run(problem, &data.replaced(i - 1, z_prime), sgd_seed)
                .map_err(with_trial(t))?;
            Ok(loss_gap_sup(problem, w, &v, z_probe_grid))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let k = replacement_indices.len();
    let per_index_sup: Vec<T> = (0..k)
        .map(|j| (0..trials).map(|t| gaps[t * k + j]).fold(T::zero(), T::max))
        .collect();
    let per_trial: Vec<T> = gaps.chunks(k).map(|c| c.iter().copied().fold(T::zero(), T::max)).collect();
    Ok(StabilityReport {
        n,
        algorithm: *algorithm,
        replacement_indices: replacement_indices.to_vec(),
        empirical_sup: per_index_sup.iter().copied().fold(T::zero(), T::max),
        per_index_sup,
        probe_grid_size: z_probe_grid.len(),
        trials,
        delta,
        quantile_1_minus_delta: nearest_rank(&per_trial, 1.0 - delta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundKind<T> {
    /// `4L²/(nμ)` for ERM under quadratic growth.
    ErmQg { l: T, mu: T, n: usize },
    /// `2L√(2ε_opt/μ) + 4L²/(nμ)` for an approximate minimizer.
    SgdQg { l: T, mu: T, n: usize, eps_opt: T },
    /// `t^{cβ}·√(ln(n/δ)/n)` for SGD with `η_t = c/(t+1)` on a nonconvex loss
    /// bounded by `loss_bound_m`.
    ExpansionNonconvex {
        c: T,
        beta: T,
        t: usize,
        n: usize,
        delta: T,
        loss_bound_m: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityBound<T> {
    pub value: T,
    /// Set for the expansion bound: whether it exceeds the trivial loss bound.
    pub vacuous: Option<bool>,
}

fn positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be nonnegative, got {v}")))
    }
}

pub fn theoretical_stability_bound<T: Scalar>(kind: &BoundKind<T>) -> Result<StabilityBound<T>> {
    let four = T::of(4.0);
    let erm = |l: T, mu: T, n: usize| -> Result<T> {
        positive("L", l)?;
        positive("mu", mu)?;
        positive("n", T::of_usize(n))?;
        Ok(four * l * l / (T::of_usize(n) * mu))
    };
    match *kind {
        BoundKind::ErmQg { l, mu, n } => Ok(StabilityBound {
            value: erm(l, mu, n)?,
            vacuous: None,
        }),
        BoundKind::SgdQg { l, mu, n, eps_opt } => {
            nonnegative("eps_opt", eps_opt)?;
            let opt = T::of(2.0) * l * (T::of(2.0) * eps_opt / mu).sqrt();
            Ok(StabilityBound {
                value: opt + erm(l, mu, n)?,
                vacuous: None,
            })
        }
        BoundKind::ExpansionNonconvex {
            c,
            beta,
            t,
            n,
            delta,
            loss_bound_m,
        } => {
            positive("c", c)?;
            positive("beta", beta)?;
            positive("t", T::of_usize(t))?;
            positive("n", T::of_usize(n))?;
            positive("loss bound M", loss_bound_m)?;
            if !(delta > T::zero() && delta < T::one()) {
                return Err(Error::config(format!("delta must lie in (0, 1), got {delta}")));
            }
            let nt = T::of_usize(n);
            let value = T::of_usize(t).powf(c * beta) * ((nt / delta).ln() / nt).sqrt();
            Ok(StabilityBound {
                value,
                vacuous: Some(value > loss_bound_m),
            })
        }
    }
}

/// Excess-risk bound for an `ε`-stable algorithm with optimization error
/// `ε_opt`, with the unspecified absolute constant set to 1:
/// `ε_opt + η E[ε_opt] + (1 + 1/η)(ε ln n + (M + B)/n) ln(1/δ)`.
#[allow(clippy::too_many_arguments)]
pub fn klochkov_excess_bound<T: Scalar>(
    eps_stab: T,
    eps_opt: T,
    exp_eps_opt: T,
    m: T,
    b: T,
    n: usize,
    eta: T,
    delta: T,
) -> Result<T> {
    for (name, v) in [("eps_stab", eps_stab), ("eps_opt", eps_opt), ("E[eps_opt]", exp_eps_opt), ("M", m), ("B", b)] {
        nonnegative(name, v)?;
    }
    positive("eta", eta)?;
    positive("n", T::of_usize(n))?;
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let nt = T::of_usize(n);
    let stat = (T::one() + T::one() / eta) * (eps_stab * nt.ln() + (m + b) / nt) * (T::one() / delta).ln();
    Ok(eps_opt + eta * exp_eps_opt + stat)
}

/// Generalized Bernstein parameter `2L²/μ` implied by quadratic growth and Lipschitzness.
pub fn bernstein_from_qg<T: Scalar>(l: T, mu: T) -> Result<T> {
    positive("L", l)?;
    positive("mu", mu)?;
    Ok(T::of(2.0) * l * l / mu)
}

/// One row of a stability sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySweepRow {
    pub n: usize,
    pub algorithm: String,
    pub empirical_sup: f64,
    pub quantile: f64,
    pub bound_erm_qg: Option<f64>,
    pub bound_sgd_qg: Option<f64>,
    pub bound_expansion: Option<f64>,
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Algorithm::Erm => "erm".into(),
            Algorithm::Sgd { steps, .. } => format!("sgd(T={steps})"),
        }
    }
}

/// CSV with header `n,algorithm,empirical_sup,q_1_minus_delta,bound_erm_qg,bound_sgd_qg,bound_expansion`;
/// missing bounds are left empty.
pub fn write_stability_csv<W: Write>(rows: &[StabilitySweepRow], mut out: W) -> Result<()> {
    writeln!(out, "n,algorithm,empirical_sup,q_1_minus_delta,bound_erm_qg,bound_sgd_qg,bound_expansion")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in rows {
        writeln!(
            out,
            "{},{},{:e},{:e},{},{},{}",
            r.n,
            r.algorithm,
            r.empirical_sup,
            r.quantile,
            opt(r.bound_erm_qg),
            opt(r.bound_sgd_qg),
            opt(r.bound_expansion)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
