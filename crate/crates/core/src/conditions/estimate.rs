use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grid, Context, Target};
use crate::error::{Error, Result};
use crate::linalg::{dist, norm, norm_sq, sub};
use crate::problems::{Dataset, Problem};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    Pl,
    Qg,
    SmoothBeta,
    LipschitzL,
    SigmaSq,
    G,
    Bstar,
}

/// Lattice with spacing `step`; by default the cube around `w*` of half-width
/// `R`, cut to the ball. Explicit `bounds` are used as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Radius of the balls around minimizers left out of PL/QG ratios; `10⁻³·R` by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_radius: Option<f64>,
}

impl GridSpec {
    pub fn with_step(step: f64) -> Self {
        GridSpec {
            step,
            bounds: None,
            exclusion_radius: None,
        }
    }

    pub fn on_interval(lo: f64, hi: f64, step: f64) -> Self {
        GridSpec {
            step,
            bounds: Some(vec![(lo, hi)]),
            exclusion_radius: None,
        }
    }
}

fn max_of<T: Scalar>(it: impl ParallelIterator<Item = T>) -> T {
    it.reduce(|| T::zero(), |a, b| if b > a { b } else { a })
}

fn min_of<T: Scalar>(it: impl ParallelIterator<Item = T>) -> T {
    it.reduce(T::infinity, |a, b| if b < a { b } else { a })
}

/// Grid estimate of a constant; PL and QG use the empirical risk when a dataset is given.
pub fn estimate_constant<T: Scalar>(
    kind: ConstantKind,
    problem: &Problem<T>,
    data: Option<&Dataset<T>>,
    spec: &GridSpec,
) -> Result<T> {
    let target = if data.is_some() {
        Target::EmpiricalFs
    } else {
        Target::PopulationF
    };
    let ctx = Context::new(target, problem, data)?;
    if kind == ConstantKind::Bstar {
        return Ok(bernstein_constant(&ctx, data));
    }

    let d = problem.dimension();
    let (points, pairs) = match &spec.bounds {
        Some(b) => {
            if b.len() != d {
                return Err(Error::config(format!("grid bounds have {} axes for dimension {d}", b.len())));
            }
            grid::box_lattice::<T>(b, spec.step)?
        }
        None => {
            let r = problem.radius().as_f64();
            let bounds: Vec<(f64, f64)> = problem.w_star().iter().map(|c| (c.as_f64() - r, c.as_f64() + r)).collect();
            let (pts, prs) = grid::box_lattice::<T>(&bounds, spec.step)?;
            restrict_to_ball(pts, prs, problem)
        }
    };

    let samples = ctx.samples();
    match kind {
        ConstantKind::Pl | ConstantKind::Qg => {
            let excl = spec
                .exclusion_radius
                .map_or(problem.radius() * T::of(1e-3), T::of);
            let kept: Vec<&Vec<T>> = points
                .iter()
                .filter(|w| dist(w, ctx.nearest_minimizer(w)) > excl)
                .collect();
            if kept.is_empty() {
                return Err(Error::config("grid is empty after excluding minimizer neighbourhoods"));
            }
            let two = T::of(2.0);
            let est = min_of(kept.par_iter().filter_map(|w| {
                let e = ctx.excess_value(w);
                if !(e > T::zero()) {
                    return None;
                }
                Some(match kind {
                    ConstantKind::Pl => norm_sq(&ctx.gradient_value(w)) / (two * e),
                    _ => two * e / norm_sq(&sub(w, ctx.nearest_minimizer(w))),
                })
            }));
            if est.is_finite() {
                Ok(est)
            } else {
                Err(Error::config("no grid point with positive excess risk"))
            }
        }
        ConstantKind::SmoothBeta => Ok(max_of(pairs.par_iter().map(|&(a, b)| {
            let (wa, wb) = (&points[a], &points[b]);
            let gap = dist(wa, wb);
            samples
                .iter()
                .map(|(z, _)| dist(&problem.grad(wa, z), &problem.grad(wb, z)) / gap)
                .fold(T::zero(), T::max)
        }))),
        ConstantKind::LipschitzL | ConstantKind::G => {
            let scale = if kind == ConstantKind::G {
                ctx.eta_cap().sqrt()
            } else {
                T::one()
            };
            Ok(scale
                * max_of(points.par_iter().map(|w| {
                    samples
                        .iter()
                        .map(|(z, _)| norm(&problem.grad(w, z)))
                        .fold(T::zero(), T::max)
                })))
        }
        ConstantKind::SigmaSq => Ok(max_of(points.par_iter().map(|w| ctx.gradient_variance(w)))),
        ConstantKind::Bstar => unreachable!("handled above"),
    }
}

fn restrict_to_ball<T: Scalar>(
    points: Vec<Vec<T>>,
    pairs: Vec<(usize, usize)>,
    problem: &Problem<T>,
) -> (Vec<Vec<T>>, Vec<(usize, usize)>) {
    let keep: Vec<bool> = points.iter().map(|p| problem.in_domain(p)).collect();
    let mut index = vec![usize::MAX; points.len()];
    let mut out = Vec::new();
    for (i, p) in points.into_iter().enumerate() {
        if keep[i] {
            index[i] = out.len();
            out.push(p);
        }
    }
    let pairs = pairs
        .into_iter()
        .filter(|&(a, b)| keep[a] && keep[b])
        .map(|(a, b)| (index[a], index[b]))
        .collect();
    (out, pairs)
}

/// Smallest `B*` with `E‖g‖^k ≤ ½ k! E‖g‖² B*^(k−2)` for `k = 3..6`, `g = ∇f(w*, z)`.
fn bernstein_constant<T: Scalar>(ctx: &Context<'_, T>, data: Option<&Dataset<T>>) -> T {
    let w = match data {
        Some(_) => ctx.minimizers()[0].clone(),
        None => ctx.problem().w_star().to_vec(),
    };
    let norms: Vec<(T, T)> = ctx
        .samples()
        .iter()
        .map(|(z, p)| (norm(&ctx.problem().grad(&w, z)), *p))
        .collect();
    let moment = |k: i32| -> T { norms.iter().map(|&(g, p)| p * g.powi(k)).sum() };
    let m2 = moment(2);
    if m2 == T::zero() {
        return T::zero();
    }
    (3..=6)
        .map(|k: i32| {
            let factorial = (1..=k).fold(T::one(), |acc, i| acc * T::of(i as f64));
            (moment(k) / (T::of(0.5) * factorial * m2)).powf(T::one() / T::of((k - 2) as f64))
        })
        .fold(T::zero(), T::max)
}
