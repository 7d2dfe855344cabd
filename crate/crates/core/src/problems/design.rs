//! Bounded feature designs with finite support.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, SquareMatrix};
use crate::rng;
use crate::scalar::Scalar;

/// Declarative description of a feature distribution.
///
/// Every variant has finite support, so population expectations can be
/// computed exactly by enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignSpec {
    /// Uniform over the vertices of `[-1, 1]^d`, rescaled so every point has norm `radius`.
    Hypercube { radius: f64 },
    /// Uniform over `(±s_1, …, ±s_d)`.
    ScaledHypercube { scales: Vec<f64> },
    /// `Q · (±s_1, …, ±s_d)` for a Haar-like rotation `Q` drawn from `rotation_seed`.
    RotatedHypercube { scales: Vec<f64>, rotation_seed: u64 },
    /// Uniform over an explicit point list.
    Points { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone)]
enum Support<T> {
    /// `x = Σ_k v_k b_k` with independent Rademacher `v_k`; columns `b_k` stored.
    Cube { basis: Vec<Vec<T>> },
    Points { points: Vec<Vec<T>> },
}

#[derive(Debug, Clone)]
pub struct Design<T> {
    dim: usize,
    support: Support<T>,
}

const MAX_CUBE_DIM: usize = 16;

impl<T: Scalar> Design<T> {
    pub fn from_spec(spec: &DesignSpec, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("design dimension must be at least 1"));
        }
        let check_scales = |scales: &[f64]| -> Result<()> {
            if scales.len() != dim {
                return Err(Error::config(format!(
                    "design has {} scales for dimension {dim}",
                    scales.len()
                )));
            }
            if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                return Err(Error::config("design scales must be positive and finite"));
            }
            Ok(())
        };
        let support = match spec {
            DesignSpec::Hypercube { radius } => {
                if !radius.is_finite() || *radius <= 0.0 {
                    return Err(Error::config("hypercube radius must be positive"));
                }
                let s = radius / (dim as f64).sqrt();
                Support::Cube {
                    basis: axis_basis(&vec![s; dim]),
                }
            }
            DesignSpec::ScaledHypercube { scales } => {
                check_scales(scales)?;
                Support::Cube {
                    basis: axis_basis(scales),
                }
            }
            DesignSpec::RotatedHypercube {
                scales,
                rotation_seed,
            } => {
                check_scales(scales)?;
                let q = random_rotation(dim, *rotation_seed);
                let basis = (0..dim)
                    .map(|k| (0..dim).map(|i| T::of(q[i][k] * scales[k])).collect())
                    .collect();
                Support::Cube { basis }
            }
            DesignSpec::Points { points } => {
                if points.is_empty() {
                    return Err(Error::config("point design needs at least one point"));
                }
                if points.iter().any(|p| p.len() != dim) {
                    return Err(Error::config("every design point must have the problem dimension"));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::config("design points must be finite"));
                }
                Support::Points {
                    points: points
                        .iter()
                        .map(|p| p.iter().map(|&v| T::of(v)).collect())
                        .collect(),
                }
            }
        };
        if let Support::Cube { .. } = support {
            if dim > MAX_CUBE_DIM {
                return Err(Error::config(format!(
                    "hypercube designs are limited to dimension {MAX_CUBE_DIM}"
                )));
            }
        }
        Ok(Self { dim, support })
    }

    /// The single point `x = 1` used by the one-dimensional objectives.
    pub fn unit_1d() -> Self {
        Self {
            dim: 1,
            support: Support::Points {
                points: vec![vec![T::one()]],
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_size(&self) -> usize {
        match &self.support {
            Support::Cube { basis } => 1usize << basis.len(),
            Support::Points { points } => points.len(),
        }
    }

    /// Support point with index `k`, all points being equally likely.
    pub fn point(&self, k: usize) -> Vec<T> {
        match &self.support {
            Support::Cube { basis } => {
                let mut x = vec![T::zero(); self.dim];
                for (bit, b) in basis.iter().enumerate() {
                    let sign = if (k >> bit) & 1 == 1 { -T::one() } else { T::one() };
                    for (xi, &bi) in x.iter_mut().zip(b) {
                        *xi = *xi + sign * bi;
                    }
                }
                x
            }
            Support::Points { points } => points[k].clone(),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        (0..self.support_size()).map(move |k| self.point(k))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<T> {
        match &self.support {
            Support::Cube { basis } => {
                let mut x = vec![T::zero(); self.dim];
                for b in basis {
                    let sign: T = rng::rademacher(rng);
                    for (xi, &bi) in x.iter_mut().zip(b) {
                        *xi = *xi + sign * bi;
                    }
                }
                x
            }
            Support::Points { points } => points[rng.gen_range(0..points.len())].clone(),
        }
    }

    /// Second-moment matrix `E[x x^T]`.
    pub fn second_moment(&self) -> SquareMatrix<T> {
        let mut m = SquareMatrix::zeros(self.dim);
        match &self.support {
            Support::Cube { basis } => {
                for b in basis {
                    m.add_outer(T::one(), b);
                }
            }
            Support::Points { points } => {
                let w = T::one() / T::of_usize(points.len());
                for p in points {
                    m.add_outer(w, p);
                }
            }
        }
        m
    }

    /// `sup ‖x‖` over the support.
    pub fn max_norm(&self) -> T {
        match &self.support {
            // every vertex of a parallelotope need not share a norm once rotated
            // and scaled, but the norm is maximised at some vertex
            Support::Cube { .. } => self.points().map(|p| norm(&p)).fold(T::zero(), T::max),
            Support::Points { points } => points.iter().map(|p| norm(p)).fold(T::zero(), T::max),
        }
    }

    /// `E ‖x‖²`
    pub fn mean_norm_sq(&self) -> T {
        let m = self.second_moment();
        (0..self.dim).map(|i| m[(i, i)]).sum()
    }
}

fn axis_basis<T: Scalar>(scales: &[f64]) -> Vec<Vec<T>> {
    let d = scales.len();
    (0..d)
        .map(|k| {
            (0..d)
                .map(|i| if i == k { T::of(scales[k]) } else { T::zero() })
                .collect()
        })
        .collect()
}

/// Orthogonal matrix from Gram–Schmidt on a Gaussian matrix (rows returned).
fn random_rotation(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand_distr::StandardNormal;
    let mut rng = rng::seeded(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= p * ci;
            }
        }
        let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if len > 1e-8 {
            cols.push(v.into_iter().map(|a| a / len).collect());
        }
    }
    (0..dim)
        .map(|i| (0..dim).map(|k| cols[k][i]).collect())
        .collect()
}
