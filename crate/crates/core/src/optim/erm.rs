use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm, SquareMatrix};
use crate::problems::{Dataset, Problem, ProblemKind};
use crate::scalar::Scalar;

use super::descent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErmMethod {
    ClosedForm,
    FullGradientDescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmSolution<T> {
    pub w_hat: Vec<T>,
    pub method: ErmMethod,
    pub grad_norm_at_solution: T,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ErmOptions<T> {
    /// Target for `‖∇F_S(ŵ)‖`.
    pub tolerance: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for ErmOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::erm_tolerance(),
            max_iter: 2_000_000,
        }
    }
}

/// Empirical risk minimizer with default tolerance.
pub fn erm_solve<T: Scalar>(data: &Dataset<T>, problem: &Problem<T>) -> Result<ErmSolution<T>> {
    erm_solve_with(data, problem, &ErmOptions::default())
}

/// Least squares uses the normal equations (minimum-norm on rank deficiency);
/// other kinds use gradient descent from `w = 0` with step `1/β`, or Armijo
/// backtracking when no smoothness constant is certified.
pub fn erm_solve_with<T: Scalar>(
    data: &Dataset<T>,
    problem: &Problem<T>,
    opts: &ErmOptions<T>,
) -> Result<ErmSolution<T>> {
    if data.is_empty() {
        return Err(Error::config("ERM needs a nonempty dataset"));
    }
    if problem.kind() == ProblemKind::LeastSquares {
        return normal_equations(data, problem, opts);
    }
    let d = problem.dimension();
    let mut w = vec![T::zero(); d];
    if norm(&problem.empirical_gradient(data, &w)) == T::zero() {
        // stationary start: nudge toward the positive orthant
        w = vec![T::of(1e-6); d];
    }
    match problem.certificate().smooth_beta {
        Some(beta) => fixed_step(data, problem, w, T::one() / beta, opts),
        None => {
            let sol = descent::armijo_minimize(
                |v| (problem.empirical_risk(data, v), problem.empirical_gradient(data, v)),
                w,
                opts.tolerance,
                opts.max_iter,
            )?;
            Ok(ErmSolution {
                w_hat: sol.w,
                method: ErmMethod::FullGradientDescent,
                grad_norm_at_solution: sol.grad_norm,
                iterations_used: sol.iterations,
            })
        }
    }
}

fn fixed_step<T: Scalar>(
    data: &Dataset<T>,
    problem: &Problem<T>,
    mut w: Vec<T>,
    step: T,
    opts: &ErmOptions<T>,
) -> Result<ErmSolution<T>> {
    for it in 0..opts.max_iter {
        let g = problem.empirical_gradient(data, &w);
        let gn = norm(&g);
        if !gn.is_finite() {
            return Err(Error::Diverged { t: it });
        }
        if gn <= opts.tolerance {
            return Ok(ErmSolution {
                w_hat: w,
                method: ErmMethod::FullGradientDescent,
                grad_norm_at_solution: gn,
                iterations_used: it,
            });
        }
        axpy(-step, &g, &mut w);
    }
    Err(Error::NotConverged {
        grad_norm: norm(&problem.empirical_gradient(data, &w)).as_f64(),
        iterations: opts.max_iter,
    })
}

fn normal_equations<T: Scalar>(data: &Dataset<T>, problem: &Problem<T>, opts: &ErmOptions<T>) -> Result<ErmSolution<T>> {
    let d = problem.dimension();
    let inv_n = T::one() / T::of_usize(data.len());
    let mut h = SquareMatrix::zeros(d);
    let mut b = vec![T::zero(); d];
    for z in data.samples() {
        h.add_outer(inv_n, &z.x);
        axpy(inv_n * z.y, &z.x, &mut b);
    }
    let eig = h.symmetric_eigen();
    let cutoff = T::of(1e-12).max(T::epsilon() * T::of(64.0));
    let mut w = eig.pseudo_solve(&b, cutoff);
    let residual = |w: &[T]| -> Vec<T> {
        let hw = h.mul_vec(w);
        hw.iter().zip(&b).map(|(&a, &c)| a - c).collect()
    };
    let mut iterations = 1;
    // iterative refinement; the residual lies in the range of H
    for _ in 0..3 {
        let r = residual(&w);
        if norm(&r) <= opts.tolerance * T::of(1e-2) {
            break;
        }
        let dw = eig.pseudo_solve(&r, cutoff);
        axpy(-T::one(), &dw, &mut w);
        iterations += 1;
    }
    let gn = norm(&problem.empirical_gradient(data, &w));
    if !(gn <= opts.tolerance) {
        return Err(Error::NotConverged {
            grad_norm: gn.as_f64(),
            iterations,
        });
    }
    Ok(ErmSolution {
        w_hat: w,
        method: ErmMethod::ClosedForm,
        grad_norm_at_solution: gn,
        iterations_used: iterations,
    })
}

/// `F_S(w) − F_S(ŵ*)`, clamped at zero, with the raw difference kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationError<T> {
    pub value: T,
    pub raw: T,
}

pub fn optimization_error<T: Scalar>(
    problem: &Problem<T>,
    w: &[T],
    erm: &ErmSolution<T>,
    data: &Dataset<T>,
) -> OptimizationError<T> {
    let raw = problem.empirical_risk(data, w) - problem.empirical_risk(data, &erm.w_hat);
    OptimizationError {
        value: raw.max(T::zero()),
        raw,
    }
}
