use crate::error::{Error, Result};
use crate::linalg::{axpy, norm};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub(crate) struct Descent<T> {
    pub w: Vec<T>,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient descent with Armijo backtracking from a Barzilai-Borwein trial step.
///
/// Once function values stop resolving the Armijo decrease, a step is still
/// accepted when it halves the gradient norm, so the loop can reach
/// gradient tolerances near machine precision.
pub(crate) fn armijo_minimize<T, F>(fg: F, w0: Vec<T>, tol: T, max_iter: usize) -> Result<Descent<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> (T, Vec<T>),
{
    let out = armijo_run(fg, w0, tol, max_iter)?;
    if out.converged {
        Ok(out)
    } else {
        Err(Error::NotConverged {
            grad_norm: out.grad_norm.as_f64(),
            iterations: out.iterations,
        })
    }
}

/// As [`armijo_minimize`], but returns the last iterate when the tolerance is
/// not met; only non-finite values are errors.
pub(crate) fn armijo_run<T, F>(fg: F, w0: Vec<T>, tol: T, max_iter: usize) -> Result<Descent<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> (T, Vec<T>),
{
    let mut w = w0;
    let (mut f, mut g) = fg(&w);
    let mut step = T::one();
    let c = T::of(1e-4);
    let tiny = T::of(1e-30);
    for it in 0..max_iter {
        let gn = norm(&g);
        if !gn.is_finite() || !f.is_finite() {
            return Err(Error::Diverged { t: it });
        }
        if gn <= tol {
            return Ok(Descent {
                w,
                grad_norm: gn,
                iterations: it,
                converged: true,
            });
        }
        loop {
            let mut trial = w.clone();
            axpy(-step, &g, &mut trial);
            let (f_new, g_new) = fg(&trial);
            let sufficient = f_new <= f - c * step * gn * gn;
            let flat = f_new <= f + T::of(256.0) * T::epsilon() * f.abs() && norm(&g_new) < T::of(0.5) * gn;
            if f_new.is_finite() && (sufficient || flat) {
                // next trial step: Barzilai-Borwein sᵀs/sᵀy when curvature is positive
                let s: Vec<T> = trial.iter().zip(&w).map(|(&a, &b)| a - b).collect();
                let sy: T = s.iter().zip(g_new.iter().zip(&g)).map(|(&si, (&gn_i, &go_i))| si * (gn_i - go_i)).sum();
                let ss: T = s.iter().map(|&si| si * si).sum();
                w = trial;
                f = f_new;
                g = g_new;
                if sy > T::zero() && ss > T::zero() {
                    step = (ss / sy).max(T::of(1e-12)).min(T::of(1e6));
                } else if sufficient {
                    step = (step * T::of(2.0)).min(T::of(1e6));
                }
                break;
            }
            step = step * T::of(0.5);
            if step < tiny {
                return Ok(Descent {
                    w,
                    grad_norm: gn,
                    iterations: it,
                    converged: false,
                });
            }
        }
    }
    Ok(Descent {
        grad_norm: norm(&g),
        w,
        iterations: max_iter,
        converged: false,
    })
}
