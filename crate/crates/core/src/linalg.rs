//! Small dense vector and symmetric-matrix helpers.
//!
//! Dimensions in this crate stay at or below 16, so everything here is a
//! plain `Vec`-backed routine rather than a BLAS binding.

use crate::scalar::Scalar;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// `y += alpha * x`
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn scale<T: Scalar>(alpha: T, x: &mut [T]) {
    for xi in x.iter_mut() {
        *xi = *xi * alpha;
    }
}

pub fn is_finite<T: Scalar>(x: &[T]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `self += weight * x x^T`
    pub fn add_outer(&mut self, weight: T, x: &[T]) {
        for i in 0..self.dim {
            let wi = weight * x[i];
            for (a, &xj) in self.data[i * self.dim..(i + 1) * self.dim].iter_mut().zip(x) {
                *a = *a + wi * xj;
            }
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| dot(&self.data[i * self.dim..(i + 1) * self.dim], x))
            .collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.mul_vec(x))
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    pub fn symmetric_eigen(&self) -> SymmetricEigen<T> {
        jacobi_eigen(self)
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

/// Eigenvalues (ascending) with eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: SquareMatrix<T>,
}

impl<T: Scalar> SymmetricEigen<T> {
    pub fn min_value(&self) -> T {
        self.values[0]
    }

    pub fn max_value(&self) -> T {
        *self.values.last().expect("non-empty spectrum")
    }

    /// Minimum-norm solution of `A x = b` through the pseudo-inverse.
    ///
    /// Eigenvalues below `rel_cutoff * max|lambda|` are treated as zero.
    pub fn pseudo_solve(&self, b: &[T], rel_cutoff: T) -> Vec<T> {
        let d = self.values.len();
        let scale = self
            .values
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()));
        let cutoff = rel_cutoff * scale;
        let mut x = vec![T::zero(); d];
        for k in 0..d {
            let lambda = self.values[k];
            if lambda.abs() <= cutoff {
                continue;
            }
            let coeff = (0..d).fold(T::zero(), |acc, i| acc + self.vectors[(i, k)] * b[i]) / lambda;
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = *xi + coeff * self.vectors[(i, k)];
            }
        }
        x
    }
}

fn jacobi_eigen<T: Scalar>(m: &SquareMatrix<T>) -> SymmetricEigen<T> {
    let n = m.dim();
    let mut a = m.clone();
    let mut v = SquareMatrix::identity(n);
    let two = T::of(2.0);

    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: T = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= T::epsilon() * T::epsilon() * diag.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    SymmetricEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_of_diagonal() {
        let m = SquareMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]);
        let e = m.symmetric_eigen();
        assert_relative_eq!(e.values[0], 1.0);
        assert_relative_eq!(e.values[1], 3.0);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let m = SquareMatrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.25],
            vec![0.5, -0.25, 2.0],
        ]);
        let e = m.symmetric_eigen();
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3)
                    .map(|k| e.vectors[(i, k)] * e.values[k] * e.vectors[(j, k)])
                    .sum();
                assert_relative_eq!(r, m[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_solve_gives_min_norm_solution() {
        // rank one: [[1,1],[1,1]] x = [2,2] has min-norm solution [1,1]
        let m = SquareMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let x = m.symmetric_eigen().pseudo_solve(&[2.0, 2.0], 1e-12);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-12);
    }
}
