use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::rng::{seeded, uniform_in_ball};
use crate::scalar::Scalar;

/// Points of the stratified grid used by `certify`.
pub(crate) const GRID_BUDGET: usize = 20_000;
/// Smaller grid when every evaluation is a Monte-Carlo average.
pub(crate) const GRID_BUDGET_MC: usize = 256;
const MAX_GRID_POINTS: usize = 5_000_000;

/// Lattice or axis-line grid over `B(center, radius)` with about `budget` points,
/// plus the pairs of lattice neighbours that both lie in the ball.
pub(crate) fn stratified<T: Scalar>(center: &[T], radius: T, budget: usize) -> (Vec<Vec<T>>, Vec<(usize, usize)>) {
    let d = center.len();
    let per_axis = (budget as f64).powf(1.0 / d as f64).floor() as usize;
    if per_axis >= 3 {
        let m = if per_axis.is_multiple_of(2) { per_axis - 1 } else { per_axis };
        let axes: Vec<Vec<T>> = center
            .iter()
            .map(|&c| linspace(c - radius, c + radius, m))
            .collect();
        lattice_in_ball(&axes, center, radius)
    } else {
        // high dimension: 1-D lines through the centre along each axis
        let m = (budget / d).max(3) | 1;
        let mut points = Vec::new();
        let mut pairs = Vec::new();
        for k in 0..d {
            let start = points.len();
            for s in linspace(-radius, radius, m) {
                let mut p = center.to_vec();
                p[k] = p[k] + s;
                points.push(p);
            }
            pairs.extend((start..points.len() - 1).map(|i| (i, i + 1)));
        }
        (points, pairs)
    }
}

pub(crate) fn linspace<T: Scalar>(lo: T, hi: T, m: usize) -> Vec<T> {
    if m == 1 {
        return vec![(lo + hi) * T::of(0.5)];
    }
    let step = (hi - lo) / T::of_usize(m - 1);
    (0..m).map(|k| lo + step * T::of_usize(k)).collect()
}

fn lattice_in_ball<T: Scalar>(axes: &[Vec<T>], center: &[T], radius: T) -> (Vec<Vec<T>>, Vec<(usize, usize)>) {
    let (all, pairs) = lattice(axes);
    let keep: Vec<bool> = all
        .iter()
        .map(|p| dist(p, center) <= radius * (T::one() + T::of(1e-12)))
        .collect();
    let mut new_index = vec![usize::MAX; all.len()];
    let mut points = Vec::new();
    for (i, p) in all.into_iter().enumerate() {
        if keep[i] {
            new_index[i] = points.len();
            points.push(p);
        }
    }
    let pairs = pairs
        .into_iter()
        .filter(|&(a, b)| keep[a] && keep[b])
        .map(|(a, b)| (new_index[a], new_index[b]))
        .collect();
    (points, pairs)
}

/// Lattice points and the index pairs of axis neighbours.
pub(crate) type Lattice<T> = (Vec<Vec<T>>, Vec<(usize, usize)>);

/// Full tensor lattice with neighbour pairs along each axis.
pub(crate) fn lattice<T: Scalar>(axes: &[Vec<T>]) -> Lattice<T> {
    let d = axes.len();
    let sizes: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut pairs = Vec::new();
    let mut idx = vec![0usize; d];
    for flat in 0..total {
        points.push((0..d).map(|k| axes[k][idx[k]]).collect());
        // neighbours along axis k differ by the stride of k
        let mut stride = 1;
        for k in (0..d).rev() {
            if idx[k] + 1 < sizes[k] {
                pairs.push((flat, flat + stride));
            }
            stride *= sizes[k];
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    (points, pairs)
}

/// Per-axis box lattice with the given step, as used by `estimate_constant`.
pub(crate) fn box_lattice<T: Scalar>(bounds: &[(f64, f64)], step: f64) -> Result<Lattice<T>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::config("grid step must be positive"));
    }
    let mut total = 1usize;
    let mut axes = Vec::with_capacity(bounds.len());
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config(format!("invalid grid bounds [{lo}, {hi}]")));
        }
        let m = ((hi - lo) / step).round() as usize + 1;
        total = total.saturating_mul(m);
        if total > MAX_GRID_POINTS {
            return Err(Error::config(format!("grid exceeds {MAX_GRID_POINTS} points")));
        }
        axes.push((0..m).map(|k| T::of(lo + step * k as f64)).collect::<Vec<T>>());
    }
    Ok(lattice(&axes))
}

/// `count` uniform points in the ball.
pub(crate) fn random_points<T: Scalar>(center: &[T], radius: T, count: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = seeded(seed);
    (0..count).map(|_| uniform_in_ball(&mut rng, center, radius)).collect()
}

/// `count` pairs in the ball: even pairs are independent, odd pairs are local
/// (second point within `radius / 100` of the first, kept inside the ball).
pub(crate) fn random_pairs<T: Scalar>(center: &[T], radius: T, count: usize, seed: u64) -> Vec<(Vec<T>, Vec<T>)> {
    let mut rng = seeded(seed);
    let local = radius * T::of(0.01);
    (0..count)
        .map(|k| {
            let a = uniform_in_ball(&mut rng, center, radius);
            let b = if k % 2 == 0 {
                uniform_in_ball(&mut rng, center, radius)
            } else {
                let mut b = uniform_in_ball(&mut rng, &a, local);
                let r = dist(&b, center);
                if r > radius {
                    let shrink = radius / r;
                    for (bi, &ci) in b.iter_mut().zip(center) {
                        *bi = ci + (*bi - ci) * shrink;
                    }
                }
                b
            };
            (a, b)
        })
        .collect()
}
