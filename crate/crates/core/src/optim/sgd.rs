use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::problems::{Dataset, Problem};
use crate::rng;
use crate::scalar::Scalar;

use super::StepSchedule;

/// Full SGD run: iterates `w_1 … w_{T+1}` and the drawn indices `j_1 … j_T`.
///
/// Indices are zero-based in memory and one-based in CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub iterates: Vec<Vec<T>>,
    pub index_sequence: Vec<usize>,
    pub schedule: StepSchedule,
    pub seed: u64,
    pub dataset_seed: u64,
    pub max_dist_from_wstar: T,
    pub left_domain: bool,
}

impl<T: Scalar> Trajectory<T> {
    pub fn steps(&self) -> usize {
        self.index_sequence.len()
    }

    pub fn last(&self) -> &[T] {
        self.iterates.last().expect("a trajectory holds at least w_1")
    }
}

/// Summary of a run that did not keep the iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdOutcome<T> {
    pub w_last: Vec<T>,
    pub max_dist_from_wstar: T,
    pub left_domain: bool,
    pub steps: usize,
}

fn guard<T: Scalar>(problem: &Problem<T>, w: &[T], t: usize) -> Result<()> {
    let limit = T::of(10.0) * problem.radius();
    let n = norm(w);
    if !n.is_finite() || n > limit {
        Err(Error::Diverged { t })
    } else {
        Ok(())
    }
}

fn check_inputs<T: Scalar>(data: &Dataset<T>, schedule: &StepSchedule) -> Result<()> {
    if data.is_empty() {
        return Err(Error::config("SGD needs a nonempty dataset"));
    }
    schedule.validate()
}

/// Shared loop; `visit(t, η_t, j_t, w_t)` sees each iterate before its update.
fn drive<T, V>(
    problem: &Problem<T>,
    data: &Dataset<T>,
    schedule: &StepSchedule,
    steps: usize,
    seed: u64,
    mut visit: V,
) -> Result<SgdOutcome<T>>
where
    T: Scalar,
    V: FnMut(usize, T, usize, &[T]),
{
    check_inputs(data, schedule)?;
    let n = data.len();
    let d = problem.dimension();
    let w_star = problem.w_star();
    let radius = problem.radius();
    let mut indices = rng::seeded(seed);
    let mut w = vec![T::zero(); d];
    let mut g = vec![T::zero(); d];
    let mut max_dist = dist(&w, w_star);
    for t in 1..=steps {
        let j = indices.gen_range(0..n);
        let eta: T = schedule.step(t);
        visit(t, eta, j, &w);
        problem.grad_into(&w, &data.samples()[j], &mut g);
        for (wi, &gi) in w.iter_mut().zip(&g) {
            *wi = *wi - eta * gi;
        }
        guard(problem, &w, t + 1)?;
        max_dist = max_dist.max(dist(&w, w_star));
    }
    Ok(SgdOutcome {
        w_last: w,
        max_dist_from_wstar: max_dist,
        left_domain: max_dist > radius,
        steps,
    })
}

/// Runs SGD from `w_1 = 0`, sampling indices uniformly with replacement.
pub fn sgd_run<T: Scalar>(
    problem: &Problem<T>,
    data: &Dataset<T>,
    schedule: &StepSchedule,
    steps: usize,
    seed: u64,
) -> Result<Trajectory<T>> {
    let mut iterates = Vec::with_capacity(steps + 1);
    let mut index_sequence = Vec::with_capacity(steps);
    let out = drive(problem, data, schedule, steps, seed, |_, _, j, w| {
        iterates.push(w.to_vec());
        index_sequence.push(j);
    })?;
    iterates.push(out.w_last);
    Ok(Trajectory {
        iterates,
        index_sequence,
        schedule: *schedule,
        seed,
        dataset_seed: data.seed(),
        max_dist_from_wstar: out.max_dist_from_wstar,
        left_domain: out.left_domain,
    })
}

/// Same computation as [`sgd_run`] without storing the path.
pub fn sgd_last_iterate<T: Scalar>(
    problem: &Problem<T>,
    data: &Dataset<T>,
    schedule: &StepSchedule,
    steps: usize,
    seed: u64,
) -> Result<SgdOutcome<T>> {
    drive(problem, data, schedule, steps, seed, |_, _, _, _| {})
}

/// Two SGD runs on neighbouring datasets sharing one index sequence.
pub fn coupled_sgd_run<T: Scalar>(
    problem: &Problem<T>,
    data: &Dataset<T>,
    data_prime: &Dataset<T>,
    schedule: &StepSchedule,
    steps: usize,
    seed: u64,
) -> Result<(Trajectory<T>, Trajectory<T>)> {
    check_neighbours(data, data_prime)?;
    let a = sgd_run(problem, data, schedule, steps, seed)?;
    let b = sgd_run(problem, data_prime, schedule, steps, seed)?;
    Ok((a, b))
}

/// Last iterates of a coupled pair, advancing both runs in lockstep.
pub fn coupled_sgd_last<T: Scalar>(
    problem: &Problem<T>,
    data: &Dataset<T>,
    data_prime: &Dataset<T>,
    schedule: &StepSchedule,
    steps: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    check_neighbours(data, data_prime)?;
    check_inputs(data, schedule)?;
    let n = data.len();
    let d = problem.dimension();
    let mut indices = rng::seeded(seed);
    let mut w = vec![T::zero(); d];
    let mut v = vec![T::zero(); d];
    let mut g = vec![T::zero(); d];
    let mut h = vec![T::zero(); d];
    let mut diverged_apart = false;
    for t in 1..=steps {
        let j = indices.gen_range(0..n);
        let eta: T = schedule.step(t);
        if diverged_apart || data.samples()[j] != data_prime.samples()[j] {
            problem.grad_into(&w, &data.samples()[j], &mut g);
            problem.grad_into(&v, &data_prime.samples()[j], &mut h);
            for k in 0..d {
                w[k] = w[k] - eta * g[k];
                v[k] = v[k] - eta * h[k];
            }
            diverged_apart = true;
        } else {
            problem.grad_into(&w, &data.samples()[j], &mut g);
            for k in 0..d {
                w[k] = w[k] - eta * g[k];
            }
            v.copy_from_slice(&w);
        }
        guard(problem, &w, t + 1)?;
        guard(problem, &v, t + 1)?;
    }
    Ok((w, v))
}

fn check_neighbours<T: Scalar>(a: &Dataset<T>, b: &Dataset<T>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::config(format!(
            "coupled datasets differ in size: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let differing = a
        .samples()
        .iter()
        .zip(b.samples())
        .filter(|(x, y)| x != y)
        .count();
    if differing > 1 {
        return Err(Error::config(format!(
            "coupled datasets differ in {differing} positions; at most one allowed"
        )));
    }
    Ok(())
}

/// Recomputes every update `w_{t+1} = w_t − η_t ∇f(w_t; z_{j_t})` and checks
/// it reproduces the stored iterate bit for bit. Returns the first mismatching `t`.
pub fn replay_audit<T: Scalar>(problem: &Problem<T>, data: &Dataset<T>, traj: &Trajectory<T>) -> Option<usize> {
    let d = problem.dimension();
    let mut g = vec![T::zero(); d];
    for (k, &j) in traj.index_sequence.iter().enumerate() {
        let t = k + 1;
        let eta: T = traj.schedule.step(t);
        let w = &traj.iterates[k];
        problem.grad_into(w, &data.samples()[j], &mut g);
        let next = &traj.iterates[k + 1];
        let exact = w
            .iter()
            .zip(&g)
            .zip(next)
            .all(|((&wi, &gi), &ni)| (wi - eta * gi).to_bits_eq(ni));
        if !exact {
            return Some(t);
        }
    }
    None
}

trait BitEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Scalar> BitEq for T {
    fn to_bits_eq(self, other: Self) -> bool {
        // equal values, or both NaN; ±0 never arise from identical arithmetic
        self == other || (self.is_nan() && other.is_nan())
    }
}

/// CSV with columns `t,eta_t,j_t,w_1..w_d` and optionally `F_S(w_t)`.
///
/// The final row carries `w_{T+1}` with empty step and index fields.
pub fn write_trajectory_csv<T: Scalar, W: Write>(
    traj: &Trajectory<T>,
    risk: Option<(&Problem<T>, &Dataset<T>)>,
    mut out: W,
) -> Result<()> {
    let d = traj.iterates.first().map_or(0, Vec::len);
    let mut header = String::from("t,eta_t,j_t");
    for k in 1..=d {
        header.push_str(&format!(",w_{k}"));
    }
    if risk.is_some() {
        header.push_str(",F_S");
    }
    writeln!(out, "{header}")?;
    for (k, w) in traj.iterates.iter().enumerate() {
        let t = k + 1;
        let mut line = t.to_string();
        if let Some(&j) = traj.index_sequence.get(k) {
            let eta: T = traj.schedule.step(t);
            line.push_str(&format!(",{eta},{}", j + 1));
        } else {
            line.push_str(",,");
        }
        for v in w {
            line.push_str(&format!(",{v}"));
        }
        if let Some((problem, data)) = risk {
            line.push_str(&format!(",{}", problem.empirical_risk(data, w)));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
