use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{erm_solve, optimization_error, sgd_last_iterate, StepSchedule};
use crate::problems::{sample_dataset, Dataset, PopRiskMode, Problem, ProblemSpec};
use crate::rng::{derive_seed, tag};
use crate::scalar::Scalar;
use crate::stability::nearest_rank;

use super::{excess_risk, gradient_deviation, Axis};

/// Largest number of SGD steps a single run may take.
pub const T_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum TRule {
    Fixed { steps: usize },
    NSquared,
    /// `T = ⌈n^power⌉`, e.g. `power = 2/α` or `2/θ`.
    NPow { power: f64 },
}

impl TRule {
    /// Steps for sample size `n`, capped at [`T_CAP`]; the flag reports capping.
    pub fn resolve(&self, n: usize) -> (usize, bool) {
        let raw = match *self {
            TRule::Fixed { steps } => steps as f64,
            TRule::NSquared => (n as f64).powi(2),
            TRule::NPow { power } => (n as f64).powf(power).ceil(),
        };
        if raw > T_CAP as f64 {
            (T_CAP, true)
        } else {
            (raw as usize, false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Estimator {
    Erm,
    Sgd { schedule: StepSchedule, t_rule: TRule },
}

/// How the label noise of the problem family scales with `n`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseRule {
    /// The declared noise level at every `n`.
    #[default]
    Fixed,
    /// `ν = ν₀/√n`, so `F* = ν²/2 = Θ(1/n)` for least squares.
    InvSqrtN { nu0: f64 },
}

impl NoiseRule {
    pub fn noise_at(&self, declared: f64, n: usize) -> f64 {
        match *self {
            NoiseRule::Fixed => declared,
            NoiseRule::InvSqrtN { nu0 } => nu0 / (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub problem_id: String,
    pub estimator: Estimator,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    pub seed: u64,
    #[serde(default)]
    pub noise_rule: NoiseRule,
}

impl SweepConfig {
    /// Checks the grid, δ and the estimator. Trial counts and grid length are
    /// checked where they matter: by [`quantile_curve`] and the log-log fit.
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::config("n_grid is empty"));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_grid must be positive and strictly increasing"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.trials == 0 {
            return Err(Error::config("a sweep needs at least one trial"));
        }
        if let NoiseRule::InvSqrtN { nu0 } = self.noise_rule {
            if !(nu0.is_finite() && nu0 > 0.0) {
                return Err(Error::config("nu0 must be positive"));
            }
        }
        if let Estimator::Sgd { schedule, t_rule } = &self.estimator {
            schedule.validate()?;
            match *t_rule {
                TRule::Fixed { steps: 0 } => return Err(Error::config("SGD needs at least one step")),
                TRule::NPow { power } if !(power.is_finite() && power > 0.0) => {
                    return Err(Error::config("n_pow power must be positive"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// `⌈1/δ⌉`, the fewest trials for which the nearest-rank quantile is not the maximum by default.
pub(crate) fn min_trials(delta: f64) -> usize {
    // guard against 1/0.05 = 20.000000000000004
    ((1.0 / delta) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub n: usize,
    /// SGD steps; `None` for ERM.
    pub steps: Option<usize>,
    pub trial: usize,
    pub excess_risk: Option<T>,
    /// `F_S(w) − F_S(ŵ*)` for SGD rows.
    pub eps_opt: Option<T>,
    /// `‖∇F(w) − ∇F_S(w)‖` at the output, for closed-form problems.
    pub grad_deviation: Option<T>,
    pub capped: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExcessRisk,
    EpsOpt,
    GradDeviation,
}

impl<T: Scalar> SweepRow<T> {
    fn metric(&self, m: Metric) -> Option<T> {
        match m {
            Metric::ExcessRisk => self.excess_risk,
            Metric::EpsOpt => self.eps_opt,
            Metric::GradDeviation => self.grad_deviation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable<T> {
    /// Whether rows vary in `n` or in the step count.
    pub axis: Axis,
    pub rows: Vec<SweepRow<T>>,
}

impl<T: Scalar> SweepTable<T> {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn failed_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.failed_rows() as f64 / self.rows.len() as f64
        }
    }

    fn key(&self, row: &SweepRow<T>) -> usize {
        match self.axis {
            Axis::N => row.n,
            Axis::T => row.steps.unwrap_or(0),
        }
    }

    /// CSV with header `n,steps,trial,excess_risk,eps_opt,grad_deviation,capped,error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,steps,trial,excess_risk,eps_opt,grad_deviation,capped,error")?;
        let num = |v: Option<T>| v.map_or(String::new(), |x| format!("{:e}", x.as_f64()));
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.steps.map_or(String::new(), |s| s.to_string()),
                r.trial,
                num(r.excess_risk),
                num(r.eps_opt),
                num(r.grad_deviation),
                r.capped,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            )?;
        }
        Ok(())
    }

    /// Reads a table written by [`SweepTable::write_csv`]; the axis is not stored in the file.
    pub fn read_csv<R: BufRead>(input: R, axis: Axis) -> Result<Self> {
        const HEADER: &str = "n,steps,trial,excess_risk,eps_opt,grad_deviation,capped,error";
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim_end() != HEADER {
            return Err(Error::Parse(format!("sweep CSV must start with '{HEADER}'")));
        }
        let bad = |line: usize, what: &str| Error::Parse(format!("sweep CSV line {line}: bad {what}"));
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let line_no = k + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.splitn(8, ',').collect();
            if f.len() != 8 {
                return Err(bad(line_no, "field count"));
            }
            let count = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(line_no, what));
            let value = |s: &str, what: &str| -> Result<Option<T>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>().map(|v| Some(T::of(v))).map_err(|_| bad(line_no, what))
                }
            };
            rows.push(SweepRow {
                n: count(f[0], "n")?,
                steps: if f[1].is_empty() { None } else { Some(count(f[1], "steps")?) },
                trial: count(f[2], "trial")?,
                excess_risk: value(f[3], "excess_risk")?,
                eps_opt: value(f[4], "eps_opt")?,
                grad_deviation: value(f[5], "grad_deviation")?,
                capped: f[6].parse().map_err(|_| bad(line_no, "capped"))?,
                error: (!f[7].is_empty()).then(|| f[7].to_string()),
            });
        }
        Ok(SweepTable { axis, rows })
    }
}

fn excess_unchecked<T: Scalar>(problem: &Problem<T>, w: &[T]) -> Result<T> {
    match problem.pop_risk_mode() {
        PopRiskMode::ClosedForm => Ok(problem.exact_excess_risk(w).max(T::zero())),
        PopRiskMode::MonteCarlo { .. } => Ok(excess_risk(problem, w)?.value),
    }
}

fn cell_seeds(seed: u64, n: usize, trial: usize) -> (u64, u64) {
    let cell = derive_seed(seed, &[tag("cell"), n as u64, trial as u64]);
    (derive_seed(cell, &[tag("data")]), derive_seed(cell, &[tag("sgd")]))
}

fn run_cell<T: Scalar>(problem: &Problem<T>, estimator: &Estimator, n: usize, trial: usize, seed: u64) -> SweepRow<T> {
    let (data_seed, sgd_seed) = cell_seeds(seed, n, trial);
    let data = sample_dataset(problem, n, data_seed);
    let mut row = SweepRow {
        n,
        steps: None,
        trial,
        excess_risk: None,
        eps_opt: None,
        grad_deviation: None,
        capped: false,
        error: None,
    };
    let outcome = (|| -> Result<(Vec<T>, Option<T>)> {
        match estimator {
            Estimator::Erm => Ok((erm_solve(&data, problem)?.w_hat, None)),
            Estimator::Sgd { schedule, t_rule } => {
                let (steps, capped) = t_rule.resolve(n);
                row.steps = Some(steps);
                row.capped = capped;
                let w = sgd_last_iterate(problem, &data, schedule, steps, sgd_seed)?.w_last;
                let erm = erm_solve(&data, problem)?;
                let eps = optimization_error(problem, &w, &erm, &data).value;
                Ok((w, Some(eps)))
            }
        }
    })();
    match outcome.and_then(|(w, eps)| Ok((excess_unchecked(problem, &w)?, eps, w))) {
        Ok((excess, eps, w)) => {
            row.excess_risk = Some(excess);
            row.eps_opt = eps;
            if problem.pop_risk_mode() == PopRiskMode::ClosedForm {
                row.grad_deviation = Some(gradient_deviation(problem, &data, &w));
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// One row per `(n, trial)`, in that order; failed runs are kept with their error.
///
/// Every cell derives its own seeds from `config.seed`, so the table does not
/// depend on the order in which cells are evaluated.
pub fn run_sweep<T: Scalar>(config: &SweepConfig, spec: &ProblemSpec) -> Result<SweepTable<T>> {
    config.validate()?;
    if spec.id != config.problem_id {
        return Err(Error::config(format!(
            "sweep refers to problem '{}' but '{}' was given",
            config.problem_id, spec.id
        )));
    }
    let problems: Vec<Problem<T>> = config
        .n_grid
        .iter()
        .map(|&n| spec.with_noise(config.noise_rule.noise_at(spec.params.noise_level, n)).build())
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|k| (0..config.trials).map(move |t| (k, t)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(k, t)| run_cell(&problems[k], &config.estimator, config.n_grid[k], t, config.seed))
        .collect();
    Ok(SweepTable { axis: Axis::N, rows })
}

/// Optimization error `F_S(w_{T+1}) − F_S(ŵ*)` on a fixed dataset for each
/// step count in `t_grid`; trial `k` uses the same index stream at every `T`.
pub fn opt_error_sweep<T: Scalar>(
    problem: &Problem<T>,
    data: &Dataset<T>,
    schedule: &StepSchedule,
    t_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SweepTable<T>> {
    schedule.validate()?;
    if t_grid.is_empty() || t_grid[0] == 0 || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("t_grid must be positive and strictly increasing"));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| t > T_CAP) {
        return Err(Error::config(format!("{t} steps exceed the cap of {T_CAP}")));
    }
    if trials == 0 {
        return Err(Error::config("opt_error_sweep needs at least one trial"));
    }
    let erm = erm_solve(data, problem)?;
    let cells: Vec<(usize, usize)> = t_grid
        .iter()
        .flat_map(|&s| (0..trials).map(move |k| (s, k)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(steps, trial)| {
            let sgd_seed = derive_seed(seed, &[tag("opt_error"), trial as u64]);
            let mut row = SweepRow {
                n: data.len(),
                steps: Some(steps),
                trial,
                excess_risk: None,
                eps_opt: None,
                grad_deviation: None,
                capped: false,
                error: None,
            };
            match sgd_last_iterate(problem, data, schedule, steps, sgd_seed) {
                Ok(out) => row.eps_opt = Some(optimization_error(problem, &out.w_last, &erm, data).value),
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    Ok(SweepTable { axis: Axis::T, rows })
}

/// Lower nearest-rank `(1 − δ)`-quantile of excess risk per `n` (or per `T`).
pub fn quantile_curve<T: Scalar>(table: &SweepTable<T>, delta: f64) -> Result<Vec<(usize, T)>> {
    let metric = match table.axis {
        Axis::N => Metric::ExcessRisk,
        Axis::T => Metric::EpsOpt,
    };
    metric_quantile_curve(table, delta, metric)
}

/// Quantile curve of any recorded metric; failed rows are skipped.
pub fn metric_quantile_curve<T: Scalar>(table: &SweepTable<T>, delta: f64, metric: Metric) -> Result<Vec<(usize, T)>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let mut groups: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for r in &table.rows {
        let entry = groups.entry(table.key(r)).or_default();
        if let Some(v) = r.metric(metric) {
            entry.push(v);
        }
    }
    let need = min_trials(delta);
    groups
        .into_iter()
        .map(|(x, vals)| {
            if vals.len() < need {
                return Err(Error::config(format!(
                    "only {} usable trials at {x}; the {}-quantile needs {need}",
                    vals.len(),
                    1.0 - delta
                )));
            }
            Ok((x, nearest_rank(&vals, 1.0 - delta)))
        })
        .collect()
}
