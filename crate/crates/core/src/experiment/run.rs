use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use super::{
    CertifyParams, ExperimentBody, ExperimentConfig, ExperimentSpec, HierarchyParams, OptErrorParams, RateSweepParams,
    StabilityParams,
};
use crate::conditions::{certify, hierarchy_audit};
use crate::error::{Error, Result};
use crate::problems::{sample_dataset, Problem, ProblemSpec};
use crate::rates::{
    compare_with_slack, fit_loglog, metric_quantile_curve, opt_error_sweep, quantile_curve, run_sweep, theorem_entry,
    Axis, Estimator, EstimatorKind, LogCorrection, NoiseRule, RateFit, SweepConfig, SweepTable, TheorySetup, Verdict,
    DEFAULT_SLACK,
};
use crate::rng::{derive_seed, tag};
use crate::stability::{
    default_probe_grid, default_replacement_indices, empirical_uniform_stability, theoretical_stability_bound,
    write_stability_csv, Algorithm, BoundKind, StabilitySweepRow,
};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Canonical copy of the effective config, written next to the results.
pub const CONFIG_COPY: &str = "config.toml";

/// Sweeps whose failed-trial fraction exceeds this are divergence-dominated.
const MAX_FAILED_FRACTION: f64 = 0.1;

/// Outcome classes, ordered by severity; the process exit code is the most severe one seen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    #[default]
    Success,
    DivergenceDominated,
    PreconditionUnmet,
    ConfigError,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::ConfigError => 2,
            ExitStatus::PreconditionUnmet => 3,
            ExitStatus::DivergenceDominated => 4,
        }
    }

    /// Precondition failures map to 3, divergence to 4, anything else to 2.
    pub fn of_error(e: &Error) -> Self {
        match e.root() {
            Error::Precondition(_) => ExitStatus::PreconditionUnmet,
            Error::Diverged { .. } => ExitStatus::DivergenceDominated,
            _ => ExitStatus::ConfigError,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub kind: String,
    pub files: Vec<String>,
    pub status: ExitStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub config_hash: String,
    pub output_dir: PathBuf,
    pub records: Vec<ExperimentRecord>,
}

/// Parses `config_path`, applies the overrides and runs every experiment.
pub fn run_experiment(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<RunOutcome> {
    let mut config = ExperimentConfig::from_path(config_path)?;
    if let Some(out) = out {
        config.output_dir = out.to_path_buf();
    }
    if let Some(seed) = seed {
        config.master_seed = seed;
        config.validate()?;
    }
    run_config(&config, |_| true)
}

fn unix_millis() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// The config with `output_dir` neutralized, so artifacts do not depend on where they are written.
fn portable(config: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: PathBuf::from("."),
        ..config.clone()
    }
}

/// Runs the experiments accepted by `select`, writing one JSON result per
/// experiment (plus a CSV for sweeps), the config copy and the manifest.
///
/// Failures inside an experiment are recorded in its result file and do not
/// stop later experiments.
pub fn run_config(config: &ExperimentConfig, select: impl Fn(&ExperimentSpec) -> bool) -> Result<RunOutcome> {
    config.validate()?;
    let started = unix_millis();
    let clock = Instant::now();
    let canonical = portable(config);
    let hash = canonical.hash()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_COPY), canonical.to_toml_string()?)?;

    let mut records = Vec::new();
    for spec in config.experiments.iter().filter(|e| select(e)) {
        let problem_spec = config.problem(&spec.problem)?;
        let seed = derive_seed(config.master_seed, &[tag(&spec.id)]);
        let mut result = ResultBuilder::default();
        match run_one(spec, problem_spec, seed, &mut result) {
            Ok(()) => {}
            Err(e) => result.fail(&e),
        }
        let mut files = Vec::new();
        for (name, bytes) in &result.extra_files {
            let file = format!("{}.{name}", spec.id);
            fs::write(dir.join(&file), bytes)?;
            files.push(file);
        }
        let mut body = json!({
            "config_hash": hash,
            "experiment": spec.id,
            "kind": spec.body.kind_name(),
            "problem": spec.problem,
            "seed": seed,
            "status": result.status,
            "exit_code": result.status.code(),
            "error": result.error,
        });
        let map = body.as_object_mut().expect("object literal");
        for (k, v) in result.fields {
            map.insert(k, v);
        }
        let file = format!("{}.json", spec.id);
        write_json(&dir.join(&file), &body)?;
        files.insert(0, file);
        records.push(ExperimentRecord {
            id: spec.id.clone(),
            kind: spec.body.kind_name().into(),
            files,
            status: result.status,
            error: result.error,
        });
    }

    let status = records.iter().map(|r| r.status).max().unwrap_or(ExitStatus::Success);
    let manifest = json!({
        "config_hash": hash,
        "master_seed": config.master_seed,
        "versions": { "ratecheck": env!("CARGO_PKG_VERSION"), "artifact_format": 1 },
        "started_at_unix_ms": started as u64,
        "finished_at_unix_ms": unix_millis() as u64,
        "wall_time_seconds": clock.elapsed().as_secs_f64(),
        "config_file": CONFIG_COPY,
        "experiments": records,
        "exit_code": status.code(),
    });
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(RunOutcome {
        status,
        config_hash: hash,
        output_dir: dir.clone(),
        records,
    })
}

#[derive(Default)]
struct ResultBuilder {
    fields: Vec<(String, Value)>,
    extra_files: Vec<(&'static str, Vec<u8>)>,
    status: ExitStatus,
    error: Option<String>,
}

impl ResultBuilder {
    fn set(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.fields.push((key.into(), serde_json::to_value(value)?));
        Ok(())
    }

    fn raise(&mut self, status: ExitStatus) {
        self.status = self.status.max(status);
    }

    fn fail(&mut self, e: &Error) {
        self.raise(ExitStatus::of_error(e));
        self.error = Some(e.to_string());
    }

    /// Fits the curve and, when a theorem is named, compares the fit with it.
    fn fit_and_judge(
        &mut self,
        curve: &[(usize, f64)],
        theorem_id: Option<&str>,
        slack: Option<f64>,
        setup: &TheorySetup,
    ) -> Result<()> {
        self.set("curve", curve)?;
        let correction = match theorem_id {
            Some(id) if theorem_entry(id)?.log_correction => LogCorrection::DivideLogN,
            _ => LogCorrection::None,
        };
        if curve.len() < 3 {
            self.set("fit", Value::Null)?;
            return Ok(());
        }
        let fit: RateFit = fit_loglog(curve, correction)?;
        self.set("fit", &fit)?;
        if let Some(id) = theorem_id {
            self.set("theory_setup", setup)?;
            let verdict: Verdict = compare_with_slack(&fit, id, setup, slack.unwrap_or(DEFAULT_SLACK))?;
            self.set("verdict", verdict)?;
        }
        Ok(())
    }

    fn csv(&mut self, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        f(&mut bytes)?;
        self.extra_files.push(("csv", bytes));
        Ok(())
    }

    /// Records the failed fraction; true when the sweep is divergence-dominated and should not be fitted.
    fn check_failures(&mut self, table: &SweepTable<f64>) -> Result<bool> {
        let frac = table.failed_fraction();
        self.set("failed_fraction", frac)?;
        if frac > MAX_FAILED_FRACTION {
            self.raise(ExitStatus::DivergenceDominated);
            self.error = Some(format!(
                "{} of {} trials failed; sweep is divergence-dominated",
                table.failed_rows(),
                table.rows.len()
            ));
            return Ok(true);
        }
        Ok(false)
    }
}

fn run_one(spec: &ExperimentSpec, problem_spec: &ProblemSpec, seed: u64, out: &mut ResultBuilder) -> Result<()> {
    let problem: Problem<f64> = problem_spec.build()?;
    out.set("certificate", problem.certificate())?;
    match &spec.body {
        ExperimentBody::Certify(p) => run_certify(&problem, p, seed, out),
        ExperimentBody::Hierarchy(p) => run_hierarchy(&problem, p, seed, out),
        ExperimentBody::Stability(p) => run_stability(&problem, p, seed, out),
        ExperimentBody::OptErrorSweep(p) => run_opt_error(&problem, p, seed, out),
        ExperimentBody::RateSweep(p) => run_rate_sweep(problem_spec, &problem, p, seed, out),
    }
}

fn run_certify(problem: &Problem<f64>, p: &CertifyParams, seed: u64, out: &mut ResultBuilder) -> Result<()> {
    let data = p.n.map(|n| sample_dataset(problem, n, derive_seed(seed, &[tag("data")])));
    let mut results = Vec::with_capacity(p.checks.len());
    for (k, check) in p.checks.iter().enumerate() {
        let s = derive_seed(seed, &[tag("check"), k as u64]);
        let r = certify(check.condition, p.target, problem, data.as_ref(), check.constant, p.probes, s)?;
        results.push(r.to_json());
    }
    out.set("all_passed", results.iter().all(|r| r["passed"] == Value::Bool(true)))?;
    out.set("results", results)
}

fn run_hierarchy(problem: &Problem<f64>, p: &HierarchyParams, seed: u64, out: &mut ResultBuilder) -> Result<()> {
    let audit = hierarchy_audit(problem, &p.constants, p.probes, seed)?;
    out.set("results", audit.results.iter().map(|r| r.to_json()).collect::<Vec<_>>())?;
    out.set("first_failure", audit.first_failure.map(|c| c.name()))?;
    out.set("all_passed", audit.all_passed())?;
    let convex_pl = audit.convex_pl.as_ref().map(|(estimate, record)| {
        json!({
            "estimate": estimate,
            "certificate": record.as_ref().map(|r| r.to_json()),
        })
    });
    out.set("convex_pl", convex_pl)
}

fn run_stability(problem: &Problem<f64>, p: &StabilityParams, seed: u64, out: &mut ResultBuilder) -> Result<()> {
    let probes = default_probe_grid(problem);
    let mut rows = Vec::with_capacity(p.n_grid.len());
    let mut reports = Vec::with_capacity(p.n_grid.len());
    let mut capped_any = false;
    for &n in &p.n_grid {
        let algorithm = match p.algorithm {
            Estimator::Erm => Algorithm::Erm,
            Estimator::Sgd { schedule, t_rule } => {
                let (steps, capped) = t_rule.resolve(n);
                capped_any |= capped;
                Algorithm::Sgd { steps, schedule }
            }
        };
        let indices = default_replacement_indices(n, derive_seed(seed, &[tag("indices"), n as u64]));
        let s = derive_seed(seed, &[tag("n"), n as u64]);
        let report = empirical_uniform_stability(problem, n, &algorithm, &indices, &probes, p.trials, p.delta, s)?;
        let erm = theoretical_stability_bound(&BoundKind::ErmQg {
            l: p.lipschitz_l,
            mu: p.mu_qg,
            n,
        })?;
        let expansion = match (&p.expansion, algorithm) {
            (Some(e), Algorithm::Sgd { steps, .. }) => Some(theoretical_stability_bound(&BoundKind::ExpansionNonconvex {
                c: e.c,
                beta: e.beta,
                t: steps,
                n,
                delta: p.delta,
                loss_bound_m: e.loss_bound_m,
            })?),
            (Some(_), Algorithm::Erm) => {
                return Err(Error::config("the expansion bound applies to SGD runs only"));
            }
            (None, _) => None,
        };
        rows.push(StabilitySweepRow {
            n,
            algorithm: algorithm.label(),
            empirical_sup: report.empirical_sup,
            quantile: report.quantile_1_minus_delta,
            bound_erm_qg: Some(erm.value),
            bound_sgd_qg: None,
            bound_expansion: expansion.map(|b| b.value),
        });
        reports.push(json!({
            "n": n,
            "algorithm": algorithm,
            "empirical_sup": report.empirical_sup,
            "quantile_1_minus_delta": report.quantile_1_minus_delta,
            "replacement_indices": report.replacement_indices,
            "per_index_sup": report.per_index_sup,
            "probe_grid_size": report.probe_grid_size,
            "bound_erm_qg": erm.value,
            "bound_erm_qg_holds": report.empirical_sup <= erm.value,
            "bound_expansion": expansion.map(|b| b.value),
            "bound_expansion_vacuous": expansion.and_then(|b| b.vacuous),
        }));
    }
    out.set("capped", capped_any)?;
    out.set("rows", reports)?;
    out.csv(|buf| write_stability_csv(&rows, buf))?;
    let (estimator, t_rule) = match p.algorithm {
        Estimator::Erm => (EstimatorKind::Erm, None),
        Estimator::Sgd { t_rule, .. } => (EstimatorKind::Sgd, Some(t_rule)),
    };
    let setup = TheorySetup {
        estimator,
        axis: Axis::N,
        t_rule,
        noise_rule: NoiseRule::Fixed,
        noiseless: problem.noise_level() == 0.0,
    };
    let curve: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.quantile)).collect();
    out.fit_and_judge(&curve, p.theorem_id.as_deref(), p.slack, &setup)
}

fn run_opt_error(problem: &Problem<f64>, p: &OptErrorParams, seed: u64, out: &mut ResultBuilder) -> Result<()> {
    let data = sample_dataset(problem, p.n, derive_seed(seed, &[tag("data")]));
    let table = opt_error_sweep(problem, &data, &p.schedule, &p.t_grid, p.trials, derive_seed(seed, &[tag("sgd")]))?;
    out.csv(|buf| table.write_csv(buf))?;
    if out.check_failures(&table)? {
        return Ok(());
    }
    let curve = quantile_curve(&table, p.delta)?;
    let setup = TheorySetup {
        estimator: EstimatorKind::Sgd,
        axis: Axis::T,
        t_rule: None,
        noise_rule: NoiseRule::Fixed,
        noiseless: problem.noise_level() == 0.0,
    };
    out.fit_and_judge(&curve, p.theorem_id.as_deref(), p.slack, &setup)
}

fn run_rate_sweep(
    spec: &ProblemSpec,
    problem: &Problem<f64>,
    p: &RateSweepParams,
    seed: u64,
    out: &mut ResultBuilder,
) -> Result<()> {
    let config = SweepConfig {
        problem_id: spec.id.clone(),
        estimator: p.estimator,
        n_grid: p.n_grid.clone(),
        trials: p.trials,
        delta: p.delta,
        seed,
        noise_rule: p.noise_rule,
    };
    let table = run_sweep::<f64>(&config, spec)?;
    out.set("capped", table.rows.iter().any(|r| r.capped))?;
    out.csv(|buf| table.write_csv(buf))?;
    if out.check_failures(&table)? {
        return Ok(());
    }
    let curve = metric_quantile_curve(&table, p.delta, p.metric)?;
    let noiseless = problem.noise_level() == 0.0 && p.noise_rule == NoiseRule::Fixed;
    let setup = TheorySetup::from_sweep(&config, noiseless);
    out.fit_and_judge(&curve, p.theorem_id.as_deref(), p.slack, &setup)
}
