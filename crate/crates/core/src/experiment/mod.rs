//! Declarative experiment configs, the runner that turns them into artifacts,
//! and the report that aggregates theorem verdicts.

mod report;
mod run;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditions::{ChainConstants, Condition, Target};
use crate::error::{Error, Result};
use crate::optim::StepSchedule;
use crate::problems::ProblemSpec;
use crate::rates::{theorem_entry, Estimator, Metric, NoiseRule};

pub use report::{emit_report, Report, ReportRow, REPORT_FILE};
pub use run::{run_config, run_experiment, ExperimentRecord, ExitStatus, RunOutcome, CONFIG_COPY, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub problems: Vec<ProblemSpec>,
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Names the result files `<id>.json` and `<id>.csv`.
    pub id: String,
    pub problem: String,
    #[serde(flatten)]
    pub body: ExperimentBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum ExperimentBody {
    Certify(CertifyParams),
    Hierarchy(HierarchyParams),
    Stability(StabilityParams),
    OptErrorSweep(OptErrorParams),
    RateSweep(RateSweepParams),
}

impl ExperimentBody {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentBody::Certify(_) => "certify",
            ExperimentBody::Hierarchy(_) => "hierarchy",
            ExperimentBody::Stability(_) => "stability",
            ExperimentBody::OptErrorSweep(_) => "opt_error_sweep",
            ExperimentBody::RateSweep(_) => "rate_sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyCheck {
    pub condition: Condition,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    pub target: Target,
    pub probes: usize,
    /// Size of the sampled dataset for `empirical_fs`, or for `per_sample_f`
    /// restricted to a sample; without it per-sample checks use the support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub checks: Vec<CertifyCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyParams {
    pub constants: ChainConstants<f64>,
    pub probes: usize,
}

/// Parameters of the nonconvex expansion bound; `t` is the SGD step count at each `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionParams {
    pub c: f64,
    pub beta: f64,
    pub loss_bound_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityParams {
    pub algorithm: Estimator,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    /// Constants of the `4L²/(nμ)` comparison bound, stated explicitly.
    pub lipschitz_l: f64,
    pub mu_qg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<ExpansionParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptErrorParams {
    pub n: usize,
    pub schedule: StepSchedule,
    pub t_grid: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSweepParams {
    pub estimator: Estimator,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    #[serde(default)]
    pub noise_rule: NoiseRule,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

fn default_metric() -> Metric {
    Metric::ExcessRisk
}

fn check_grid(what: &str, grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!("{what} must be nonempty, positive and strictly increasing")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn check_theorem(theorem_id: &Option<String>, slack: Option<f64>) -> Result<()> {
    if let Some(id) = theorem_id {
        theorem_entry(id)?;
    }
    if let Some(s) = slack {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::config(format!("slack must be nonnegative, got {s}")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML; syntax and type errors carry the line and field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn problem(&self, id: &str) -> Result<&ProblemSpec> {
        self.problems
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::config(format!("no problem named '{id}'")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::config("master_seed must fit in a signed 64-bit TOML integer"));
        }
        let mut ids = BTreeSet::new();
        for p in &self.problems {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::config(format!("problem '{}' is declared twice", p.id)));
            }
            p.build::<f64>()
                .map_err(|e| Error::config(format!("problem '{}': {e}", p.id)))?;
        }
        let mut names = BTreeSet::new();
        for e in &self.experiments {
            let valid_name = !e.id.is_empty()
                && e.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                && !matches!(e.id.as_str(), "manifest" | "report" | "config");
            if !valid_name {
                return Err(Error::config(format!("experiment id '{}' is not a usable file name", e.id)));
            }
            if !names.insert(e.id.as_str()) {
                return Err(Error::config(format!("experiment '{}' is declared twice", e.id)));
            }
            self.problem(&e.problem)
                .map_err(|_| Error::config(format!("experiment '{}' references undeclared problem '{}'", e.id, e.problem)))?;
            e.body
                .validate()
                .map_err(|err| Error::config(format!("experiment '{}': {err}", e.id)))?;
        }
        Ok(())
    }
}

impl ExperimentBody {
    fn validate(&self) -> Result<()> {
        match self {
            ExperimentBody::Certify(p) => {
                if p.checks.is_empty() {
                    return Err(Error::config("certify needs at least one check"));
                }
                if p.target == Target::EmpiricalFs && p.n.is_none() {
                    return Err(Error::config("target empirical_fs needs a dataset size n"));
                }
                if p.n == Some(0) {
                    return Err(Error::config("n must be positive"));
                }
            }
            ExperimentBody::Hierarchy(_) => {}
            ExperimentBody::Stability(p) => {
                check_grid("n_grid", &p.n_grid)?;
                check_delta(p.delta)?;
                check_theorem(&p.theorem_id, p.slack)?;
                if p.trials == 0 {
                    return Err(Error::config("stability needs at least one trial"));
                }
                if !(p.lipschitz_l > 0.0 && p.mu_qg > 0.0) {
                    return Err(Error::config("lipschitz_l and mu_qg must be positive"));
                }
                match &p.algorithm {
                    Estimator::Sgd { schedule, .. } => schedule.validate()?,
                    Estimator::Erm if p.expansion.is_some() => {
                        return Err(Error::config("the expansion bound applies to SGD runs only"))
                    }
                    Estimator::Erm => {}
                }
            }
            ExperimentBody::OptErrorSweep(p) => {
                check_grid("t_grid", &p.t_grid)?;
                check_delta(p.delta)?;
                check_theorem(&p.theorem_id, p.slack)?;
                p.schedule.validate()?;
                if p.n == 0 || p.trials == 0 {
                    return Err(Error::config("n and trials must be positive"));
                }
            }
            ExperimentBody::RateSweep(p) => {
                check_grid("n_grid", &p.n_grid)?;
                check_delta(p.delta)?;
                check_theorem(&p.theorem_id, p.slack)?;
                if p.trials == 0 {
                    return Err(Error::config("a sweep needs at least one trial"));
                }
            }
        }
        Ok(())
    }
}
