use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ratecheck::experiment::{
    emit_report, run_config, ExitStatus, ExperimentBody, ExperimentConfig, ExperimentSpec, RunOutcome, CONFIG_COPY,
    MANIFEST_FILE, REPORT_FILE,
};
use ratecheck::rates::{fit_loglog, metric_quantile_curve, Axis, LogCorrection, Metric, SweepTable};
use ratecheck::{Error, Problem64};

#[derive(Parser)]
#[command(name = "ratecheck", version, about = "Run rate, stability and condition experiments from a config file")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed; overrides `master_seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Aggregate results written under different configs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in the config, then write the report.
    Run,
    /// List the problems declared in the config with their certified constants.
    ListProblems,
    /// Run the certify and hierarchy experiments.
    Certify,
    /// Run the stability experiments.
    Stability,
    /// Run the rate and optimization-error sweeps.
    Sweep,
    /// Refit a sweep CSV and print the fit as JSON.
    Fit(FitArgs),
    /// Aggregate the results in the output directory into report.json.
    Report,
    /// Rerun the config stored in the output directory and compare every artifact byte for byte.
    Replay,
}

#[derive(Args)]
struct FitArgs {
    csv: PathBuf,
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = AxisArg::N)]
    axis: AxisArg,
    #[arg(long, value_enum, default_value_t = MetricArg::ExcessRisk)]
    metric: MetricArg,
    /// Also fit the slope of `q_{1-δ} / ln n`.
    #[arg(long)]
    divide_log_n: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    N,
    T,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    ExcessRisk,
    EpsOpt,
    GradDeviation,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: ExitStatus::of_error(&e).code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig, Failure> {
    let path = g.config.as_ref().ok_or_else(|| usage("--config is required"))?;
    let mut config = ExperimentConfig::from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if let Some(out) = &g.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = g.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn output_dir(g: &Global) -> Result<PathBuf, Failure> {
    match (&g.out, &g.config) {
        (Some(out), _) => Ok(out.clone()),
        (None, Some(_)) => Ok(load_config(g)?.output_dir),
        (None, None) => Err(usage("pass --out or --config")),
    }
}

fn summarize(outcome: &RunOutcome) -> u8 {
    for r in &outcome.records {
        match &r.error {
            None => println!("{:<24} {:<16} ok", r.id, r.kind),
            Some(e) => println!("{:<24} {:<16} exit {}: {e}", r.id, r.kind, r.status.code()),
        }
    }
    println!("config {} -> {}", outcome.config_hash, outcome.output_dir.display());
    outcome.status.code() as u8
}

fn run_selected(g: &Global, select: impl Fn(&ExperimentSpec) -> bool) -> Result<u8, Failure> {
    let config = load_config(g)?;
    let outcome = run_config(&config, select)?;
    Ok(summarize(&outcome))
}

fn list_problems(g: &Global) -> Result<u8, Failure> {
    let config = load_config(g)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!(
        "{:<16} {:<14} {:>3} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "id", "kind", "d", "L", "beta", "mu_qg", "mu_pl", "F*", "R"
    );
    for spec in &config.problems {
        let p: Problem64 = spec.build()?;
        let c = p.certificate();
        println!(
            "{:<16} {:<14} {:>3} {:>9} {:>9} {:>9} {:>9} {:>9.4} {:>9.4}",
            spec.id,
            spec.kind.name(),
            spec.dimension,
            fmt(c.lipschitz_l),
            fmt(c.smooth_beta),
            fmt(c.mu_qg),
            fmt(c.mu_pl),
            c.min_pop_risk_fstar,
            c.domain_radius_r
        );
    }
    Ok(0)
}

fn fit(args: &FitArgs) -> Result<u8, Failure> {
    let axis = match args.axis {
        AxisArg::N => Axis::N,
        AxisArg::T => Axis::T,
    };
    let metric = match args.metric {
        MetricArg::ExcessRisk => Metric::ExcessRisk,
        MetricArg::EpsOpt => Metric::EpsOpt,
        MetricArg::GradDeviation => Metric::GradDeviation,
    };
    let table = SweepTable::<f64>::read_csv(BufReader::new(File::open(&args.csv)?), axis)?;
    let curve = metric_quantile_curve(&table, args.delta, metric)?;
    let correction = if args.divide_log_n {
        LogCorrection::DivideLogN
    } else {
        LogCorrection::None
    };
    let fit = fit_loglog(&curve, correction)?;
    let out = serde_json::json!({ "curve": curve, "fit": fit });
    println!("{}", serde_json::to_string_pretty(&out).expect("JSON values serialize"));
    Ok(0)
}

fn report(g: &Global) -> Result<u8, Failure> {
    let dir = output_dir(g)?;
    let report = emit_report(&dir, g.force)?;
    for r in &report.rows {
        println!(
            "{:<24} {:<20} slope {:>8.4} vs {:>5} + {:<4} {:?}",
            r.theorem_id, r.experiment, r.fitted_slope, r.theory_exponent, r.slack, r.verdict
        );
    }
    for u in &report.unjudged {
        if let Some(e) = &u.error {
            println!("{:<24} {:<20} {e}", "-", u.experiment);
        }
    }
    println!("wrote {}", dir.join(REPORT_FILE).display());
    Ok(0)
}

fn artifacts(dir: &Path) -> Result<Vec<String>, Failure> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_FILE && n != REPORT_FILE)
        .collect();
    names.sort();
    Ok(names)
}

fn replay(g: &Global) -> Result<u8, Failure> {
    let dir = output_dir(g)?;
    let stored = dir.join(CONFIG_COPY);
    let mut config = ExperimentConfig::from_path(&stored).map_err(|e| usage(format!("{}: {e}", stored.display())))?;
    let scratch = std::env::temp_dir().join(format!("ratecheck-replay-{}", std::process::id()));
    config.output_dir = scratch.clone();
    let outcome = run_config(&config, |_| true);
    let compared = outcome.map_err(Failure::from).and_then(|_| {
        let mut mismatched = Vec::new();
        let expected = artifacts(&dir)?;
        for name in &expected {
            if fs::read(dir.join(name)).ok() != fs::read(scratch.join(name)).ok() {
                mismatched.push(name.clone());
            }
        }
        for name in artifacts(&scratch)? {
            if !expected.contains(&name) {
                mismatched.push(name);
            }
        }
        Ok((expected.len(), mismatched))
    });
    let _ = fs::remove_dir_all(&scratch);
    let (count, mismatched) = compared?;
    if mismatched.is_empty() {
        println!("replay identical: {count} artifacts");
        Ok(0)
    } else {
        for name in &mismatched {
            println!("differs: {name}");
        }
        Ok(1)
    }
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Run => {
            let code = run_selected(g, |_| true)?;
            let dir = load_config(g)?.output_dir;
            if artifacts(&dir)?.iter().any(|n| n.ends_with(".json")) {
                emit_report(&dir, g.force)?;
            }
            Ok(code)
        }
        Command::ListProblems => list_problems(g),
        Command::Certify => run_selected(g, |e| {
            matches!(e.body, ExperimentBody::Certify(_) | ExperimentBody::Hierarchy(_))
        }),
        Command::Stability => run_selected(g, |e| matches!(e.body, ExperimentBody::Stability(_))),
        Command::Sweep => run_selected(g, |e| {
            matches!(e.body, ExperimentBody::RateSweep(_) | ExperimentBody::OptErrorSweep(_))
        }),
        Command::Fit(args) => fit(args),
        Command::Report => report(g),
        Command::Replay => replay(g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
