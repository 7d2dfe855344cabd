use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ratecheck(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratecheck"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn quickstart() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quickstart.toml")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .filter(|(name, _)| name != "manifest.json")
        .collect();
    out.sort();
    out
}

const PROBLEM: &str = r#"
master_seed = 5
output_dir = "out"

[[problems]]
id = "ls"
kind = "least_squares"
dimension = 2

[problems.params]
design = { type = "hypercube", radius = 1.0 }
w_star = [0.5, 0.5]
noise_level = 0.3
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, format!("{PROBLEM}{body}")).unwrap();
    path
}

#[test]
fn quickstart_is_byte_deterministic_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let config = quickstart();
    let config = config.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let run_a = ratecheck(&["run", "--config", config, "--out", a.to_str().unwrap()], tmp.path());
    assert_eq!(code(&run_a), 0, "{}", String::from_utf8_lossy(&run_a.stderr));
    let run_b = ratecheck(&["run", "--config", config, "--out", b.to_str().unwrap(), "--jobs", "1"], tmp.path());
    assert_eq!(code(&run_b), 0);
    let (fa, fb) = (artifacts(&a), artifacts(&b));
    assert!(fa.iter().any(|(n, _)| n == "report.json"));
    assert!(fa.iter().any(|(n, _)| n.ends_with(".csv")));
    assert_eq!(fa, fb);

    let replay = ratecheck(&["replay", "--out", a.to_str().unwrap()], tmp.path());
    assert_eq!(code(&replay), 0, "{}", String::from_utf8_lossy(&replay.stdout));

    let report = fs::read(a.join("report.json")).unwrap();
    assert_eq!(code(&ratecheck(&["report", "--out", a.to_str().unwrap()], tmp.path())), 0);
    assert_eq!(report, fs::read(a.join("report.json")).unwrap());
    let text = String::from_utf8(report).unwrap();
    assert!(text.contains("erm_uc_slow") && text.contains("CONSISTENT"));
}

#[test]
fn replay_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let q = quickstart();
    assert_eq!(code(&ratecheck(&["run", "--config", q.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path())), 0);
    let csv = out.join("ls4_erm_rate.csv");
    let mut bytes = fs::read(&csv).unwrap();
    bytes.extend_from_slice(b"\n");
    fs::write(&csv, bytes).unwrap();
    let replay = ratecheck(&["replay", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(code(&replay), 1);
    assert!(String::from_utf8_lossy(&replay.stdout).contains("ls4_erm_rate.csv"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let empty = write_config(dir, "");
    let o = ratecheck(&["run", "--config", empty.to_str().unwrap()], dir);
    assert_eq!(code(&o), 0);
    let names: Vec<String> = artifacts(&dir.join("out")).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, vec!["config.toml".to_string()]);
    assert!(dir.join("out/manifest.json").exists());
    assert_eq!(code(&ratecheck(&["report", "--out", "out"], dir)), 2);

    fs::write(dir.join("bad.toml"), "master_seed = [\n").unwrap();
    let o = ratecheck(&["run", "--config", "bad.toml"], dir);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    assert_eq!(code(&ratecheck(&["run"], dir)), 2);
    assert_eq!(code(&ratecheck(&["run", "--config", "missing.toml"], dir)), 2);

    let precondition = write_config(
        dir,
        r#"
[[experiments]]
id = "fast"
problem = "ls"
kind = "rate_sweep"

[experiments.parameters]
estimator = { type = "erm" }
n_grid = [16, 32, 64]
trials = 20
delta = 0.1
theorem_id = "erm_uc_qg"
"#,
    );
    let o = ratecheck(&["run", "--config", precondition.to_str().unwrap(), "--out", "pre"], dir);
    assert_eq!(code(&o), 3);

    let divergent = write_config(
        dir,
        r#"
[[experiments]]
id = "blowup"
problem = "ls"
kind = "rate_sweep"

[experiments.parameters]
estimator = { type = "sgd", schedule = { type = "constant", eta = 10.0 }, t_rule = { rule = "fixed", steps = 100 } }
n_grid = [8, 16, 32]
trials = 5
delta = 0.5
"#,
    );
    let o = ratecheck(&["sweep", "--config", divergent.to_str().unwrap(), "--out", "div"], dir);
    assert_eq!(code(&o), 4);
}

#[test]
fn subcommands_select_experiment_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = write_config(
        dir,
        r#"
[[experiments]]
id = "cert"
problem = "ls"
kind = "certify"

[experiments.parameters]
target = "population_f"
probes = 100
checks = [{ condition = "qg", constant = 0.5 }]

[[experiments]]
id = "stab"
problem = "ls"
kind = "stability"

[experiments.parameters]
algorithm = { type = "erm" }
n_grid = [8, 16, 32]
trials = 2
delta = 0.5
lipschitz_l = 3.0
mu_qg = 0.5
"#,
    );
    let c = config.to_str().unwrap();
    assert_eq!(code(&ratecheck(&["certify", "--config", c, "--out", "o1"], dir)), 0);
    assert!(dir.join("o1/cert.json").exists() && !dir.join("o1/stab.json").exists());
    assert_eq!(code(&ratecheck(&["stability", "--config", c, "--out", "o2"], dir)), 0);
    assert!(dir.join("o2/stab.json").exists() && dir.join("o2/stab.csv").exists());
    assert!(!dir.join("o2/cert.json").exists());
    let csv = fs::read_to_string(dir.join("o2/stab.csv")).unwrap();
    assert!(csv.starts_with("n,algorithm,empirical_sup,q_1_minus_delta,bound_erm_qg"));

    let listing = ratecheck(&["list-problems", "--config", c], dir);
    assert_eq!(code(&listing), 0);
    assert!(String::from_utf8_lossy(&listing.stdout).contains("least_squares"));

    let seeded = ratecheck(&["certify", "--config", c, "--out", "o3", "--seed", "77"], dir);
    assert_eq!(code(&seeded), 0);
    assert_ne!(fs::read(dir.join("o1/cert.json")).unwrap(), fs::read(dir.join("o3/cert.json")).unwrap());
}

#[test]
fn fit_subcommand_reads_sweep_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut csv = String::from("n,steps,trial,excess_risk,eps_opt,grad_deviation,capped,error\n");
    for n in [10usize, 20, 40, 80] {
        for t in 0..4 {
            csv.push_str(&format!("{n},,{t},{:e},,,false,\n", 2.0 / (n * n) as f64));
        }
    }
    fs::write(dir.join("s.csv"), csv).unwrap();
    let o = ratecheck(&["fit", "s.csv", "--delta", "0.25"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["fit"]["slope"].as_f64().unwrap() + 2.0).abs() < 1e-12);
    assert_eq!(code(&ratecheck(&["fit", "s.csv", "--delta", "0.1"], dir)), 2);
}
