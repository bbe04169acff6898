use std::io::Write;
use std::process::{Command, Output, Stdio};

const SMALL: &str = r#"
seed = 3

[data.drift]
n_users = 120
n_items = 60
seq_len = 12
n_interest_clusters = 6
drift_point = 0.8
noise = 0.1
seed = 0
drift_jitter = 3
popularity_skew = 1.0
transition_prob = 0.0
n_styles = 3
style_affinity = 0.8

[cloud]
emb_dim = 8
encoder = "mean-pool"
max_seq_len = 3
optimizer = "adam"
lr = 0.02
epochs = 3
neg_rate = 2

[device]
emb_dim = 4
encoder = "gated-recurrent"
max_seq_len = 3
optimizer = "adam"
lr = 0.02
epochs = 2

[collab]
coop_epochs = 1
adaptive_epochs = 1

[sim]
k = 20
seeds = [1, 2]

[ablation]
ks = [20]
budgets = [0.2]
"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        Run { dir }
    }

    fn cmd(&self, args: &[&str]) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_dcrec"));
        c.current_dir(self.dir.path())
            .env_remove("DCREC_RUN_DIR")
            .env_remove("DCREC_EVENTS")
            .args(["--config", "small.toml"])
            .args(args);
        c
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.cmd(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn path(&self, rel: &str) -> std::path::PathBuf {
        self.dir.path().join(rel)
    }
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {stderr}"))
}

fn pipeline(run: &Run, run_dir: &str) {
    for stage in ["prepare", "train", "calibrate", "eval"] {
        run.ok(&["--run-dir", run_dir, stage]);
    }
}

#[test]
fn eval_without_checkpoints_names_the_missing_stage() {
    let run = Run::new();
    let v = error_json(&run.cmd(&["eval"]).output().unwrap());
    assert_eq!(v["status"], "error");
    assert_eq!(v["command"], "eval");
    assert_eq!(v["run_first"], "prepare");

    run.ok(&["prepare"]);
    let v = error_json(&run.cmd(&["eval"]).output().unwrap());
    assert_eq!(v["run_first"], "train");
    assert!(v["missing_artifact"].as_str().unwrap().contains("ckpt"), "{v}");
}

#[test]
fn repeated_pipelines_write_identical_reports() {
    let run = Run::new();
    pipeline(&run, "a");
    pipeline(&run, "b");
    let a = std::fs::read(run.path("a/report.csv")).unwrap();
    let b = std::fs::read(run.path("b/report.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    for f in ["splits.jsonl", "threshold.json", "calibration_hist.csv", "manifest.json", "report.jsonl"] {
        assert!(run.path("a").join(f).exists(), "{f}");
    }
}

#[test]
fn run_dir_comes_from_the_environment() {
    let run = Run::new();
    let out = run.cmd(&["prepare"]).env("DCREC_RUN_DIR", "from-env").output().unwrap();
    assert!(out.status.success());
    assert!(run.path("from-env/splits.jsonl").exists());
    assert!(!run.path("run").exists());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["n_users"], 120);
}

#[test]
fn unknown_config_key_is_rejected() {
    let run = Run::new();
    std::fs::write(run.path("bad.toml"), "[sim]\nk = 20\nslate = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dcrec"))
        .current_dir(run.dir.path())
        .args(["--config", "bad.toml", "config"])
        .output()
        .unwrap();
    let v = error_json(&out);
    assert!(v["error"].as_str().unwrap().contains("slate"), "{v}");
}

#[test]
fn missing_event_log_is_reported() {
    let run = Run::new();
    let v = error_json(&run.cmd(&["--events", "nope.tsv", "prepare"]).output().unwrap());
    assert!(v["error"].as_str().unwrap().contains("nope.tsv"), "{v}");
}

#[test]
fn config_output_round_trips_with_overrides() {
    let run = Run::new();
    let out = run.ok(&["--alpha", "0.6", "--budget", "0.1", "--policy", "random", "config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = dcrec::config::RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.fusion.alpha, 0.6);
    assert_eq!(cfg.request.budget, 0.1);
    assert_eq!(cfg.data.drift.n_users, 120);
    std::fs::write(run.path("again.toml"), &text).unwrap();
    let again = Command::new(env!("CARGO_BIN_EXE_dcrec"))
        .current_dir(run.dir.path())
        .args(["--config", "again.toml", "config"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn bad_policy_fails_at_parse_time() {
    let run = Run::new();
    let out = run.cmd(&["--policy", "greedy", "eval"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("greedy"));
}

#[test]
fn stdio_bridge_answers_each_line() {
    let run = Run::new();
    run.ok(&["prepare"]);
    run.ok(&["train"]);
    let mut child = run
        .cmd(&["bridge", "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"user\":1,\"history\":[3,4],\"k\":5}\n{\"user\":1}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["user"], 1);
    assert_eq!(lines[0]["items"].as_array().unwrap().len(), 5);
    assert!(lines[1]["error"].is_string());
}

#[test]
fn ablate_writes_summary() {
    let run = Run::new();
    let out = run.ok(&["--run-dir", "abl", "ablate", "--seeds", "4"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("infer:both+fusion"), "{stdout}");
    let summary = std::fs::read_to_string(run.path("abl/ablation_summary.csv")).unwrap();
    assert!(summary.starts_with("arm,metric,K,mean,request_rate,seeds"));
}
