use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vlascale"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn mix_report_ends_in_reference_total() {
    let out = run_ok(&["mix", "report"]);
    assert!(out.trim_end().ends_with("182.49M"), "{out}");
    let registry = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/pretraining_mix.toml");
    let from_file = run_ok(&["mix", "report", "--registry", registry.to_str().unwrap()]);
    assert_eq!(out, from_file);
}

#[test]
fn mix_sample_is_deterministic() {
    let a = run_ok(&["mix", "sample", "--seed", "3", "--n", "50"]);
    assert_eq!(a, run_ok(&["mix", "sample", "--seed", "3", "--n", "50"]));
    assert_eq!(a.lines().count(), 50);
    let d1 = run_ok(&[
        "mix",
        "sample",
        "--seed",
        "3",
        "--n",
        "200",
        "--mixture",
        "d1",
    ]);
    assert!(d1.lines().all(|l| l.contains("OXE")));
}

#[test]
fn roundtrip_exits_zero() {
    for mode in ["world_rel", "world_delta", "eef_rel", "eef_delta"] {
        let out = run_ok(&[
            "actions",
            "roundtrip",
            "--mode",
            mode,
            "--n",
            "1000",
            "--seed",
            "1",
        ]);
        let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
        assert!(v["max_translation_error"].as_f64().unwrap() < 1e-9);
        assert_eq!(v["pass"], true);
    }
}

#[test]
fn usage_errors() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["actions", "roundtrip", "--mode", "sideways"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.starts_with("error: ") && err.lines().count() == 1,
        "{err}"
    );
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[model]\nheads = \"many\"\n").unwrap();
    let out = bin()
        .args(["train", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: config_parse"));
}

const TINY: &str = r#"
[model]
sem_hidden = 16
act_hidden = 16
heads = 2
head_dim = 8
layers = 2
horizon = 4
action_dim = 2
proprio_dim = 2
vis_feat_dim = 2
patches_per_view = 1
max_views = 1
text_tokens = 2
vocab = 16

[train]
batch_size = 8
eval_batch_size = 8
stage1_lr = 3e-3
stage2_lr = 3e-3
"#;

#[test]
fn train_streams_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let ckpt = dir.path().join("ckpt");
    let args = [
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--steps",
        "12",
        "--out",
        ckpt.to_str().unwrap(),
    ];
    let out = run_ok(&args);
    let lines: Vec<serde_json::Value> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[0]["step"], 1);
    assert_eq!(lines[5]["stage"], 1);
    assert_eq!(lines[6]["stage"], 2);
    assert!(ckpt.join("final.bin").exists() && ckpt.join("final.json").exists());
    assert_eq!(out, run_ok(&args));

    let g = run_ok(&[
        "gradcheck",
        "--config",
        cfg.to_str().unwrap(),
        "--params",
        "200",
    ]);
    assert!(g.contains("\"pass\":true"), "{g}");
    let strict = bin()
        .args([
            "gradcheck",
            "--config",
            cfg.to_str().unwrap(),
            "--tolerance",
            "1e-30",
        ])
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn eval_init_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("s.jsonl");
    let log_s = log.to_str().unwrap();
    let out = run_ok(&[
        "eval",
        "init",
        "--models",
        "a,b,c,d",
        "--group-size",
        "4",
        "--trials",
        "10",
        "--seed",
        "7",
        "--log",
        log_s,
    ]);
    assert!(out.contains("1 group(s)"));
    let again = bin()
        .args(["eval", "init", "--models", "a", "--log", log_s])
        .output()
        .unwrap();
    assert_eq!(
        again.status.code(),
        Some(1),
        "existing logs are never overwritten"
    );

    let blind = run_ok(&["eval", "report", "--log", log_s, "--json"]);
    let v: serde_json::Value = serde_json::from_str(&blind).unwrap();
    assert_eq!(v["partial"], true);
    assert!(v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["model"].as_str().unwrap().contains("h-")));
    let open = run_ok(&["eval", "report", "--log", log_s, "--deanonymize"]);
    for m in ["a", "b", "c", "d"] {
        assert!(
            open.lines().any(|l| l.split_whitespace().next() == Some(m)),
            "{open}"
        );
    }
}

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(log: &Path) -> Server {
        let mut child = bin()
            .args([
                "eval",
                "serve",
                "--port",
                "0",
                "--log",
                log.to_str().unwrap(),
                "--token",
                "s3cret",
            ])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .expect("address line")
            .to_string();
        Server { child, base }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn serve_survives_kill_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("s.jsonl");
    run_ok(&[
        "eval",
        "init",
        "--models",
        "m1,m2",
        "--group-size",
        "2",
        "--trials",
        "2",
        "--seed",
        "1",
        "--log",
        log.to_str().unwrap(),
    ]);
    let http = reqwest::blocking::Client::new();

    let mut recorded = Vec::new();
    let mut server = Server::start(&log);
    for _ in 0..3 {
        let t: serde_json::Value = http
            .get(format!("{}/next-trial", server.base))
            .send()
            .unwrap()
            .json()
            .unwrap();
        let body = serde_json::json!({
            "task": t["task"], "group": t["group"], "alias": t["alias"],
            "outcomes": vec![1; t["rubric"].as_array().unwrap().len()],
        });
        let r = http
            .post(format!("{}/outcome", server.base))
            .json(&body)
            .send()
            .unwrap();
        assert!(r.status().is_success());
        recorded.push((t["alias"].clone(), t["trial_index"].clone()));
    }
    let pending: serde_json::Value = http
        .get(format!("{}/next-trial", server.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    server.child.kill().unwrap();
    server.child.wait().unwrap();

    server = Server::start(&log);
    let resumed: serde_json::Value = http
        .get(format!("{}/next-trial", server.base))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(resumed, pending, "an unrecorded dispatch is offered again");
    let denied = http.get(format!("{}/report", server.base)).send().unwrap();
    assert_eq!(denied.status().as_u16(), 401);
    let report: serde_json::Value = http
        .get(format!("{}/report", server.base))
        .header("x-experimenter-token", "s3cret")
        .send()
        .unwrap()
        .json()
        .unwrap();
    let trials: u64 = report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["trials"].as_u64().unwrap())
        .sum();
    assert_eq!(trials, recorded.len() as u64);
}
