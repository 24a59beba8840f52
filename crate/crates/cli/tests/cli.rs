use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_interleave"));
    c.env_remove("INTERLEAVE_CONFIG");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn jsonl(rows: &[Value]) -> String {
    rows.iter().map(|r| format!("{r}\n")).collect()
}

const CORPUS: &str = "she spends fourteen dollars in total\n\
the answer is twelve\n\
so the total is fourteen\n\
she buys two bars and pays with a twenty\n";

fn score_input() -> String {
    let t = |n: usize| vec!["w"; n].join(" ");
    jsonl(&[
        serde_json::json!({"id": "a", "question": "q1", "ground_truth": "14",
            "sequence_raw": format!("<|thinking|>{}<|answer|>She spends 14 in total.", t(40))}),
        serde_json::json!({"id": "b", "question": "q1", "ground_truth": "14",
            "sequence_raw": format!("<|thinking|>{}<|answer|>the total is 14", t(20))}),
        serde_json::json!({"id": "c", "question": "q2", "ground_truth": "12",
            "sequence_raw": "<|answer|>12"}),
        serde_json::json!({"id": "d", "question": "q1", "ground_truth": "14",
            "sequence_raw": format!("<|thinking|>{}<|answer|>It is 13.", t(40))}),
    ])
}

#[test]
fn validate_reports_each_record() {
    let dir = TempDir::new().unwrap();
    let good = write(
        dir.path(),
        "good.jsonl",
        &jsonl(&[
            serde_json::json!({"id": "x", "sequence_raw": "<|thinking|>a b<|answer|>c"}),
            serde_json::json!({"id": "y", "sequence_raw": "<|thinking|>a<|answer|>b<|thinking|>c<|answer|>d"}),
        ]),
    );
    let o = run(dir.path(), &["validate", "--in", good.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "OK x\nOK y\n");

    let bad = write(
        dir.path(),
        "bad.jsonl",
        &jsonl(&[
            serde_json::json!({"id": "x", "sequence_raw": "<|thinking|>a b<|answer|>c"}),
            serde_json::json!({"id": "z", "sequence_raw": "<|answer|>c"}),
        ]),
    );
    let o = run(dir.path(), &["validate", "--in", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("OK x\nINVALID z"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&run(dir.path(), &[])), 2);

    let input = write(dir.path(), "in.jsonl", "");
    let o = run(dir.path(), &["--config", "missing.json", "validate", "--in", input.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let o = bin()
        .current_dir(dir.path())
        .env("INTERLEAVE_CONFIG", "missing.json")
        .args(["validate", "--in", "in.jsonl"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);

    write(dir.path(), "unknown.json", r#"{"ta": {"l_target": 40}, "colour": 1}"#);
    assert_eq!(code(&run(dir.path(), &["--config", "unknown.json", "validate", "--in", "in.jsonl"])), 2);
    write(dir.path(), "zero.json", r#"{"ta": {"l_target": 0}}"#);
    assert_eq!(code(&run(dir.path(), &["--config", "zero.json", "validate", "--in", "in.jsonl"])), 2);
    write(dir.path(), "ok.json", r#"{"ta": {"l_target": 20}, "grpo": {"group_size": 8}}"#);
    assert_eq!(code(&run(dir.path(), &["--config", "ok.json", "validate", "--in", "in.jsonl"])), 0);

    // A missing input file is an input failure, not a configuration one.
    assert_eq!(code(&run(dir.path(), &["validate", "--in", "nope.jsonl"])), 1);
}

#[test]
fn version_is_printed() {
    let o = bin().arg("--version").output().unwrap();
    assert_eq!(code(&o), 0);
    let v = String::from_utf8(o.stdout).unwrap();
    assert_eq!(v.trim(), format!("interleave {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn build_flags_unreachable_ratio_without_failing() {
    let dir = TempDir::new().unwrap();
    let rows = [
        serde_json::json!({"id": "ok", "question": "q", "ground_truth": "14",
            "reasoning_chain": "Ten bars cost ten dollars in all. Four more bars add four more dollars to it. That makes fourteen dollars when we add them. We check the sum again to be sure of it.",
            "summary": "She spends 14 dollars."}),
        serde_json::json!({"id": "short", "question": "q", "ground_truth": "14",
            "reasoning_chain": "Add them.",
            "summary": "She spends fourteen dollars on ice cream bars this week in total."}),
    ];
    let input = write(dir.path(), "raw.jsonl", &jsonl(&rows));
    let out = dir.path().join("built.jsonl");
    let o = run(
        dir.path(),
        &["build", "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap(), "--ratio", "4.0", "--tolerance", "0.25"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<Value> =
        fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["id"], "ok");
    assert_eq!(lines[1]["id"], "short");
    assert_eq!(lines[1]["ratio_report"]["within_tolerance"], false);
    assert!(lines[1]["sequence_raw"].as_str().unwrap().starts_with("<|thinking|>"));
    assert!(String::from_utf8(o.stderr).unwrap().contains("short"));

    let o = run(dir.path(), &["build", "--in", input.to_str().unwrap(), "--out", input.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(fs::read_to_string(&input).unwrap(), jsonl(&rows));
}

#[test]
fn score_keeps_order_and_groups() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "corpus.txt", CORPUS);
    let o = run(dir.path(), &["scorer", "train", "--corpus", "corpus.txt", "--order", "3", "--out", "model.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    write(dir.path(), "in.jsonl", &score_input());
    let o = run(dir.path(), &["score", "--in", "in.jsonl", "--scorer", "model.json", "--out", "scored.jsonl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<Value> = fs::read_to_string(dir.path().join("scored.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids: Vec<&str> = rows.iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a", "b", "c", "d"]);

    let r = |i: usize, k: &str| rows[i]["rewards"][k].as_f64().unwrap();
    assert_eq!(r(0, "r_ta"), 1.0);
    assert_eq!(r(1, "r_ta"), 0.0);
    assert_eq!(r(0, "r_acc"), 1.0);
    assert_eq!(r(3, "r_acc"), 0.0);
    assert_eq!(r(3, "r_lq"), 0.0);
    // The malformed singleton still earns accuracy but no format or quality reward.
    assert_eq!(rows[2]["format_valid"], false);
    assert_eq!((r(2, "r_ta"), r(2, "r_acc"), r(2, "r_lq")), (0.0, 1.0, 0.0));
    assert_eq!(rows[0]["rewards"]["segment_scores"].as_array().unwrap().len(), 1);
    // Quality rewards are centred on the q1 group mean, incorrect sample included.
    let ll = |i: usize| rows[i]["normalized_loglik"].as_f64().unwrap();
    let mean = (ll(0) + ll(1) + ll(3)) / 3.0;
    for i in [0, 1] {
        assert!((r(i, "r_lq") - (ll(i) - mean).max(0.0)).abs() < 1e-9);
    }
}

#[test]
fn train_toy_writes_both_traces() {
    let dir = TempDir::new().unwrap();
    let o = run(
        dir.path(),
        &["train-toy", "--l-target", "20", "--group", "16", "--iters", "300", "--lr", "0.05", "--seed", "7", "--trace", "trace"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    let mu = summary["running_mean_mu"].as_f64().unwrap();
    assert!((mu - 20.0).abs() <= 2.0, "{mu}");

    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert!(csv.starts_with("iteration,mu,sigma,mean_reward,mean_abs_advantage\n"));
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 300);

    assert_eq!(code(&run(dir.path(), &["train-toy", "--lr", "-1"])), 2);
}

#[test]
fn simulate_summarizes_timelines() {
    let dir = TempDir::new().unwrap();
    let t = |n: usize| vec!["w"; n].join(" ");
    write(
        dir.path(),
        "in.jsonl",
        &jsonl(&[
            serde_json::json!({"id": "masked", "sequence_raw":
                format!("<|thinking|>{}<|answer|>{}<|thinking|>{}<|answer|>{}", t(40), t(10), t(40), t(10))}),
            serde_json::json!({"id": "stalls", "sequence_raw":
                format!("<|thinking|>{}<|answer|>{}<|thinking|>{}<|answer|>{}", t(40), t(10), t(60), t(10))}),
        ]),
    );
    let o = run(
        dir.path(),
        &["simulate", "--in", "in.jsonl", "--gen-rate", "40", "--play-rate", "10", "--overhead", "0", "--out", "sim.json"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sim.json")).unwrap()).unwrap();
    let s = v["samples"].as_array().unwrap();
    assert_eq!(s[0]["masking"]["fully_masked"], true);
    assert_eq!(s[1]["masking"]["fully_masked"], false);
    assert_eq!(v["summary"]["fully_masked_fraction"].as_f64().unwrap(), 0.5);
    assert!(String::from_utf8(o.stdout).unwrap().contains("| masked |"));
}

#[test]
fn eval_writes_matching_reports() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "eval.jsonl",
        &jsonl(&[
            serde_json::json!({"category": "S", "correct": true, "sequence_raw": "<|thinking|>add ten and four<|answer|>She spends $14."}),
            serde_json::json!({"category": "S", "correct": false, "sequence_raw": "<|thinking|>add<|answer|>It is 12."}),
            serde_json::json!({"category": "L", "correct": true, "sequence_raw": "<|thinking|>a b c<|answer|>So 21.<|thinking|>check<|answer|>Yes, 21."}),
        ]),
    );
    let o = run(dir.path(), &["eval", "--in", "eval.jsonl", "--judge", "heuristic", "--latency", "--out", "rep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let md = fs::read_to_string(dir.path().join("rep/report.md")).unwrap();
    assert!(md.contains("## Accuracy") && md.contains("## Fluency") && md.contains("## Latency simulation"));

    let o = run(dir.path(), &["report", "--in", "rep/report.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), md);

    // No external judge configured.
    assert_eq!(code(&run(dir.path(), &["eval", "--in", "eval.jsonl", "--judge", "external", "--out", "rep2"])), 2);
}

#[test]
fn external_judge_runs_configured_program() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "eval.jsonl",
        &jsonl(&[serde_json::json!({"category": "S", "correct": true, "sequence_raw": "<|thinking|>t<|answer|>Fine."})]),
    );
    write(
        dir.path(),
        "cfg.json",
        r#"{"judge": {"program": "sh", "args": ["-c", "cat > /dev/null; echo '{\"score\": 2, \"rationale\": \"ok\"}'"]}}"#,
    );
    let o = run(dir.path(), &["--config", "cfg.json", "eval", "--in", "eval.jsonl", "--judge", "external", "--out", "rep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rep/report.json")).unwrap()).unwrap();
    assert_eq!(v["fluency"]["judge"], "external");
    assert_eq!(v["fluency"]["mean"].as_f64().unwrap(), 2.0);
}

/// Every subcommand, run twice, leaves byte-identical outputs and untouched inputs.
#[test]
fn reruns_are_idempotent_and_inputs_untouched() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write(d, "corpus.txt", CORPUS);
    write(d, "score.jsonl", &score_input());
    write(
        d,
        "raw.jsonl",
        &jsonl(&[serde_json::json!({"id": "r", "question": "q", "ground_truth": "2",
            "reasoning_chain": "One and one. That is two when added. Check it again now. Yes it holds.",
            "summary": "It is 2."})]),
    );
    write(
        d,
        "eval.jsonl",
        &jsonl(&[serde_json::json!({"category": "S", "correct": true, "sequence_raw": "<|thinking|>t u<|answer|>Fine, 3."})]),
    );

    let steps: &[&[&str]] = &[
        &["scorer", "train", "--corpus", "corpus.txt", "--out", "model.json"],
        &["build", "--in", "raw.jsonl", "--out", "built.jsonl"],
        &["score", "--in", "score.jsonl", "--scorer", "model.json", "--out", "scored.jsonl"],
        &["train-toy", "--iters", "50", "--trace", "trace"],
        &["simulate", "--in", "score.jsonl", "--out", "sim.json"],
        &["eval", "--in", "eval.jsonl", "--latency", "--out", "rep"],
        &["report", "--in", "rep/report.json", "--out", "rep.md"],
    ];
    let inputs = ["corpus.txt", "score.jsonl", "raw.jsonl", "eval.jsonl"];
    let outputs = [
        "model.json",
        "built.jsonl",
        "scored.jsonl",
        "trace.csv",
        "trace.json",
        "sim.json",
        "rep/report.json",
        "rep/report.md",
        "rep.md",
    ];
    let before: Vec<Vec<u8>> = inputs.iter().map(|p| fs::read(d.join(p)).unwrap()).collect();

    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let mut stdout = Vec::new();
        for args in steps {
            let o = run(d, args);
            // `simulate` exits 1 on the malformed record but still writes its output.
            let expected = if args[0] == "simulate" { 1 } else { 0 };
            assert_eq!(code(&o), expected, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            stdout.push(o.stdout);
        }
        let files: Vec<Vec<u8>> = outputs.iter().map(|p| fs::read(d.join(p)).unwrap()).collect();
        snapshots.push((files, stdout));
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let after: Vec<Vec<u8>> = inputs.iter().map(|p| fs::read(d.join(p)).unwrap()).collect();
    assert_eq!(before, after);
}
