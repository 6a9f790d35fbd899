use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use newsframe_core::corpus::{load_documents, load_paragraphs, save_dataset, Split};
use newsframe_core::evaluate::{report, ConfusionMatrix};
use newsframe_core::synth::{generate, SynthSpec};
use serde_json::Value;

fn newsframe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newsframe"))
        .args(args)
        .env_remove("NEWSFRAME_CONFIG")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    serde_json::from_str(lines[0]).unwrap()
}

const MATRIX: &str = "actual\\predicted,AR01,HI02,CF03,MF04,EF05,NO06
AR01,534,3,2,0,0,2
HI02,7,772,1,0,0,0
CF03,2,1,76,0,1,3
MF04,2,3,6,0,0,3
EF05,0,2,0,0,361,2
NO06,3,3,1,0,0,946
";

#[test]
fn report_matches_in_process_result_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cm.csv");
    std::fs::write(&csv, MATRIX).unwrap();
    let out = newsframe(&["report", "--cm", p(&csv)]);
    assert!(out.status.success());
    let expected = serde_json::to_string(&report(&ConfusionMatrix::from_csv(MATRIX).unwrap()).unwrap()).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), expected + "\n");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(newsframe(&["cv", "--k", "0", "--data", "x"]).status.code(), Some(2));
    assert_eq!(newsframe(&["cv", "--k", "1", "--data", "x"]).status.code(), Some(2));
    assert_eq!(newsframe(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(newsframe(&["report"]).status.code(), Some(2));
    assert_eq!(newsframe(&["serve", "--port", "0"]).status.code(), Some(2));
    assert_eq!(newsframe(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1_with_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = newsframe(&["report", "--cm", p(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "evaluate");
    assert!(err["message"].is_string());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "actual\\predicted,AR01\nAR01,1\n").unwrap();
    let out = newsframe(&["report", "--cm", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    stderr_json(&out);
}

#[test]
fn kappa_on_identical_files_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    let mut text = String::new();
    for (i, code) in ["AR01", "HI02", "NO06", "AR01"].iter().enumerate() {
        text.push_str(&format!(
            "{{\"para_id\":\"p{i}\",\"coder\":\"x\",\"frames\":[\"{code}\"],\"main\":\"{code}\",\"ts\":\"2024-01-01T00:00:00.000Z\"}}\n"
        ));
    }
    std::fs::write(&path, text).unwrap();
    let out = newsframe(&["kappa", "--a", p(&path), "--b", p(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["kappa"], 1.0);
    assert_eq!(r["band"], "almost_perfect");
    assert_eq!(r["n_items"], 4);
}

#[test]
fn ingest_and_sample() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    std::fs::write(
        &docs,
        concat!(
            r#"{"doc_id":"d1","url":"https://example.org/1","language":"en","body":"<html><body><p>The first paragraph talks about pension reform costs.</p><p>tiny</p><div>The second paragraph is about the parties in conflict.</div></body></html>"}"#, "\n",
            r#"{"doc_id":"d2","language":"de","body":"Ein Absatz in deutscher Sprache über die Rentenreform.\n\nNoch ein Absatz, der ebenfalls lang genug ist."}"#, "\n",
            r#"{"doc_id":"d3","language":"en","body":"Third document body with enough characters to pass."}"#, "\n",
        ),
    )
    .unwrap();
    let paras = dir.path().join("paras.jsonl");
    let out = newsframe(&["ingest", "--in", p(&docs), "--out", p(&paras), "--translate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ps = load_paragraphs(&paras).unwrap();
    let ids: Vec<&str> = ps.iter().map(|x| x.para_id.as_str()).collect();
    assert_eq!(ids, ["d1-p0000", "d1-p0001", "d2-p0000", "d2-p0001", "d3-p0000"]);

    let sampled = dir.path().join("sample.jsonl");
    let out = newsframe(&["sample", "--in", p(&docs), "--out", p(&sampled), "--n", "2", "--seed", "4"]);
    assert!(out.status.success());
    let first = load_documents(&sampled).unwrap();
    assert_eq!(first.len(), 2);
    newsframe(&["sample", "--in", p(&docs), "--out", p(&sampled), "--n", "2", "--seed", "4"]);
    assert_eq!(load_documents(&sampled).unwrap(), first);
    let out = newsframe(&["sample", "--in", p(&docs), "--out", p(&sampled), "--n", "9", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn broken_app_config_from_environment_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("app.json");
    std::fs::write(&cfg, "{\"port\": \"eighty\"}").unwrap();
    let csv = dir.path().join("cm.csv");
    std::fs::write(&csv, MATRIX).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_newsframe"))
        .args(["report", "--cm", p(&csv)])
        .env("NEWSFRAME_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn train_classify_evaluate_cv_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let gold = dir.path().join("gold.jsonl");
    save_dataset(&generate(&SynthSpec::balanced(4), 1), &train).unwrap();
    let mut spec = SynthSpec::balanced(2);
    spec.split = Split::Gold;
    spec.doc_prefix = "gold".into();
    save_dataset(&generate(&spec, 2), &gold).unwrap();
    let cfg = dir.path().join("train.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 3, "output_dir": "unused", "pretrained_encoder_id": "scratch:tiny", "epochs": 1, "logging_steps": 3}"#,
    )
    .unwrap();
    let model = dir.path().join("model");
    let out = newsframe(&["train", "--config", p(&cfg), "--train", p(&train), "--eval", p(&gold), "--out", p(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["steps"], 6);

    let paras = dir.path().join("paras.jsonl");
    std::fs::write(&paras, "{\"para_id\":\"x-p0000\",\"doc_id\":\"x\",\"ordinal\":0,\"text\":\"The budget deficit keeps growing.\"}\n").unwrap();
    let preds = dir.path().join("preds.jsonl");
    let out = newsframe(&["classify", "--model", p(&model), "--in", p(&paras), "--out", p(&preds)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line: Value = serde_json::from_str(std::fs::read_to_string(&preds).unwrap().trim()).unwrap();
    assert_eq!(line["para_id"], "x-p0000");
    let sum: f64 = line["scores"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-6);

    let rep = dir.path().join("report.json");
    let out = newsframe(&["evaluate", "--model", p(&model), "--gold", p(&gold), "--report", p(&rep)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r["per_class"].as_object().unwrap().len(), 6);

    // Evaluating on the training file itself is refused as leakage.
    let out = newsframe(&["evaluate", "--model", p(&model), "--gold", p(&train)]);
    assert_eq!(out.status.code(), Some(1));

    let cv_out = dir.path().join("cv");
    let out = newsframe(&["cv", "--k", "2", "--seed", "1", "--data", p(&train), "--config", p(&cfg), "--out", p(&cv_out)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cm = ConfusionMatrix::load_csv(cv_out.join("confusion_matrix.csv")).unwrap();
    assert_eq!(cm.total(), 24);
    assert!(cv_out.join("fold-0/model.safetensors").is_file());
    assert_eq!(std::fs::read_to_string(cv_out.join("predictions.jsonl")).unwrap().lines().count(), 24);
}

#[test]
fn serve_answers_over_tcp() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_newsframe"))
        .args(["serve", "--port", &port.to_string(), "--annotations", p(&dir.path().join("a.jsonl"))])
        .env_remove("NEWSFRAME_CONFIG")
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Ok(mut s) = TcpStream::connect(("127.0.0.1", port)) {
            s.write_all(b"GET /api/codebook HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
            let mut buf = String::new();
            s.read_to_string(&mut buf).unwrap();
            break buf;
        }
        assert!(Instant::now() < deadline, "service did not start");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"AR01\""));
}

#[test]
fn serve_rejects_missing_corpus() {
    let out = newsframe(&["serve", "--port", "8099", "--corpus", "/nonexistent/paras.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "config");
}
