use std::path::Path;
use std::process::{Command, Output};

fn fairprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairprobe"))
        .args(args)
        .env_remove("FAIRPROBE_API_KEY")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn generate_counts_and_repeats() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = fairprobe(&["--out", s(d.path()), "--seed", "5", "generate", "--n", "40"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let pa = lines(&a.path().join("prompts.jsonl"));
    assert_eq!(pa.len(), 40);
    assert_eq!(pa, lines(&b.path().join("prompts.jsonl")));

    let out = fairprobe(&["--out", s(a.path()), "generate", "--n", "0"]);
    assert_eq!(code(&out), 0);
    assert!(lines(&a.path().join("prompts.jsonl")).is_empty());
}

#[test]
fn collect_resumes_without_duplicates() {
    let d = tempfile::tempdir().unwrap();
    let dir = s(d.path());
    assert_eq!(code(&fairprobe(&["--out", dir, "generate", "--n", "100"])), 0);
    assert_eq!(code(&fairprobe(&["--out", dir, "collect"])), 0);
    let corpus = d.path().join("corpus.jsonl");
    let full = lines(&corpus);
    assert_eq!(full.len(), 100);

    std::fs::write(&corpus, full[..50].join("\n") + "\n").unwrap();
    assert_eq!(code(&fairprobe(&["--out", dir, "collect"])), 0);
    let resumed = lines(&corpus);
    assert_eq!(resumed.len(), 100);
    let ids: std::collections::HashSet<String> = resumed
        .iter()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids.len(), 100);
}

#[test]
fn http_without_key_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"n": 3, "backend": {"kind": "http", "url": "http://127.0.0.1:9/v1/chat/completions", "require_auth": true}}"#,
    )
    .unwrap();
    let out = fairprobe(&["--config", s(&cfg), "--out", s(d.path()), "collect"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIRPROBE_API_KEY"));
}

#[test]
fn gender_target_reports_one_third_chance() {
    let d = tempfile::tempdir().unwrap();
    let dir = s(d.path());
    assert_eq!(code(&fairprobe(&["--out", dir, "generate", "--n", "150"])), 0);
    assert_eq!(code(&fairprobe(&["--out", dir, "collect"])), 0);
    let out = fairprobe(&["--out", dir, "--target", "gender", "probe"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("vs chance 33.33%"));
    let r = report(d.path());
    assert_eq!(r["outcome"]["chance"].as_f64().unwrap(), 1.0 / 3.0);
    assert_eq!(r["attributions"].as_array().unwrap().len(), 3);
    assert!(d.path().join("report.md").exists());
}

#[test]
fn synthetic_null_and_signal() {
    let d = tempfile::tempdir().unwrap();
    let dir = s(d.path());
    let synth = |rate: &str| fairprobe(&["--out", dir, "--seed", "4", "synth", "--rate", rate, "--docs-per-group", "150"]);

    assert_eq!(code(&synth("0")), 0);
    let first = lines(&d.path().join("corpus.jsonl"));
    assert_eq!(first.len(), 600);
    assert_eq!(code(&synth("0")), 0);
    assert_eq!(first, lines(&d.path().join("corpus.jsonl")));

    assert_eq!(code(&fairprobe(&["--out", dir, "--seed", "4", "--fail-on-bias", "probe"])), 0);
    let r = report(d.path());
    let acc = r["outcome"]["accuracy"].as_f64().unwrap();
    let band = r["outcome"]["null_band"].as_array().unwrap();
    assert!(band[0].as_f64().unwrap() <= acc && acc <= band[1].as_f64().unwrap());
    assert_eq!(r["outcome"]["significant"], false);

    assert_eq!(code(&synth("1")), 0);
    assert_eq!(code(&fairprobe(&["--out", dir, "--seed", "4", "probe"])), 0);
    assert_eq!(report(d.path())["outcome"]["significant"], true);
    let out = fairprobe(&["--out", dir, "--seed", "4", "--fail-on-bias", "probe"]);
    assert_eq!(code(&out), 1);
    let md = std::fs::read_to_string(d.path().join("report.md")).unwrap();
    assert!(md.contains("zq0x"));
}

#[test]
fn mismatched_config_needs_force() {
    let d = tempfile::tempdir().unwrap();
    let dir = s(d.path());
    let cfg = d.path().join("config.json");
    std::fs::write(&cfg, r#"{"n": 120, "seeds": {"sampling": 1, "split": 1, "stub": 1}}"#).unwrap();
    let c = s(&cfg);
    assert_eq!(code(&fairprobe(&["--config", c, "--out", dir, "collect"])), 0);
    assert_eq!(code(&fairprobe(&["--config", c, "--out", dir, "probe"])), 0);

    std::fs::write(&cfg, r#"{"n": 120, "seeds": {"sampling": 2, "split": 1, "stub": 1}}"#).unwrap();
    let out = fairprobe(&["--config", c, "--out", dir, "probe"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));
    assert_eq!(code(&fairprobe(&["--config", c, "--out", dir, "probe", "--force"])), 0);
}

#[test]
fn tiny_corpus_and_bad_flags_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let dir = s(d.path());
    assert_eq!(code(&fairprobe(&["--out", dir, "generate", "--n", "3"])), 0);
    assert_eq!(code(&fairprobe(&["--out", dir, "collect"])), 0);
    assert_eq!(code(&fairprobe(&["--out", dir, "probe"])), 2);
    assert_eq!(code(&fairprobe(&["--out", dir, "--target", "shoe size", "probe"])), 2);
    assert_eq!(code(&fairprobe(&["--out", dir, "frobnicate"])), 2);
}

#[test]
fn concordance_scan_and_report() {
    let d = tempfile::tempdir().unwrap();
    let dir = s(d.path());
    assert_eq!(code(&fairprobe(&["--out", dir, "generate", "--n", "60"])), 0);
    assert_eq!(code(&fairprobe(&["--out", dir, "collect"])), 0);

    let out = fairprobe(&["--out", dir, "concordance", "day 1", "--limit", "5"]);
    assert_eq!(code(&out), 0);
    let c: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(c["hits"].as_array().unwrap().len(), 5);
    assert_eq!(c["total"].as_u64().unwrap(), 60);

    assert_eq!(code(&fairprobe(&["--out", dir, "scan"])), 0);
    let f: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("findings.json")).unwrap()).unwrap();
    assert!(f["config_fingerprint"].is_string());

    assert_eq!(code(&fairprobe(&["--out", dir, "probe"])), 0);
    std::fs::remove_file(d.path().join("report.md")).unwrap();
    let out = fairprobe(&["--out", dir, "report"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("# Identity probe: ethnicity"));
    assert!(d.path().join("report.md").exists());
}
