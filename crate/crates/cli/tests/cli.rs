use std::path::Path;
use std::process::{Command, Output};

fn xnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xnet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const SMALL: &str = "scheme = \"alamouti\"\nm = 2\nconstellation = \"qpsk\"\nsnr_db_list = [0.0, 4.0, 8.0]\n\
                     min_codeword_errors = 50\nmax_trials_per_point = 4000\nseed = 3\n";

#[test]
fn verify_cc_passes_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("cc.json");
    let out = xnet(&["verify", "cc", "--code", "lowdelay3", "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("PASS cc "));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(doc["check"], "cc");
    assert_eq!(doc["pass"], true);
    assert!(doc["report"]["max_residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn failed_check_exits_three() {
    let out = xnet(&["verify", "full-rank", "--code", "lowdelay3", "--constellation", "qpsk"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).starts_with("FAIL full-rank "));
}

#[test]
fn appendix_c_check() {
    let out = xnet(&["verify", "appendix-c"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("det(theta=0)=9.000000"));
}

#[test]
fn unknown_code_is_a_config_error() {
    let out = xnet(&["verify", "cc", "--code", "golay"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_enumeration_exits_four() {
    let out = xnet(&["verify", "full-rank", "--code", "perfect3-replicated", "--constellation", "qam16"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn rankstats_identity_p_collapses() {
    let out = xnet(&["rankstats", "--identity-p", "--draws", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(doc["stats"]["full_rank_fraction"], 0.0);

    let out = xnet(&["rankstats", "--code", "lowdelay3", "--draws", "20"]);
    let doc: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(doc["stats"]["full_rank_fraction"], 1.0);
}

#[test]
fn simulate_then_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let csv = dir.path().join("small.csv");
    let out = xnet(&["simulate", "--config", &cfg, "--out", csv.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# xnet sweep v"));
    assert!(text.contains("snr_db,trials,bits_sent,bit_errors,codeword_errors,ber,cwer"));

    let out = xnet(&["slope", "--in", csv.to_str().unwrap(), "--window", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let d: f64 = stdout(&out).trim().parse().unwrap();
    assert!(d > 0.0 && d < 5.0, "{d}");
}

#[test]
fn simulate_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let mut texts = Vec::new();
    for w in ["1", "4"] {
        let csv = dir.path().join(format!("w{w}.csv"));
        let out = xnet(&["simulate", "--config", &cfg, "--out", csv.to_str().unwrap(), "--workers", w, "--quiet"]);
        assert_eq!(out.status.code(), Some(0));
        texts.push(std::fs::read(csv).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "scheme = \"alamouti\"\nm = 3\nconstellation = \"qpsk\"\nsnr_db_list = [0.0]\n");
    let out = xnet(&["simulate", "--config", &cfg, "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let typo = write(dir.path(), "typo.toml", "scheme = \"alamouti\"\nm = 2\nconstelation = \"qpsk\"\n");
    let out = xnet(&["simulate", "--config", &typo, "--out", dir.path().join("y.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("nope.toml");
    let out = xnet(&["simulate", "--config", missing.to_str().unwrap(), "--out", "z.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn slope_needs_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(
        dir.path(),
        "zero.csv",
        "snr_db,trials,bits_sent,bit_errors,codeword_errors,ber,cwer\n10,100,1600,0,0,0,0\n20,100,1600,0,0,0,0\n",
    );
    let out = xnet(&["slope", "--in", &csv]);
    assert_eq!(out.status.code(), Some(1));
}
