use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).to_string_lossy().into_owned()
}

fn dhs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhs")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("dhs-cli-{}-{name}", std::process::id()))
}

#[test]
fn pipeline_free_system_passes() {
    let o = dhs(&["pipeline", "--config", &data("pipeline_free.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], "PASS");
    let stages = v["stages"].as_array().unwrap();
    let fr = stages.iter().find(|s| s["stage"] == "friedrichs").unwrap();
    assert_eq!(fr["message"], "u(0)=0");
    let def = stages.iter().find(|s| s["stage"] == "deficiency").unwrap();
    assert_eq!(def["numbers"]["deficiency/estimate_deficiency_index:d"], 1.0);
}

#[test]
fn pipeline_output_is_deterministic() {
    let a = dhs(&["pipeline", "--config", &data("pipeline_free.json"), "--format", "text"]);
    let b = dhs(&["pipeline", "--config", &data("pipeline_free.json"), "--format", "text"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn pipeline_rejects_lambda_above_lambda0() {
    let o = dhs(&["pipeline", "--config", &data("pipeline_bad_lambda.json")]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["stages"].as_array().unwrap().len(), 1);
    assert_eq!(v["stages"][0]["stage"], "validate");
}

#[test]
fn missing_file_is_an_error() {
    let o = dhs(&["validate", "--system", "/nonexistent/system.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonexistent"));
}

#[test]
fn validate_and_deficiency() {
    assert_eq!(dhs(&["validate", "--system", &data("free.json")]).status.code(), Some(0));
    let o = dhs(&["deficiency", "--system", &data("limit_circle.json"), "--lambda", "-1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["stages"][0]["numbers"]["deficiency/estimate_deficiency_index:d"], 2.0);
}

#[test]
fn theta_is_canonical_for_limit_circle() {
    let o = dhs(&["theta", "--system", &data("limit_circle.json"), "--lambda", "-1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let th = &v["stages"][0]["matrices"]["theta/theta_matrix:theta"];
    assert_eq!(th[0][1][0].as_f64().unwrap(), 1.0);
    assert_eq!(th[1][0][0].as_f64().unwrap(), -1.0);
}

#[test]
fn extension_check_accepts_and_rejects() {
    let lc = data("limit_circle.json");
    let good = dhs(&["extension", "--system", &lc, "--lambda", "-1", "--check", &data("m_friedrichs.json"), &data("n_friedrichs.json")]);
    assert_eq!(good.status.code(), Some(0));
    let bad = dhs(&["extension", "--system", &lc, "--lambda", "-1", "--check", &data("m_bad.json"), &data("n_bad.json")]);
    assert_eq!(bad.status.code(), Some(1));
    let fr = dhs(&["extension", "--system", &lc, "--lambda", "-1", "--friedrichs", "--format", "text"]);
    assert_eq!(fr.status.code(), Some(0));
    assert!(stdout(&fr).contains("u(0)=0; (y,theta_j)(inf)=0, j=1..1"));
}

#[test]
fn disconjugacy_writes_witness() {
    let w = scratch("witness.json");
    let ok = dhs(&["disconjugacy", "--system", &data("free.json"), "--lambda0", "0", "--window", "0..20"]);
    assert_eq!(ok.status.code(), Some(0));
    let o = dhs(&[
        "disconjugacy", "--system", &data("free.json"), "--lambda0", "4.5", "--window", "0..20",
        "--witness", w.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&w).unwrap()).unwrap();
    assert_eq!(doc["t_start"], 0);
    assert_eq!(doc["values"].as_array().unwrap().len(), 21);
    let _ = std::fs::remove_file(w);
}

#[test]
fn lowerbound_positive_below_spectrum() {
    let o = dhs(&["lowerbound", "--system", &data("free.json"), "--lambda", "-1", "--window", "0..50", "--format", "text"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("lower_bound/lower_bound_estimate:gamma"));
}

#[test]
fn convert_scalar_spec() {
    let out = scratch("converted.json");
    let o = dhs(&["convert", "--input", &data("scalar.json"), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["n"], 1);
    assert_eq!(v["t_end"], 4);
    let _ = std::fs::remove_file(out);
}

#[test]
fn propagate_csv_and_json() {
    let o = dhs(&["propagate", "--system", &data("free.json"), "--lambda", "0", "--t0", "0", "--range", "0..5", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    // Principal solution of the free system at λ = 0: u(t) = t.
    assert!(lines[6].starts_with("5,5.00000000000000e0"));
    let o = dhs(&["propagate", "--system", &data("free.json"), "--lambda", "0.5+1i", "--init", "identity", "--range", "0..3"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 4);
}

#[test]
fn recessive_methods_agree() {
    let o = dhs(&["recessive", "--system", &data("free.json"), "--lambda0", "-1", "--horizon", "200", "--method", "both"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["stages"][0]["numbers"]["recessive/recessive:agreement"].as_f64().unwrap() < 1e-7);
}
