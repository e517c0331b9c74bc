use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn hypnf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypnf"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs with `--input fixtures/<file>` and parses the stdout report.
fn run(file: &str, args: &[&str]) -> (i32, Value, String) {
    let input = fixture(file);
    let mut all = vec!["--input", input.to_str().unwrap()];
    all.extend_from_slice(args);
    let out = hypnf(&all);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "report is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    });
    (
        out.status.code().unwrap(),
        report,
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn williamson_saddle_has_a_equal_two() {
    let (code, r, _) = run("saddle.json", &["williamson"]);
    assert_eq!(code, 0);
    let frame = &r["diagnostics"]["frame"];
    assert!((f(&frame["a"][0]) - 2.0).abs() < 1e-12);
    assert!(f(&frame["symplectic_defect"]) < 1e-10);
    assert_eq!(r["exit_status"]["code"], 0);
    assert_eq!(r["input"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn williamson_model_input_keeps_identity_frame() {
    let (code, r, _) = run("xi-x.json", &["williamson"]);
    assert_eq!(code, 0);
    let s = &r["diagnostics"]["frame"]["S"];
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((f(&s[i][j]) - want).abs() < 1e-14, "S = {s}");
        }
    }
}

#[test]
fn elliptic_input_exits_three() {
    let (code, r, stderr) = run("elliptic.json", &["williamson"]);
    assert_eq!(code, 3);
    assert!(stderr.contains("purely imaginary spectrum"), "{stderr}");
    assert_eq!(r["exit_status"]["code"], 3);
}

#[test]
fn cubic_saddle_normal_form_at_order_three_is_quadratic() {
    let (code, r, _) = run("cubic-saddle.json", &["bnf", "--order", "3", "--exact"]);
    assert_eq!(code, 0);
    let nf = &r["diagnostics"]["normal_form"];
    let terms = nf["q0"]["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 1);
    assert_eq!(terms[0]["exact"], "1");
    assert_eq!(f(&nf["verification"]["max_non_action"]), 0.0);
}

#[test]
fn float_and_exact_normal_forms_agree() {
    let (_, exact, _) = run("lambda-1-2.json", &["bnf", "--exact"]);
    let (_, float, _) = run("lambda-1-2.json", &["bnf"]);
    let a = exact["diagnostics"]["normal_form"]["transformed"]["terms"].as_array().unwrap();
    let b = float["diagnostics"]["normal_form"]["transformed"]["terms"].as_array().unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x["alpha"], y["alpha"]);
        assert_eq!(x["beta"], y["beta"]);
        assert!((f(&x["coeff"]) - f(&y["coeff"])).abs() < 1e-12);
    }
}

#[test]
fn resonance_exits_four_with_k() {
    let (code, r, stderr) = run("resonant.json", &["bnf"]);
    assert_eq!(code, 4);
    assert_eq!(r["diagnostics"]["resonance"]["k"], serde_json::json!([2, -1]));
    assert!(stderr.contains("k = (2, -1)"), "{stderr}");
}

#[test]
fn quadratic_input_has_no_generators() {
    let (code, r, _) = run("saddle.json", &["bnf"]);
    assert_eq!(code, 0);
    let gens = r["diagnostics"]["normal_form"]["generators"].as_array().unwrap();
    assert!(gens.iter().all(|g| g["terms"].as_array().unwrap().is_empty()));
}

#[test]
fn loxodromic_normal_form_is_real_and_in_actions() {
    let (code, r, _) = run("loxodromic.json", &["bnf"]);
    assert_eq!(code, 0);
    let nf = &r["diagnostics"]["normal_form"];
    assert!(f(&nf["verification"]["max_non_action"]) < 1e-12);
    assert_eq!(r["diagnostics"]["lambda_complex"].as_array().unwrap().len(), 2);
}

#[test]
fn hitting_time_of_xi_x_is_ln_two() {
    let (code, r, _) = run("xi-x.json", &["hit", "--rho", "1,0.5"]);
    assert_eq!(code, 0);
    let t = f(&r["diagnostics"]["hitting_times"]["t_minus_out"]);
    assert!((t - 2f64.ln()).abs() < 1e-8, "{t}");
}

#[test]
fn flow_reports_symplectic_variational_matrix() {
    let (code, r, _) = run(
        "saddle.json",
        &["flow", "--rho", "0.1,-0.2", "--time", "0.5", "--variational"],
    );
    assert_eq!(code, 0);
    let t = &r["diagnostics"]["trajectory"];
    assert!((f(&t["det_dkappa"]) - 1.0).abs() < 1e-9);
    assert!(f(&t["symplectic_defect"]) < 1e-9);
    assert!(f(&t["error_estimate"]) < 1e-6);
}

#[test]
fn wrong_point_dimension_is_usage_error() {
    let (code, _, stderr) = run("saddle.json", &["flow", "--rho", "0.1,0.2,0.3"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("coordinates"), "{stderr}");
}

#[test]
fn gronwall_bracket_contains_spectrum() {
    let (code, r, _) = run("lambda-1-2.json", &["gronwall", "--samples", "32"]);
    assert_eq!(code, 0);
    let g = &r["diagnostics"]["gronwall"];
    assert!(f(&g["lambda_minus"]) <= 1.0 + 1e-9);
    assert!(f(&g["lambda_plus"]) <= 2.0 + 1e-9);
    assert!(f(&g["slack"]) > 0.0);
}

#[test]
fn homological_values_come_with_small_residual() {
    let (code, r, _) = run(
        "flat.json",
        &["homological", "--rho", "0.12,0.1", "--rho", "-0.15,0.05", "--residual"],
    );
    assert_eq!(code, 0);
    assert_eq!(r["tables"]["solutions"].as_array().unwrap().len(), 2);
    assert!(f(&r["diagnostics"]["max_residual"]) < 1e-6);
}

#[test]
fn homological_without_remainder_is_usage_error() {
    let (code, _, _) = run("saddle.json", &["homological", "--rho", "0.1,0.1"]);
    assert_eq!(code, 2);
}

#[test]
fn deform_without_remainder_leaves_zero_residual() {
    let (code, r, _) = run("xi-x.json", &["deform", "--grid", "5"]);
    assert_eq!(code, 0);
    assert_eq!(f(&r["diagnostics"]["final_residual"]), 0.0);
    assert_eq!(f(&r["diagnostics"]["max_displacement"]), 0.0);
}

#[test]
fn deform_reduces_flat_residual() {
    let (code, r, _) = run("flat.json", &["deform", "--grid", "6"]);
    assert_eq!(code, 0);
    let c = &r["diagnostics"]["conjugacy"];
    assert!(f(&c["residual"]["max"]) * 1e3 <= f(&c["baseline"]["max"]));
    assert!(f(&r["diagnostics"]["max_symplectic_defect"]) < 1e-8);
}

#[test]
fn verify_identity_reproduces_baseline() {
    let (code, r, _) = run("flat.json", &["verify", "--grid", "6"]);
    assert_eq!(code, 0);
    let c = &r["diagnostics"]["conjugacy"];
    assert_eq!(c["residual"], c["baseline"]);
}

#[test]
fn verify_deformed_replays_the_map() {
    let (code, r, _) = run("flat.json", &["verify", "--kappa", "deformed", "--grid", "4"]);
    assert_eq!(code, 0);
    assert_eq!(r["diagnostics"]["replay_matches"], true);
}

#[test]
fn reports_are_deterministic() {
    let args = ["gronwall", "--samples", "16", "--seed", "7"];
    let (_, a, _) = run("cubic-saddle.json", &args);
    let (_, b, _) = run("cubic-saddle.json", &args);
    assert_eq!(a, b);
    let (_, c, _) = run("cubic-saddle.json", &["gronwall", "--samples", "16", "--seed", "8"]);
    assert_ne!(a["diagnostics"], c["diagnostics"]);
}

#[test]
fn thread_count_does_not_change_results() {
    let input = fixture("flat.json");
    let args = ["--input", input.to_str().unwrap(), "deform", "--grid", "4"];
    let one = Command::new(env!("CARGO_BIN_EXE_hypnf"))
        .args(args)
        .env("HYPNF_THREADS", "1")
        .output()
        .unwrap();
    let many = Command::new(env!("CARGO_BIN_EXE_hypnf"))
        .args(args)
        .env("HYPNF_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n\": 1, \"terms\": [").unwrap();
    let out = hypnf(&["--input", bad.to_str().unwrap(), "williamson"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = hypnf(&["--input", "/nonexistent/x.json", "williamson"]);
    assert_eq!(missing.status.code(), Some(2));
    let no_input = hypnf(&["williamson"]);
    assert_eq!(no_input.status.code(), Some(2));
}

#[test]
fn csv_needs_out_dir() {
    let input = fixture("saddle.json");
    let out = hypnf(&["--input", input.to_str().unwrap(), "--csv", "flow", "--rho", "0.1,0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_dir_receives_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("flat.json");
    let out = hypnf(&[
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--csv",
        "homological",
        "--grid",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["command"], "homological");
    assert_eq!(report["parameters"]["origin_skipped"], true);
    let csv = std::fs::read_to_string(dir.path().join("homological.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("x1,xi1,value,error_estimate"));
    assert_eq!(lines.count(), 8);
}
