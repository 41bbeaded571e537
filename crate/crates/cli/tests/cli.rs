use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rlab_cli::{analyze_ahlfors, quasiconvex_report, RunConfig};
use rlab_core::{generate, DiscreteSurface, ScaleLadder, ZooSpec};
use serde_json::Value;

fn rlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlab"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn config(shape: &str, out: &Path) -> RunConfig {
    RunConfig {
        input: None,
        shape: Some(shape.into()),
        r_base: 0.25,
        ratio: 2.0,
        depth: 4,
        region_center: None,
        region_radius: 0.25,
        eps_target: 0.05,
        probes: 64,
        seed: 0,
        out_dir: out.to_path_buf(),
    }
}

const SIN: &str = "graph-sin:a=0.005,l=0.5,samples=40000";

#[test]
fn zoo_generate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = rlab(&["zoo", "generate", "--shape", "sphere:samples=3000,seed=4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let from_file = DiscreteSurface::read_csv(dir.path().join("surface.csv")).unwrap();
    let direct = generate(&"sphere:samples=3000,seed=4".parse::<ZooSpec>().unwrap()).unwrap();
    assert_eq!(from_file.points(), direct.points());
    assert_eq!(from_file.weights(), direct.weights());
    assert_eq!(from_file.normals().unwrap(), direct.normals().unwrap());
    let meta = json(&dir.path().join("zoo.json"));
    assert_eq!(meta["points"], 3000);
    assert_eq!(meta["expectations"]["connected"], true);
}

#[test]
fn zoo_seed_flag_overrides_shape() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    rlab(&["zoo", "generate", "--shape", "plane:samples=400,seed=1", "--seed", "9"], a.path());
    rlab(&["zoo", "generate", "--shape", "plane:samples=400,seed=9"], b.path());
    assert_eq!(
        fs::read(a.path().join("surface.csv")).unwrap(),
        fs::read(b.path().join("surface.csv")).unwrap()
    );
}

#[test]
fn analyze_reports_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = rlab(&["analyze", "--shape", SIN, "--depth", "3", "--probes", "16"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("ahlfors.json"));
    assert_eq!(report["tool"], "rlab");
    assert_eq!(report["command"], "analyze");

    let mut cfg = config(SIN, dir.path());
    cfg.depth = 3;
    cfg.probes = 16;
    let s = cfg.load().unwrap();
    let region = cfg.region(&s).unwrap();
    let ladder = ScaleLadder::new(0.25, 2.0, 3).unwrap();
    let direct = analyze_ahlfors(&s, &cfg, &ladder, &region).unwrap();
    assert_eq!(report["result"], serde_json::to_value(&direct).unwrap());

    let table = fs::read_to_string(dir.path().join("flatness.csv")).unwrap();
    assert!(table.starts_with("x0,x1,x2,r,alpha,beta1,beta_inf"));
    // 16 probes × radii r_0..r_3
    assert_eq!(table.lines().count(), 1 + 16 * 4);
    let carleson = json(&dir.path().join("carleson.json"));
    assert!(carleson["result"]["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn parametrize_writes_all_reports_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["parametrize", "--shape", SIN, "--depth", "3", "--eps-target", "0.5"];
    let first = rlab(&args, a.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = Command::new(env!("CARGO_BIN_EXE_rlab"))
        .args(["--threads", "1"])
        .args(args)
        .arg("--out-dir")
        .arg(b.path())
        .output()
        .unwrap();
    assert!(second.status.success());
    let flow = |d: &Path| fs::read(d.join("flow.csv")).unwrap();
    assert!(flow(a.path()) == flow(b.path()), "flow.csv differs between runs");
    // reports echo the output directory, so compare results only
    for name in ["ccbp.json", "bilip.json", "reifenberg.json"] {
        let x = json(&a.path().join(name));
        let y = json(&b.path().join(name));
        assert!(x["result"] == y["result"], "{name} differs between runs");
    }
    let bilip = json(&a.path().join("bilip.json"));
    assert!(bilip["result"]["k_lower"].as_f64().unwrap() >= 1.0);
    let reif = json(&a.path().join("reifenberg.json"));
    assert_eq!(reif["result"]["containment"]["violations"], 0);
}

#[test]
fn missed_target_exits_four_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = rlab(
        &["parametrize", "--shape", "graph-sin:a=0.02,l=0.2,samples=40000", "--depth", "3", "--eps-target", "1e-6"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "EpsilonExceeded");
    assert!(err["achieved"].as_f64().unwrap() > 1e-6);
    assert!(err["worst"]["condition"].is_string());
    // the collection is still written for inspection
    assert!(dir.path().join("ccbp.json").exists());
    assert!(!dir.path().join("flow.csv").exists());
}

#[test]
fn bad_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = rlab(&["analyze", "--input", "/definitely/not/here.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    let bad_shape = rlab(&["analyze", "--shape", "torus"], dir.path());
    assert_eq!(bad_shape.status.code(), Some(2));
    let neither = rlab(&["analyze"], dir.path());
    assert_eq!(neither.status.code(), Some(2));
    let bad_ratio = rlab(&["analyze", "--shape", SIN, "--ratio", "0.5"], dir.path());
    assert_eq!(bad_ratio.status.code(), Some(2));
    let bad_center = rlab(&["analyze", "--shape", SIN, "--region-center", "0,0"], dir.path());
    assert_eq!(bad_center.status.code(), Some(2));
    let unknown_flag = rlab(&["analyze", "--bogus"], dir.path());
    assert_eq!(unknown_flag.status.code(), Some(2));
}

#[test]
fn quasiconvex_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let plane = rlab(&["check", "quasiconvex", "--shape", "plane:samples=10000"], dir.path());
    assert!(plane.status.success());
    let report = json(&dir.path().join("quasiconvexity_report.json"));
    let kappa = report["result"]["kappa"].as_f64().unwrap();
    assert!((1.0..1.1).contains(&kappa), "{kappa}");

    let sheets = rlab(&["check", "quasiconvex", "--shape", "two-sheet:samples=10000"], dir.path());
    assert_eq!(sheets.status.code(), Some(5));
    let report = json(&dir.path().join("quasiconvexity_report.json"));
    assert_eq!(report["result"]["components"], 2);
    assert_eq!(report["result"]["kappa"], Value::Null);
}

#[test]
fn quasiconvex_report_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let shape = "sphere:samples=8000";
    let out = rlab(&["check", "quasiconvex", "--shape", shape, "--probes", "8"], dir.path());
    assert!(out.status.success());
    let mut cfg = config(shape, dir.path());
    cfg.probes = 8;
    let direct = quasiconvex_report(&cfg.load().unwrap(), &cfg).unwrap();
    let report = json(&dir.path().join("quasiconvexity_report.json"));
    assert_eq!(report["result"], serde_json::to_value(&direct).unwrap());
}

#[test]
fn poincare_check_flags_two_sheets() {
    let dir = tempfile::tempdir().unwrap();
    let ok = rlab(&["check", "poincare", "--shape", "sphere:samples=20000", "--probes", "8"], dir.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let report = json(&dir.path().join("poincare_report.json"));
    assert!(report["result"]["c_p"].as_f64().unwrap() > 0.0);
    assert!(!report["result"]["keith"].as_array().unwrap().is_empty());

    let bad = rlab(
        &["check", "poincare", "--shape", "two-sheet:samples=40000", "--r-base", "0.5", "--region-radius", "0.5"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(5));
    let report = json(&dir.path().join("poincare_report.json"));
    assert_eq!(report["result"]["audit"]["diverged"], true);
    assert_eq!(report["result"]["c_p"], Value::Null);
}

#[test]
fn csv_input_with_explicit_center() {
    let dir = tempfile::tempdir().unwrap();
    rlab(&["zoo", "generate", "--shape", SIN], dir.path());
    let input = dir.path().join("surface.csv");
    let out = rlab(
        &["analyze", "--input", input.to_str().unwrap(), "--region-center", "0.1,-0.1,0", "--depth", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("ahlfors.json"));
    assert_eq!(report["config"]["region_center"], serde_json::json!([0.1, -0.1, 0.0]));
}
