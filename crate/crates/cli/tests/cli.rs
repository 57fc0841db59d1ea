use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn hrv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    hrv(&args)
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn vec2(v: &Value) -> [f64; 2] {
    [v[0].as_f64().unwrap(), v[1].as_f64().unwrap()]
}

#[test]
fn analyze_log_gaussian_reports_closed_form_critical_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("analyze", &config("log_gaussian.toml"), dir.path(), &["--n", "20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    let xi = vec2(&r["xi_star"]);
    assert!((xi[0] - 2.0 / 3.0).abs() < 1e-6 && (xi[1] - 2.0 / 3.0).abs() < 1e-6);
    assert!((r["h"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-6);
    assert_eq!(r["schema_version"], 1);
    for f in ["level_set.csv", "level_set.svg", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(fs::read_to_string(dir.path().join("level_set.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn analyze_ccc_garch_has_unit_indices() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("analyze", &config("ccc_garch.toml"), dir.path(), &["--n", "20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let a = vec2(&report(dir.path())["alpha"]);
    assert!((a[0] - 1.0).abs() < 1e-6 && (a[1] - 1.0).abs() < 1e-6, "{a:?}");
}

#[test]
fn analyze_constant_model_exits_with_no_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("analyze", &config("constant.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NoRoot"));
    assert!(report(dir.path())["error"].as_str().unwrap().contains("NoRoot"));
}

#[test]
fn config_and_usage_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "family = \"LogGaussian\"\nm = [-0.5, -0.5]\nC = [[1.0, 0.0], [0.0, 1.0]]\ncolour = 1\n",
    )
    .unwrap();
    assert_eq!(run("analyze", &bad, &dir.path().join("a"), &[]).status.code(), Some(3));
    assert_eq!(
        run("analyze", &dir.path().join("missing.toml"), &dir.path().join("b"), &[])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(hrv(&["no-such-command"]).status.code(), Some(3));
    let o = run(
        "tail-scan",
        &config("log_gaussian.toml"),
        &dir.path().join("c"),
        &["--mode", "marginal", "--t-grid", "100:10:5"],
    );
    assert_eq!(o.status.code(), Some(3));
    let o = run(
        "tail-scan",
        &config("log_gaussian.toml"),
        &dir.path().join("d"),
        &["--mode", "joint"],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_is_deterministic_and_handles_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("log_gaussian.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("simulate", &cfg, &a, &["--n", "3000", "--workers", "1"])
        .status
        .success());
    assert!(run("simulate", &cfg, &b, &["--n", "3000", "--workers", "2"])
        .status
        .success());
    assert_eq!(
        fs::read(a.join("samples.csv")).unwrap(),
        fs::read(b.join("samples.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("report.json")).unwrap(),
        fs::read(b.join("report.json")).unwrap()
    );

    let z = dir.path().join("z");
    assert!(run("simulate", &cfg, &z, &["--n", "0"]).status.success());
    assert_eq!(
        fs::read_to_string(z.join("samples.csv")).unwrap(),
        "x1,x2,s,omega1,omega2\n"
    );

    let k = dir.path().join("k");
    assert!(run("simulate", &config("constant.toml"), &k, &["--n", "50", "--cache"])
        .status
        .success());
    let text = fs::read_to_string(k.join("samples.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| *r == rows[0]));
    assert!(k.join("samples.hrvb").exists());
}

#[test]
fn manifest_digests_match_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(
        "simulate",
        &config("log_gaussian.toml"),
        dir.path(),
        &["--n", "500", "--seed", "9"]
    )
    .status
    .success());
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["command"], "simulate");
    let outputs = m["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for f in outputs {
        let bytes = fs::read(dir.path().join(f["path"].as_str().unwrap())).unwrap();
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(f["sha256"].as_str().unwrap(), digest);
    }
}

#[test]
fn tail_scan_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("log_gaussian.toml");
    let j = dir.path().join("joint");
    let o = run(
        "tail-scan",
        &cfg,
        &j,
        &[
            "--mode",
            "joint",
            "--xi",
            "0.3,0.3",
            "--n",
            "100000",
            "--t-grid",
            "2:20:3,log",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scaling = &report(&j)["scans"][0]["scaling"];
    assert!((scaling["exponent"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert_eq!(scaling["log_factor"], false);
    let csv = fs::read_to_string(j.join("joint.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,raw,stderr,scaled,estimator"));

    let a = dir.path().join("analysis");
    assert!(run("analyze", &cfg, &a, &["--n", "20000"]).status.success());
    let h = dir.path().join("hrv");
    let o = run(
        "tail-scan",
        &cfg,
        &h,
        &[
            "--mode",
            "hrv",
            "--analysis",
            a.to_str().unwrap(),
            "--n",
            "100000",
            "--t-grid",
            "5:50:3,log",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&h);
    assert_eq!(r["xi_star_source"], "analysis");
    assert_eq!(r["xi_star"], report(&a)["xi_star"]);
    assert_eq!(r["scans"][0]["scaling"]["log_factor"], true);
    for f in [
        "hrv.csv",
        "spectral_q90.csv",
        "spectral_q99.csv",
        "k_invariance.csv",
        "tail_scan.svg",
    ] {
        assert!(h.join(f).exists(), "{f}");
    }

    let m = dir.path().join("marginal");
    assert!(run("tail-scan", &cfg, &m, &["--mode", "marginal", "--n", "50000"])
        .status
        .success());
    assert!(m.join("marginal_1.csv").exists() && m.join("marginal_2.csv").exists());
}

#[test]
fn exceedance_reports_importance_and_walk_box() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "exceedance",
        &config("log_gaussian.toml"),
        dir.path(),
        &["--t", "5", "--paths", "20000"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    assert!(r["exceedance"]["is"]["value"].as_f64().unwrap() > 0.0);
    assert!(r["exceedance"]["crude"]["value"].as_f64().is_some());
    assert!(r["walk_box"]["gauss"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn renewal_check_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("walk");
    let o = run(
        "renewal-check",
        &config("walk.toml"),
        &w,
        &["--paths", "2000", "--t-grid", "20:200:2,log"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stability ratio"));
    let r = report(&w);
    assert!(r["stability_ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(r["estimate"]["group_slices"].as_array().unwrap().len(), 1);
    let csv = fs::read_to_string(w.join("renewal.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,value,stderr,k"));

    let z = dir.path().join("z2");
    assert!(run(
        "renewal-check",
        &config("walk_z2.toml"),
        &z,
        &["--paths", "2000", "--t-grid", "20:200:2,log"]
    )
    .status
    .success());
    assert_eq!(report(&z)["estimate"]["group_slices"].as_array().unwrap().len(), 2);

    let o = run(
        "renewal-check",
        &config("walk_zero_drift.toml"),
        &dir.path().join("zero"),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("drift is zero"));
    let o = run(
        "renewal-check",
        &config("log_gaussian.toml"),
        &dir.path().join("wrong"),
        &[],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn check_assumptions_reports_every_entry() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "check-assumptions",
        &config("log_gaussian_06.toml"),
        dir.path(),
        &["--n", "20000"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        report(dir.path())["assumptions"]["entries"].as_array().unwrap().len(),
        6
    );
    // at correlation 0.5 the tilted mean of log A_2 at xi = (1, 0) is exactly zero
    let o = run(
        "check-assumptions",
        &config("log_gaussian.toml"),
        &dir.path().join("edge"),
        &["--n", "20000"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("A6"));
}
