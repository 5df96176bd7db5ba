use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MQ: &str = "model = \"multiquadratic\"\nd = 2\nsigma = [1, 1.5]\nrho12 = 0.4\nalpha = [0.5, 0.4, 0.42]\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spherefield"));
    c.env_remove("SPHEREFIELD_OUT_DIR");
    c
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn lm(alpha: f64, nu: f64) -> String {
    format!("{{\"model\": \"legendre_matern\", \"sigma\": 1.0, \"alpha\": {alpha}, \"nu\": {nu}}}")
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.toml", MQ);
    let o = run(bin().args(["validate", "--config"]).arg(&ok));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["valid"], true);

    // alpha_12 above the geometric mean of alpha_11, alpha_22
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"model": "multiquadratic", "d": 2, "sigma": [1, 1], "rho12": 0.4, "alpha": [0.5, 0.3, 0.45]}"#,
    );
    assert_eq!(code(&run(bin().args(["validate", "--config"]).arg(&bad))), 2);

    let missing = write(dir.path(), "missing.json", r#"{"model": "legendre_matern", "sigma": 1.0, "alpha": 1.0}"#);
    let o = run(bin().args(["validate", "--config"]).arg(&missing));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nu"));

    assert_eq!(code(&run(bin().args(["validate", "--config", "/nonexistent.toml"]))), 1);
    assert_eq!(code(&run(bin().args(["frobnicate"]))), 1);
    assert_eq!(code(&run(bin().args(["--help"]))), 0);
}

#[test]
fn toml_and_json_configs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let t = write(dir.path(), "m.toml", MQ);
    let j = write(
        dir.path(),
        "m.json",
        r#"{"model": "multiquadratic", "d": 2, "sigma": [1, 1.5], "rho12": 0.4, "alpha": [0.5, 0.4, 0.42]}"#,
    );
    let export = |p: &Path| run(bin().args(["schoenberg-export", "--l-max", "20", "--config"]).arg(p)).stdout;
    let (a, b) = (export(&t), export(&j));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn kernel_table_columns_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.toml", MQ);
    let o = run(bin().args(["kernel", "--thetas", "0,0.5,3.14159", "--config"]).arg(&cfg));
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "theta");
    assert!(header.contains(&"tail_bound"));
    assert_eq!(lines.count(), 3);

    assert_eq!(code(&run(bin().args(["kernel", "--thetas", "4.0", "--config"]).arg(&cfg))), 1);
}

#[test]
fn equiv_exit_codes_follow_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", &lm(1.0, 1.0));
    let b = write(dir.path(), "b.json", &lm(2.0, 1.0));
    let c = write(dir.path(), "c.json", &lm(1.0, 1.2));
    let mq = write(dir.path(), "mq.toml", MQ);
    let equiv = |x: &Path, y: &Path| {
        run(bin().args(["equiv", "--l-max", "128", "--k-max", "64", "--config"]).arg(x).arg("--config").arg(y))
    };

    let o = equiv(&a, &b);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["closed_form"]["verdict"], "Equivalent");

    assert_eq!(code(&equiv(&a, &c)), 3);
    assert_eq!(code(&equiv(&a, &a)), 0);
    assert_eq!(code(&equiv(&a, &mq)), 1);
}

#[test]
fn sample_is_reproducible_and_honours_out_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.toml", MQ);
    let env_out = dir.path().join("from_env");
    let o = run(bin()
        .env("SPHEREFIELD_OUT_DIR", &env_out)
        .args(["sample", "--grid", "equiangular:4x8", "--n-samples", "2", "--seed", "5", "--l-max", "12", "--config"])
        .arg(&cfg));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(env_out.join("manifest.json").is_file());
    assert!(env_out.join("sample_0000.csv").is_file());
    assert!(env_out.join("sample_0001.csv").is_file());

    let explicit = dir.path().join("explicit");
    let o = run(bin()
        .args(["sample", "--grid", "equiangular:4x8", "--n-samples", "2", "--seed", "5", "--l-max", "12", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&explicit));
    assert_eq!(code(&o), 0);
    for f in ["sample_0000.csv", "sample_0001.csv"] {
        assert_eq!(fs::read(env_out.join(f)).unwrap(), fs::read(explicit.join(f)).unwrap());
    }

    let rerun = run(bin()
        .arg("sample")
        .arg("--manifest")
        .arg(explicit.join("manifest.json"))
        .arg("--out")
        .arg(dir.path().join("rerun")));
    assert_eq!(code(&rerun), 0);

    // a tampered hash is reported as a mismatch
    let manifest = fs::read_to_string(explicit.join("manifest.json")).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    m["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    let tampered = write(dir.path(), "tampered.json", &m.to_string());
    let o = run(bin().args(["sample", "--manifest"]).arg(&tampered).arg("--out").arg(dir.path().join("t")));
    assert_eq!(code(&o), 3);
}

#[test]
fn sample_rejects_unsupported_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m3.json",
        r#"{"model": "multiquadratic", "d": 3, "sigma": [1, 1], "rho12": 0.3, "alpha": [0.5, 0.5, 0.4]}"#,
    );
    let o = run(bin().args(["sample", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")));
    assert_eq!(code(&o), 2);
}

#[test]
fn mc_check_passes_and_detects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.toml", MQ);
    let inflated = write(dir.path(), "big.toml", &MQ.replace("sigma = [1, 1.5]", "sigma = [1.2, 1.8]"));
    let mc = |extra: &[&str]| {
        run(bin()
            .args(["mc-check", "--l-max", "15", "--n-samples", "2000", "--seed", "3", "--config"])
            .arg(&cfg)
            .args(extra)
            .arg("--out")
            .arg(dir.path().join("r.json")))
    };
    assert_eq!(code(&mc(&[])), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"].as_array().unwrap().len(), 10);
    assert_eq!(code(&mc(&["--analytic-config", inflated.to_str().unwrap()])), 3);
    assert_eq!(code(&mc(&["--n-samples", "1"])), 1);
}
