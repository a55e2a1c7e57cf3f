use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(name)
}

fn moser(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moser")).args(args).output().expect("run moser")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn standard_form_has_unit_norm() {
    let o = moser(&["norms", "--spec", s(&spec("omega0.json")), "--r", "1:4:4", "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = moser(&[
            "logvar", "--spec", s(&spec("radial_family.json")), "--r", "1:8:6", "--r-spacing", "log", "--t-nodes", "3",
            "--samples", "256", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["schema_version"], "1");
    assert_eq!(v["kind"], "log_variation");
}

#[test]
fn thread_count_does_not_change_output() {
    let path = spec("radial_omega.json");
    let args = ["norms", "--spec", s(&path), "--r", "1.2:8:4", "--inverse", "--samples", "512"];
    let one = Command::new(env!("CARGO_BIN_EXE_moser")).args(args).env("MOSER_THREADS", "1").output().unwrap();
    let two = Command::new(env!("CARGO_BIN_EXE_moser")).args(args).env("MOSER_THREADS", "3").output().unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, two.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_moser")).args(args).env("MOSER_THREADS", "zero").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn radial_bounds_hold() {
    for part in ["radial_omega.json", "radial_dsigma.json"] {
        let o = moser(&["norms", "--spec", s(&spec(part)), "--r", "1.2:8:8", "--check-bound", "--samples", "1024"]);
        assert_eq!(code(&o), 0, "{part}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["data"]["bound"]["pass"], true);
    }
    // The bound is only stated outside the blend region.
    let o = moser(&["norms", "--spec", s(&spec("radial_omega.json")), "--r", "1:8:8", "--check-bound"]);
    assert_eq!(code(&o), 2);
    let o = moser(&["norms", "--spec", s(&spec("omega0.json")), "--r", "1.2:8:8", "--check-bound"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn user_errors_exit_two() {
    let o = moser(&["norms", "--spec", s(&spec("malformed.json")), "--r", "1:4:4"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("syntax error"));
    let o = moser(&["norms", "--spec", s(&spec("missing.json")), "--r", "1:4:4"]);
    assert_eq!(code(&o), 2);
    let o = moser(&["norms", "--spec", s(&spec("omega0.json")), "--r", "1:4"]);
    assert_eq!(code(&o), 2);
    let o = moser(&["example", "no_such_case"]);
    assert_eq!(code(&o), 2);
    let o = moser(&["verify", "--spec", s(&spec("shrinking.json")), "--primitive", "euler", "--from", "1,0,0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_shrinking_family() {
    let (family, sigma_path) = (spec("shrinking.json"), spec("shrinking_sigma.json"));
    for sigma in [vec!["--primitive", "euler"], vec!["--sigma", s(&sigma_path)]] {
        let mut args = vec!["verify", "--spec", s(&family), "--points", "20"];
        args.extend(sigma);
        let o = moser(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["kind"], "verification");
        assert_eq!(v["data"]["pass"], true);
    }
}

#[test]
fn wrong_primitive_is_a_numerical_error() {
    let o = moser(&["verify", "--spec", s(&spec("shrinking.json")), "--sigma", s(&spec("wrong_sigma.json")), "--points", "5"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("primitive mismatch"));
}

#[test]
fn tight_tolerance_fails_with_exit_one() {
    let o = moser(&[
        "verify", "--spec", s(&spec("shrinking.json")), "--primitive", "euler", "--points", "5", "--tol", "1e-18",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn flow_of_shrinking_family() {
    let o = moser(&[
        "flow", "--spec", s(&spec("shrinking.json")), "--primitive", "euler", "--from", "1,0,0,0", "--times", "0:1:3",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let end = &v["data"]["records"][0]["points"][2];
    assert!((end[0].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-8);
}

#[test]
fn contact_isotopies() {
    for name in ["contact_conformal.json", "contact_perturbed.json"] {
        let o = moser(&["contact-verify", "--spec", s(&spec(name)), "--points", "10"]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = moser(&["contact-verify", "--spec", s(&spec("not_contact.json")), "--points", "10"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn example_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("shrinking");
    let o = moser(&["example", "shrinking", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["kind"], "example_summary");
    assert_eq!(summary["data"]["pass"], true);
    for f in summary["data"]["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).exists());
    }

    let out = dir.path().join("radial");
    let o = moser(&["example", "radial_pullback", "--out", s(&out), "--samples", "1024"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("inverse_profile.csv").exists());
    assert!(out.join("log_variation.csv").exists());
}
