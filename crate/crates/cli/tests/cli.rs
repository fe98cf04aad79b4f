use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qcframe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcframe"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn glue_writes_fields_and_reports_k_tilde() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(dir.path(), &["glue", "--n", "2", "--res", "48"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["glued.qcfield", "distortion.qcfield", "glue.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let s = json(&dir.path().join("glue.json"));
    let k_tilde = s["k_tilde"].as_f64().unwrap();
    assert!((2.0..3.0).contains(&k_tilde), "{k_tilde}");
    assert_eq!(s["resolution"], serde_json::json!([48, 48]));
    assert_eq!(s["config"]["res"], 48);
    assert!(s["version"].is_string());
    let dist = qcframe::io::load_forms(&dir.path().join("distortion.qcfield")).unwrap();
    let k = dist[0].components()[0].iter().fold(0.0, |m: f64, &v| m.max(v));
    assert!((k - k_tilde).abs() <= 1e-12, "{k} vs {k_tilde}");
}

#[test]
fn identity_glue_still_has_collar_energy() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(dir.path(), &["glue", "--n", "2", "--res", "48", "--inner", "identity"]);
    assert!(o.status.success());
    let s = json(&dir.path().join("glue.json"));
    assert!(s["energy"].as_f64().unwrap() > 0.0);
    // The two primitives differ by a constant, which dθ turns into a shear.
    let k_tilde = s["k_tilde"].as_f64().unwrap();
    assert!(k_tilde > 1.0 && k_tilde.is_finite(), "{k_tilde}");
}

#[test]
fn invalid_radii_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(dir.path(), &["glue", "--radii", "1,0.75,1.25,1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("radii"));
}

#[test]
fn non_qc_collar_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(dir.path(), &["glue", "--n", "2", "--res", "32", "--k", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"n": 2, "res": 24, "q": 3.0}"#).unwrap();
    let o = qcframe(dir.path(), &["glue", "--config", cfg.to_str().unwrap(), "--res", "32"]);
    assert!(o.status.success());
    let s = json(&dir.path().join("glue.json"));
    assert_eq!(s["config"]["res"], 32);
    assert_eq!(s["config"]["q"], 3.0);
}

#[test]
fn minimizing_from_the_identity_is_immediate() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(
        dir.path(),
        &["minimize", "--n", "2", "--res", "24", "--map", "identity"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("minimize.json"));
    assert_eq!(s["energy"].as_f64().unwrap(), 0.0);
    assert_eq!(s["converged"], true);
    for f in ["minimizer.qcfield", "history.csv", "diagnostics.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn exhausted_budget_exits_three_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(dir.path(), &["minimize", "--n", "2", "--res", "24", "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(3));
    let history = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(history.lines().count() >= 2);
    let s = json(&dir.path().join("minimize.json"));
    assert_eq!(s["status"], "budget");
    assert_eq!(s["converged"], false);
}

#[test]
fn minimizing_a_saved_frame_round_trips_through_input() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    assert!(qcframe(&g, &["glue", "--n", "2", "--res", "24"]).status.success());
    let input = g.join("glued.qcfield");
    let e = dir.path().join("e");
    let o = qcframe(&e, &["energy", "--n", "2", "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let glued = json(&g.join("glue.json"));
    let measured = json(&e.join("energy.json"));
    assert_eq!(glued["energy"], measured["energy"]);
    assert_eq!(measured["initial_frame"], "input");
}

#[test]
fn degree_of_planar_winding() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(
        dir.path(),
        &["degree", "--n", "2", "--map", "winding2d:k=2", "--res", "64"],
    );
    assert!(o.status.success());
    let s = json(&dir.path().join("degree.json"));
    assert_eq!(s["degree_at_origin"], 2);
    assert_eq!(s["max_degree"], 2);
    assert_eq!(s["unresolved"], 0);
    let excess = s["excess_integral"].as_f64().unwrap();
    assert!((excess - std::f64::consts::PI).abs() < 0.05, "{excess}");
    let csv = fs::read_to_string(dir.path().join("degree.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("y1,y2,deg,mask"));
    assert_eq!(csv.lines().count(), 64 * 64 + 1);
}

#[test]
fn degree_needs_a_map() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(dir.path(), &["degree", "--n", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qcframe(dir.path(), &["degree", "--n", "2", "--map", "winding3d:k=2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_suite_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = qcframe(dir.path(), &["verify", "--only", "nonexistent"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonexistent"));
}

#[test]
fn verify_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = qcframe(
            &out,
            &[
                "verify",
                "--res",
                "16",
                "--seed",
                "7",
                "--only",
                "degree,continuity,glue",
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files
            .iter()
            .map(|p| (p.file_name().unwrap().to_owned(), fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    let a = run("a");
    assert!(a.iter().any(|(f, _)| f == "checks.csv"));
    assert!(a.iter().any(|(f, _)| f == "verify.json"));
    assert_eq!(a, run("b"));
}
