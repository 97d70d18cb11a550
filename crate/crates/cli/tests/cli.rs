use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn ou_config(checks: Value) -> Value {
    json!({
        "problem": {
            "dimension": 1,
            "box": [[-8.0, 8.0]],
            "boundary": ["reflecting"],
            "diffusion": [["1"]],
            "drift": ["-x1"],
            "exact_density": "exp(-x1^2/2)"
        },
        "compact_function": { "u": "x1^2", "rho_m": 2.0 },
        "grid": { "n": [801] },
        "levels": { "rho_min": 2.0, "rho_max": 16.0, "count": 141 },
        "checks": checks
    })
}

fn run(dir: &Path, sub: &str, cfg: &Value, extra: &[&str]) -> (i32, Value, String) {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    let out = dir.join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_fpmeasure"))
        .arg(sub)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    let summary = std::fs::read_to_string(out.join("summary.json"))
        .map(|s| serde_json::from_str(&s).unwrap())
        .unwrap_or(Value::Null);
    (o.status.code().unwrap(), summary, String::from_utf8_lossy(&o.stderr).into_owned())
}

fn standard_checks() -> Value {
    json!([{ "check": "identity" }, { "check": "derivative" }, { "check": "Ab", "rho": [4.0, 9.0] }])
}

#[test]
fn ou_pipeline_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, s, err) = run(dir.path(), "all", &ou_config(standard_checks()), &[]);
    assert_eq!(code, 0, "{err}\n{s:#}");
    assert_eq!(s["checks_run"], 2);
    assert_eq!(s["checks_satisfied"], 2);
    assert_eq!(s["classification"]["kind"], "Lyapunov");
    for f in ["profile.csv", "identity.csv", "bounds.csv", "bounds.json", "density.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = ou_config(standard_checks());
    run(a.path(), "all", &cfg, &["--threads", "1"]);
    run(b.path(), "all", &cfg, &["--threads", "3"]);
    let mut names: Vec<_> = std::fs::read_dir(a.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 6);
    for n in names {
        let x = std::fs::read(a.path().join("out").join(&n)).unwrap();
        let y = std::fs::read(b.path().join("out").join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn json_only_writes_no_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(dir.path(), "bounds", &ou_config(standard_checks()), &["--format", "json"]);
    assert_eq!(code, 0, "{err}");
    for e in std::fs::read_dir(dir.path().join("out")).unwrap() {
        let name = e.unwrap().file_name().into_string().unwrap();
        assert!(name.ends_with(".json"), "unexpected {name}");
    }
}

#[test]
fn stages_reuse_the_cached_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ou_config(standard_checks());
    let (code, s, _) = run(dir.path(), "solve", &cfg, &[]);
    assert_eq!(code, 0);
    assert_eq!(s["density"]["source"], "solve");
    let (code, s, _) = run(dir.path(), "profile", &cfg, &[]);
    assert_eq!(code, 0);
    assert_eq!(s["density"]["source"], "cache");
    assert!(s["identity"].is_null());
}

#[test]
fn injected_density_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ou_config(standard_checks());
    run(dir.path(), "solve", &cfg, &[]);
    let saved = dir.path().join("rho.csv");
    std::fs::copy(dir.path().join("out/density.csv"), &saved).unwrap();
    let (code, s, err) = run(dir.path(), "identity", &cfg, &["--density", saved.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(s["density"]["source"], "file");
}

#[test]
fn anti_bound_on_a_lyapunov_problem_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ou_config(json!([{ "check": "Ba", "rho_0": 3.0, "rho": 4.0 }]));
    let (code, s, err) = run(dir.path(), "all", &cfg, &[]);
    assert_eq!(code, 4);
    assert!(err.contains("classification mismatch"), "{err}");
    assert_eq!(s["error"]["kind"], "classification_mismatch");
}

#[test]
fn missing_rho_m_names_the_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ou_config(json!([{ "check": "Ab" }]));
    cfg["compact_function"].as_object_mut().unwrap().remove("rho_m");
    let (code, s, err) = run(dir.path(), "all", &cfg, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("/compact_function/rho_m"), "{err}");
    assert_eq!(s["error"]["kind"], "config");
}

#[test]
fn non_smooth_u_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ou_config(standard_checks());
    cfg["compact_function"]["u"] = json!("abs(x1)");
    let (code, _, err) = run(dir.path(), "all", &cfg, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("U must be C"), "{err}");
}

#[test]
fn unknown_fields_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ou_config(standard_checks());
    cfg["grid"]["m"] = json!(3);
    let (code, _, err) = run(dir.path(), "all", &cfg, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("/grid"), "{err}");
}

#[test]
fn solved_density_passes_the_same_checks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ou_config(json!([{ "check": "derivative" }, { "check": "Ab", "rho": 9.0 }]));
    cfg["problem"].as_object_mut().unwrap().remove("exact_density");
    let (code, s, err) = run(dir.path(), "all", &cfg, &[]);
    assert_eq!(code, 0, "{err}\n{s:#}");
    assert_eq!(s["density"]["source"], "solve");
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["ou.json", "arcsine.json"] {
        fpmeasure_cli::load_config(&dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
