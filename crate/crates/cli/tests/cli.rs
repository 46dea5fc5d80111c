use holotwist::report::Report;
use serde_json::{json, Value};
use std::path::Path;
use std::process::Command;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    report: Value,
    text: String,
}

fn run(dir: &Path, args: &[&str], config: Option<Value>) -> Run {
    let out = dir.join("report.json");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_holotwist"));
    cmd.args(args).arg("--out").arg(&out);
    if let Some(cfg) = config {
        let p = dir.join("config.json");
        std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        cmd.arg("--config").arg(&p);
    }
    let o = cmd.output().unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    Run {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8(o.stdout).unwrap(),
        report: serde_json::from_str(&text).unwrap(),
        text,
    }
}

fn cx(v: &Value) -> (f64, f64) {
    (v[0].as_f64().unwrap(), v[1].as_f64().unwrap())
}

#[test]
fn verify_passes_on_the_trivial_bundle() {
    let d = TempDir::new().unwrap();
    let r = run(d.path(), &["verify", "--example", "trivial-sphere"], None);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(r.report["pass"], json!(true));
    let checks = r.report["checks"].as_array().unwrap();
    assert!(checks.len() >= 15);
    assert!(checks.iter().all(|c| c["pass"] == json!(true)));
    assert!(r.stdout.starts_with("verify: PASS"));
}

#[test]
fn functor_on_the_monopole_reports_a_representative_pair() {
    let d = TempDir::new().unwrap();
    let cfg = json!({
        "schema": 1,
        "example": "monopole",
        "cylinder": { "name": "band", "beta0": 0.3, "beta1": 1.2, "gamma0": 0.2, "gamma1": 1.0 },
    });
    let r = run(d.path(), &["functor"], Some(cfg));
    assert_eq!(r.code, 0, "{}", r.stdout);
    let m = &r.report["values"]["morphism"];
    for key in ["source", "target"] {
        let rows = m[key].as_array().unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|row| row.as_array().unwrap().len() == 2));
    }
    let names: Vec<&str> = r.report["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["second subdivision", "thin warp", "thin fold"]);
    assert_eq!(r.report["config"]["example"], json!("monopole"));
}

#[test]
fn negative_tolerance_is_a_config_error() {
    let d = TempDir::new().unwrap();
    let r = run(d.path(), &["validate"], Some(json!({ "schema": 1, "example": "monopole", "tol": -1e-6 })));
    assert_eq!(r.code, 2);
    assert_eq!(r.report["error"]["kind"], json!("config"));
    assert_eq!(r.report["error"]["path"], json!("tol"));
    assert_eq!(r.report["pass"], json!(false));

    let r = run(d.path(), &["validate", "--example", "monopole", "--tol", "-1"], None);
    assert_eq!(r.code, 2);
    assert_eq!(r.report["error"]["path"], json!("tol"));
}

#[test]
fn config_errors_name_the_offending_key() {
    let d = TempDir::new().unwrap();
    let cases = [
        (json!({ "schema": 1, "example": "monopole", "holonomy": { "stpes_per_unit": 3 } }), "holonomy.stpes_per_unit"),
        (json!({ "schema": 1, "example": "monopole", "reconstruct": { "rho": 0.0 } }), "reconstruct.rho"),
        (json!({ "schema": 2, "example": "monopole" }), "schema"),
        (json!({ "schema": 1, "example": "nope" }), "example"),
        (json!({ "schema": 1, "example": "monopole", "loop": { "name": "winding", "p": 1, "q": 1 } }), "loop"),
        (
            json!({ "schema": 1, "family": { "family": "custom-abelian", "model": "plane", "a": ["u +", "0"], "f": ["0"] } }),
            "family",
        ),
    ];
    for (cfg, path) in cases {
        let cmd = if path == "loop" { "hol1" } else { "validate" };
        let r = run(d.path(), &[cmd], Some(cfg));
        assert_eq!(r.code, 2, "{path}: {}", r.stdout);
        assert_eq!(r.report["error"]["path"], json!(path), "{}", r.text);
    }
    let o = Command::new(env!("CARGO_BIN_EXE_holotwist")).args(["validate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_checks_and_domain_errors_exit_with_one() {
    let d = TempDir::new().unwrap();
    let r = run(d.path(), &["validate", "--example", "monopole", "--tol", "1e-300"], None);
    assert_eq!(r.code, 1);
    assert!(r.report["error"].is_null());
    assert!(r.report["checks"].as_array().unwrap().iter().any(|c| c["pass"] == json!(false)));

    let cfg = json!({
        "schema": 1,
        "example": "monopole",
        "holonomy": { "assign": { "max_depth": 0 } },
        "cylinder": { "name": "band", "beta0": 0.0, "beta1": 2.8, "gamma1": -1.5 },
    });
    let r = run(d.path(), &["functor"], Some(cfg));
    assert_eq!(r.code, 1);
    assert_eq!(r.report["error"]["kind"], json!("domain"));
    assert_eq!(r.report["error"]["variant"], json!("max-depth-exceeded"));
}

#[test]
fn reports_are_deterministic_apart_from_timings() {
    let d = TempDir::new().unwrap();
    let cfg = json!({ "schema": 1, "example": "pu2", "samples": 5, "seed": 11 });
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timings");
        serde_json::to_string(&v).unwrap()
    };
    let a = run(d.path(), &["validate"], Some(cfg.clone()));
    let b = run(d.path(), &["validate"], Some(cfg.clone()));
    assert_eq!(strip(a.report.clone()), strip(b.report));
    let c = run(d.path(), &["validate", "--seed", "12"], Some(cfg));
    assert_ne!(strip(a.report), strip(c.report.clone()));
    assert_eq!(c.report["config"]["seed"], json!(12));
}

#[test]
fn reports_round_trip_through_the_serializer() {
    let d = TempDir::new().unwrap();
    let cfg = json!({
        "schema": 1,
        "example": "custom-plane",
        "loop": { "name": "plane-circle", "r": 0.3, "angle": 0.7 },
    });
    let r = run(d.path(), &["hol1"], Some(cfg));
    let parsed: Report = serde_json::from_str(&r.text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&parsed).unwrap() + "\n", r.text);
    let again: Report = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(again, parsed);
}

/// `A = i u dv` transports by `exp(i·area)` around a counter-clockwise circle.
#[test]
fn custom_abelian_holonomy_is_the_enclosed_area() {
    let d = TempDir::new().unwrap();
    let r0 = 0.3;
    let cfg = json!({
        "schema": 1,
        "family": { "family": "custom-abelian", "model": "plane", "a": ["0", "i*u"], "f": ["i"] },
        "loop": { "name": "plane-circle", "r": r0, "angle": 0.7 },
    });
    let r = run(d.path(), &["hol1"], Some(cfg));
    assert_eq!(r.code, 0, "{}", r.stdout);
    let (re, im) = cx(&r.report["values"]["value"][0][0]);
    let phase = std::f64::consts::PI * r0 * r0;
    assert!((re - phase.cos()).abs() < 1e-9 && (im - phase.sin()).abs() < 1e-9, "{re} {im}");
}

#[test]
fn closed_monopole_surface_is_quantised() {
    let d = TempDir::new().unwrap();
    let cfg = json!({ "schema": 1, "example": "monopole-2", "cylinder": { "name": "sweep", "m": 1 } });
    let r = run(d.path(), &["surface"], Some(cfg));
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(r.report["values"]["closed"], json!(true));
    let (re, im) = cx(&r.report["values"]["epsilon"]["value"]);
    assert!((re - 1.0).abs() < 1e-6 && im.abs() < 1e-6);
    // The log is 2πi·n·(winding), not zero.
    let (_, lim) = cx(&r.report["values"]["epsilon"]["log"]);
    assert!(lim.abs() > 1.0);
}

#[test]
fn gauge_trace_and_base_holonomy_commands_pass() {
    let d = TempDir::new().unwrap();
    let r = run(d.path(), &["gauge", "--example", "monopole", "--seed", "3"], None);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(r.report["checks"].as_array().unwrap().len(), 2);

    let r = run(d.path(), &["trace", "--example", "pu2"], None);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.report["values"]["trace"].is_array());

    let cfg = json!({ "schema": 1, "example": "pu2", "loop": { "name": "pole-circle", "beta": 1.0, "gamma": 0.4 } });
    let r = run(d.path(), &["hol0"], Some(cfg));
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(r.report["values"]["value"].as_array().unwrap().len(), 3);
}

#[test]
fn reconstruction_commands_pass_on_the_trivial_bundle() {
    let d = TempDir::new().unwrap();
    let r = run(d.path(), &["reconstruct", "--example", "trivial-sphere"], None);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(r.report["values"]["transitions"].as_array().unwrap().len(), 6);
    assert_eq!(r.report["values"]["cocycles"].as_array().unwrap().len(), 4);

    let cfg = json!({
        "schema": 1,
        "example": "trivial-sphere",
        "battery": [{ "name": "band", "beta0": 0.0, "beta1": 0.6 }],
    });
    let r = run(d.path(), &["roundtrip"], Some(cfg));
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(r.report["checks"].as_array().unwrap().len(), 1);
}

#[test]
fn list_examples_needs_no_config() {
    let d = TempDir::new().unwrap();
    let r = run(d.path(), &["list-examples"], None);
    assert_eq!(r.code, 0);
    let names: Vec<&str> = r.report["values"]["examples"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    for n in ["trivial-sphere", "torus-flat", "monopole", "pu2", "custom-plane"] {
        assert!(names.contains(&n), "{n}");
    }
    assert!(r.stdout.contains("monopole"));
}

#[test]
fn unknown_command_is_a_usage_error() {
    let d = TempDir::new().unwrap();
    let r = run(d.path(), &["holonomize", "--example", "monopole"], None);
    assert_eq!(r.code, 2);
    assert_eq!(r.report["error"]["kind"], json!("config"));
}
