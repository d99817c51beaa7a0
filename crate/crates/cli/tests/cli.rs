use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use stokeslet::density::ParticleCloud;
use stokeslet::flow::FlowTrajectory;
use stokeslet::Vec3;
use tempfile::TempDir;

fn stokeslet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stokeslet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

/// Runs one subcommand on `cfg` and returns the exit code and output directory.
fn run(command: &str, cfg: &Value) -> (i32, PathBuf, TempDir, Output) {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "scenario.json", cfg);
    let out = tmp.path().join("out");
    let result = stokeslet(
        &[
            command,
            "--config",
            path.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    (result.status.code().unwrap(), out, tmp, result)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn schema(name: &str) -> Value {
    read_json(
        &Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("schema")
            .join(name),
    )
}

/// Validator for the subset of JSON Schema used by the files in `schema/`.
fn validate(value: &Value, schema: &Value, root: &Value, path: &str, errors: &mut Vec<String>) {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let name = r.strip_prefix("#/$defs/").expect("local reference");
        return validate(value, &root["$defs"][name], root, path, errors);
    }
    if let Some(types) = schema.get("type") {
        let names: Vec<&str> = match types {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => panic!("bad type keyword"),
        };
        let ok = names.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            _ => panic!("unknown type {t}"),
        });
        if !ok {
            errors.push(format!("{path}: expected {names:?}, got {value}"));
            return;
        }
    }
    if let Some(c) = schema.get("const") {
        if value != c {
            errors.push(format!("{path}: expected {c}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            errors.push(format!("{path}: {value} not in {options:?}"));
        }
    }
    if let Some(options) = schema.get("oneOf").and_then(Value::as_array) {
        let matches = options
            .iter()
            .filter(|s| {
                let mut e = Vec::new();
                validate(value, s, root, path, &mut e);
                e.is_empty()
            })
            .count();
        if matches != 1 {
            errors.push(format!("{path}: {matches} oneOf branches match"));
        }
    }
    if let Some(x) = value.as_f64() {
        if let Some(m) = schema.get("minimum").and_then(Value::as_f64) {
            if x < m {
                errors.push(format!("{path}: {x} < {m}"));
            }
        }
        if let Some(m) = schema.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= m {
                errors.push(format!("{path}: {x} ≤ {m}"));
            }
        }
    }
    if let Some(s) = value.as_str() {
        let n = s.chars().count() as u64;
        if schema
            .get("minLength")
            .and_then(Value::as_u64)
            .is_some_and(|m| n < m)
            || schema
                .get("maxLength")
                .and_then(Value::as_u64)
                .is_some_and(|m| n > m)
        {
            errors.push(format!("{path}: length {n} out of bounds"));
        }
    }
    if let Some(items) = value.as_array() {
        let n = items.len() as u64;
        if schema
            .get("minItems")
            .and_then(Value::as_u64)
            .is_some_and(|m| n < m)
            || schema
                .get("maxItems")
                .and_then(Value::as_u64)
                .is_some_and(|m| n > m)
        {
            errors.push(format!("{path}: {n} items out of bounds"));
        }
        if let Some(item) = schema.get("items") {
            for (i, v) in items.iter().enumerate() {
                validate(v, item, root, &format!("{path}[{i}]"), errors);
            }
        }
    }
    if let Some(object) = value.as_object() {
        let properties = schema.get("properties").and_then(Value::as_object);
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !object.contains_key(key) {
                    errors.push(format!("{path}: missing {key}"));
                }
            }
        }
        for (key, v) in object {
            match properties.and_then(|p| p.get(key)) {
                Some(s) => validate(v, s, root, &format!("{path}.{key}"), errors),
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    errors.push(format!("{path}: unexpected key {key}"))
                }
                None => {}
            }
        }
    }
}

fn schema_errors(value: &Value, schema: &Value) -> Vec<String> {
    let mut errors = Vec::new();
    validate(value, schema, schema, "$", &mut errors);
    errors
}

fn single_particle(dir: &Path, z0: f64, w: f64) -> PathBuf {
    let path = dir.join("single.csv");
    ParticleCloud::single(Vec3::new(0.0, 0.0, z0), w)
        .unwrap()
        .save(&path)
        .unwrap();
    path
}

#[test]
fn validator_rejects_bad_documents() {
    let s = schema("config.schema.json");
    assert!(schema_errors(&json!({}), &s).is_empty());
    assert!(!schema_errors(&json!({"dt": -1.0}), &s).is_empty());
    assert!(!schema_errors(&json!({"bogus": 1}), &s).is_empty());
    assert!(!schema_errors(&json!({"initial_density": {"kind": "annulus"}}), &s).is_empty());
    assert!(!schema_errors(&json!({"stability": {"theta": "linear"}}), &s).is_empty());
}

#[test]
fn written_configs_and_reports_match_schemas() {
    let config_schema = schema("config.schema.json");
    let report_schema = schema("report.schema.json");
    for (command, cfg) in [
        ("osgood-verify", json!({})),
        ("example-norms", json!({"seed": 3})),
        (
            "simulate",
            json!({"n_particles": 20, "t_final": 0.05, "summation": {"kind": "tree"}, "stability": {"theta": {"constant": 1.0}}}),
        ),
        (
            "symmetry",
            json!({
                "initial_density": {"kind": "annulus", "inner": 0.25, "outer": 1.0, "half_height": 0.5,
                                    "n_radial": 2, "n_vertical": 2, "sectors": 6},
                "t_final": 0.05, "symmetry": {"thetas": [1.0]}
            }),
        ),
    ] {
        let (_, out, _tmp, _) = run(command, &cfg);
        let written = read_json(&out.join("config.json"));
        let errors = schema_errors(&written["config"], &config_schema);
        assert!(errors.is_empty(), "{command} config: {errors:?}");
        let report = read_json(&out.join("report.json"));
        let errors = schema_errors(&report, &report_schema);
        assert!(errors.is_empty(), "{command} report: {errors:?}");
        assert_eq!(report["config_hash"], written["config_hash"]);
        assert!(report["config_hash"]
            .as_str()
            .unwrap()
            .chars()
            .all(|c| c.is_ascii_hexdigit()));
    }
}

#[test]
fn exit_codes() {
    assert_eq!(run("osgood-verify", &json!({})).0, 0);
    // The growth check on the explicit example cannot pass on the default grid.
    assert_eq!(run("example-norms", &json!({})).0, 1);
    let (code, _, _tmp, out) = run("simulate", &json!({"n_particles": 10, "colour": "red"}));
    assert_eq!(code, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    let (code, _, _tmp, out) = run("simulate", &json!({"dt": 0.0}));
    assert_eq!(code, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt: "));
    let (code, _, _tmp, out) = run("example-norms", &json!({"example": {"p_grid": [1.0, 2.0]}}));
    assert_eq!(code, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("example.p_grid"));
    let (code, _, _tmp, _) = run(
        "mollify-converge",
        &json!({"initial_density": {"kind": "annulus", "inner": 0.2, "outer": 1.0, "half_height": 0.5, "n_radial": 2, "n_vertical": 2, "sectors": 4}}),
    );
    assert_eq!(code, 2);
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_bit_identical() {
    let cfg = json!({
        "initial_density": {"kind": "smooth-bump", "radius": 1.0, "height": 2.0},
        "n_particles": 60, "sampling": {"kind": "stratified"}, "seed": 17,
        "t_final": 0.2, "dt": 0.02, "tracers": [[0.1, 0.2, 0.3]]
    });
    let (code_a, out_a, _ta, _) = run("simulate", &cfg);
    let (code_b, out_b, _tb, _) = run("simulate", &cfg);
    assert_eq!((code_a, code_b), (0, 0));
    let (fa, fb) = (files(&out_a), files(&out_b));
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() > 3);
    for (a, b) in fa.iter().zip(&fb) {
        assert_eq!(
            a.strip_prefix(&out_a).unwrap(),
            b.strip_prefix(&out_b).unwrap()
        );
        assert_eq!(
            fs::read(a).unwrap(),
            fs::read(b).unwrap(),
            "{}",
            a.display()
        );
    }
    let csv = fs::read_to_string(out_a.join("norms.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert!(csv.lines().next().unwrap().ends_with("seed=17"));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "a.json", &json!({}));
    let out = tmp.path().join("out");
    let status = stokeslet(
        &[
            "osgood-verify",
            "--config",
            path.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--seed",
            "99",
        ],
        tmp.path(),
    );
    assert_eq!(status.status.code(), Some(0));
    assert_eq!(read_json(&out.join("report.json"))["seed"], 99);
}

#[test]
fn several_configs_get_their_own_directories() {
    let tmp = TempDir::new().unwrap();
    let a = write_config(tmp.path(), "first.json", &json!({}));
    let b = write_config(tmp.path(), "second.json", &json!({"seed": 5}));
    let out = tmp.path().join("out");
    let status = stokeslet(
        &[
            "osgood-verify",
            "--config",
            a.to_str().unwrap(),
            "--config",
            b.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(status.status.code(), Some(0));
    assert_eq!(read_json(&out.join("first/report.json"))["seed"], 0);
    assert_eq!(read_json(&out.join("second/report.json"))["seed"], 5);
}

#[test]
fn single_particle_settles_at_the_self_induced_speed() {
    let tmp = TempDir::new().unwrap();
    let (z0, w, eps, t) = (0.3, 2.0, 0.1, 1.0);
    let cloud = single_particle(tmp.path(), z0, w);
    let cfg = json!({
        "initial_density": {"kind": "cloud-file", "path": cloud},
        "epsilon": eps, "dt": 0.05, "t_final": t
    });
    let (code, out, _tmp, _) = run("simulate", &cfg);
    assert_eq!(code, 0);
    let traj = FlowTrajectory::read_dir(out.join("trajectory")).unwrap();
    let x = traj.last().positions()[0];
    let expected = z0 - w * t / (8.0 * std::f64::consts::PI * eps);
    assert!(x[0].abs() <= 1e-15 && x[1].abs() <= 1e-15);
    assert!((x[2] - expected).abs() <= 1e-10, "{} vs {expected}", x[2]);
}

#[test]
fn weightless_cloud_stays_put() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("zero.csv");
    let positions = vec![
        Vec3::new(0.1, 0.2, 0.3),
        Vec3::new(-0.5, 0.0, 1.0),
        Vec3::new(0.0, 0.7, -0.4),
    ];
    ParticleCloud::new(positions.clone(), vec![0.0; 3], "zero")
        .unwrap()
        .save(&path)
        .unwrap();
    let (code, out, _tmp, _) = run(
        "simulate",
        &json!({"initial_density": {"kind": "cloud-file", "path": path}, "t_final": 0.5, "dt": 0.05}),
    );
    assert_eq!(code, 0);
    let traj = FlowTrajectory::read_dir(out.join("trajectory")).unwrap();
    for snapshot in &traj.snapshots {
        assert_eq!(snapshot.positions(), positions.as_slice());
    }
}

#[test]
fn zero_offset_stability_passes() {
    let cfg = json!({
        "initial_density": {"kind": "smooth-bump", "radius": 1.0, "height": 1.0},
        "n_particles": 80, "t_final": 0.2, "dt": 0.02,
        "stability": {"offset": 0.0, "w1_stride": 5}
    });
    let (code, out, _tmp, output) = run("stability", &cfg);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&output.stdout));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["results"]["sup_q"], 0.0);
    assert!(fs::read_to_string(out.join("stability.csv"))
        .unwrap()
        .starts_with("# config_hash="));
}

#[test]
fn full_turn_is_exactly_equivariant() {
    let cfg = json!({
        "initial_density": {"kind": "annulus", "inner": 0.25, "outer": 1.0, "half_height": 0.5,
                            "n_radial": 2, "n_vertical": 2, "sectors": 8},
        "t_final": 0.2, "dt": 0.02,
        "symmetry": {"thetas": [std::f64::consts::TAU]}
    });
    let (code, out, _tmp, _) = run("symmetry", &cfg);
    assert_eq!(code, 0);
    let report = read_json(&out.join("report.json"));
    let err = report["results"]["rotation_equivariance"][0]["error"]
        .as_f64()
        .unwrap();
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn single_mollification_gives_empty_table() {
    let cfg =
        json!({"mollify": {"deltas": [0.2], "n_r": 4, "n_mu": 2, "n_phi": 2}, "t_final": 0.1});
    let (code, out, _tmp, _) = run("mollify-converge", &cfg);
    assert_eq!(code, 0);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["results"]["table"], json!([]));
    let csv = fs::read_to_string(out.join("mollify.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn asymmetric_cloud_is_flagged() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("lopsided.csv");
    let mut positions = Vec::new();
    for k in 0..8 {
        let a = k as f64 * std::f64::consts::TAU / 8.0;
        positions.push(Vec3::new(0.5 * a.cos(), 0.5 * a.sin(), 0.0));
    }
    positions.push(Vec3::new(0.8, 0.1, 0.2));
    ParticleCloud::new(positions, vec![0.1; 9], "lopsided")
        .unwrap()
        .save(&path)
        .unwrap();
    let cfg = json!({
        "initial_density": {"kind": "cloud-file", "path": path},
        "t_final": 0.5, "dt": 0.05, "symmetry": {"thetas": [1.0]}
    });
    let (code, out, _tmp, _) = run("symmetry", &cfg);
    assert_eq!(code, 1);
    let report = read_json(&out.join("report.json"));
    let axis = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "axis_invariance")
        .unwrap();
    assert_eq!(axis["passed"], false);
    assert_eq!(report["passed"], false);
}
