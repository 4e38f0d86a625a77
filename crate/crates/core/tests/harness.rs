use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use hologlab::harness::{
    fit_scaling_with, run_experiment, Experiment, FitModel, SweepConfig, ECHO_COLUMNS, FLUX_COLUMNS,
};
use hologlab::par::Exec;
use hologlab::Error;

const FLUX: &str = r#"
experiment = "flux_sweep"
seed = 5
[field]
kind = "lacunary"
alpha = 0.4
lambda = 0.0
levels = 5
[modulus]
kind = "holog"
alpha = 0.4
lambda = 0.0
s_max = 0.8
[grid]
n = 128
[sweep]
eps = [0.8, 0.4, 0.2]
"#;

const LEMMA: &str = r#"
experiment = "lemma_sweep"
seed = 0
[field]
kind = "near_extremal"
[modulus]
kind = "holog"
alpha = 0.3333333333333333
lambda = 1.0
[sweep]
h_dyadic = { start = 0.0625, count = 4 }
[lemma]
nodes_across = 64
n_theta = 256
sample_n = 128
"#;

const JSWEEP: &str = r#"
experiment = "j_sweep"
seed = 7
[field]
kind = "lacunary_disk"
alpha = 0.3333333333333333
lambda = 1.0
levels = 4
[modulus]
kind = "holog"
alpha = 0.3333333333333333
lambda = 1.0
[sweep]
h = [0.05]
[jsweep]
sample_n = 256
"#;

const EULER: &str = r#"
experiment = "euler_identity"
seed = 2
[euler]
n = 32
decay_rate = 3.0
u_max = 1.0
t_final = 0.02
dt = [0.002, 0.001]
kernel_floor = 1.0
[sweep]
eps = [0.5]
[checks]
euler_min_shrink = 1.0
"#;

const SEMINORM: &str = r#"
experiment = "seminorm_report"
seed = 1
[field]
kind = "smooth"
decay_rate = 2.5
kmax = 8
[modulus]
kind = "holder"
alpha = 0.5
[grid]
n = 64
sizes = [32, 64]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hologlab"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_epsilon_list_is_rejected() {
    let mut cfg = SweepConfig::from_toml(FLUX).unwrap();
    cfg.sweep.eps.clear();
    match cfg.validate() {
        Err(Error::Validation(v)) => assert!(v.iter().any(|m| m.contains("non-empty")), "{v:?}"),
        other => panic!("{other:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    assert!(run_experiment(&cfg, dir.path(), Exec::Sequential).is_err());
    assert!(!dir.path().join("flux_sweep.csv").exists());
}

#[test]
fn six_dyadic_scales_give_six_rows() {
    let text = FLUX
        .replace("n = 128", "n = 1024")
        .replace("eps = [0.8, 0.4, 0.2]", "eps_dyadic = { start = 0.8, count = 6 }");
    let cfg = SweepConfig::from_toml(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), Exec::default()).unwrap();
    let mut rdr = csv::Reader::from_path(&out.csv_path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    for col in FLUX_COLUMNS.iter().chain(ECHO_COLUMNS.iter()) {
        assert!(header.iter().any(|h| h == col), "missing column {col}");
    }
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let eps: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(eps, vec![0.8, 0.4, 0.2, 0.1, 0.05, 0.025]);
    assert!(out.summary.passed, "{:?}", out.summary.violations);
}

fn run_bytes(text: &str, exec: Exec) -> Vec<u8> {
    let cfg = SweepConfig::from_toml(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), exec).unwrap();
    std::fs::read(out.csv_path).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    for text in [FLUX, LEMMA, JSWEEP, EULER, SEMINORM] {
        let a = run_bytes(text, Exec::Sequential);
        assert_eq!(a, run_bytes(text, Exec::Sequential));
        #[cfg(feature = "parallel")]
        assert_eq!(a, run_bytes(text, Exec::Parallel), "sequential and parallel differ");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flux.toml", FLUX);
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let st = bin()
            .args([
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
                "flux-sweep",
            ])
            .status()
            .unwrap();
        assert!(st.success());
        outs.push(std::fs::read(out.join("flux_sweep.csv")).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn fit_recovers_exact_models() {
    let s: Vec<f64> = (0..8).map(|k| 0.5f64.powi(k + 1)).collect();
    let quad: Vec<(f64, f64)> = s.iter().map(|&x| (x, 7.0 * x * x)).collect();
    let f = fit_scaling_with(&quad, FitModel::PowerLog).unwrap();
    assert!((f.p - 2.0).abs() < 1e-10 && f.q.abs() < 1e-10, "{f:?}");
    assert!((f.c - 7f64.ln()).abs() < 1e-10);
    let crit: Vec<(f64, f64)> = s.iter().map(|&x| (x, (1.0 / x).ln().powi(-3))).collect();
    let f = fit_scaling_with(&crit, FitModel::PowerLog).unwrap();
    assert!(f.p.abs() < 1e-10 && (f.q + 3.0).abs() < 1e-10, "{f:?}");
    let f = fit_scaling_with(&quad, FitModel::Power).unwrap();
    assert!((f.p - 2.0).abs() < 1e-10 && f.q == 0.0);
}

#[test]
fn fit_subcommand_reads_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("s,v\n");
    for k in 1..=6 {
        let s = 0.5f64.powi(k);
        text.push_str(&format!("{s:?},{:?}\n", 3.0 * s.powf(0.25)));
    }
    let csv = write(dir.path(), "pts.csv", &text);
    let out = bin()
        .args([
            "fit",
            "--csv",
            csv.to_str().unwrap(),
            "--x",
            "s",
            "--y",
            "v",
            "--model",
            "power",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["p"].as_f64().unwrap() - 0.25).abs() < 1e-10);
}

/// Checks `value` against the subset of JSON Schema used in `docs/`.
fn conforms(value: &Value, schema: &Value, root: &Value, path: &str) -> Result<(), String> {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let name = r
            .strip_prefix("#/$defs/")
            .ok_or(format!("{path}: unsupported ref {r}"))?;
        return conforms(value, &root["$defs"][name], root, path);
    }
    if let Some(c) = schema.get("const") {
        if value != c {
            return Err(format!("{path}: expected {c}"));
        }
    }
    if let Some(e) = schema.get("enum").and_then(Value::as_array) {
        if !e.contains(value) {
            return Err(format!("{path}: {value} not in enum"));
        }
    }
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let ok = types.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            "integer" => value.is_u64() || value.is_i64(),
            "number" => value.is_number(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: {value} is not {types:?}"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), value.as_f64()) {
        if x < min {
            return Err(format!("{path}: {x} < {min}"));
        }
    }
    if let Some(obj) = value.as_object() {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing {key}"));
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, v) in obj {
            let sub = props.and_then(|p| p.get(k));
            match (sub, schema.get("additionalProperties")) {
                (Some(s), _) => conforms(v, s, root, &format!("{path}.{k}"))?,
                (None, Some(Value::Bool(false))) => return Err(format!("{path}: unexpected key {k}")),
                (None, Some(s)) if s.is_object() => conforms(v, s, root, &format!("{path}.{k}"))?,
                _ => {}
            }
        }
    }
    if let (Some(arr), Some(items)) = (value.as_array(), schema.get("items")) {
        for (i, v) in arr.iter().enumerate() {
            conforms(v, items, root, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn docs(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(name);
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn report_cmd(out: &Path, summaries: &[&Path]) -> std::process::Output {
    let mut c = bin();
    c.args(["--out", out.to_str().unwrap(), "report"]);
    c.args(summaries);
    c.output().unwrap()
}

#[test]
fn report_exit_codes_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let mut summaries = Vec::new();
    for (text, e) in [
        (FLUX, Experiment::FluxSweep),
        (LEMMA, Experiment::LemmaSweep),
        (SEMINORM, Experiment::SeminormReport),
    ] {
        let cfg = SweepConfig::from_toml(text).unwrap();
        assert_eq!(cfg.experiment, e);
        let out = run_experiment(&cfg, &runs, Exec::default()).unwrap();
        assert!(out.summary.passed, "{:?}", out.summary.violations);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&out.summary_path).unwrap()).unwrap();
        let schema = docs("summary.schema.json");
        conforms(&v, &schema, &schema, "$").unwrap();
        summaries.push(out.summary_path);
    }
    let paths: Vec<&Path> = summaries.iter().map(PathBuf::as_path).collect();

    let merged = dir.path().join("merged");
    let out = report_cmd(&merged, &paths);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(merged.join("report.json")).unwrap()).unwrap();
    let schema = docs("report.schema.json");
    conforms(&report, &schema, &schema, "$").unwrap();
    assert_eq!(report["experiments"].as_array().unwrap().len(), 3);

    // inflate one flux value past its bound; the report re-audits the CSV
    let csv = runs.join("flux_sweep.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    cells[1] = "1e300".into();
    lines[1] = cells.join(",");
    std::fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let out = report_cmd(&merged, &paths);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(merged.join("report.json")).unwrap()).unwrap();
    conforms(&report, &schema, &schema, "$").unwrap();
    assert_eq!(report["passed"], Value::Bool(false));
    assert!(report["violation_count"].as_u64().unwrap() >= 1);

    let missing = dir.path().join("nope.summary.json");
    let out = report_cmd(&merged, &[paths[0], missing.as_path()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.summary.json"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        &FLUX.replace("eps = [0.8, 0.4, 0.2]", "eps = [0.01]"),
    );
    let out = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "flux-sweep",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let cfg = write(dir.path(), "typo.toml", &format!("{FLUX}\nunknown_key = 1\n"));
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "flux-sweep"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_override_changes_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flux.toml", FLUX);
    let mut outs = Vec::new();
    for seed in ["5", "6"] {
        let out = dir.path().join(seed);
        let st = bin()
            .args([
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                seed,
                "flux-sweep",
            ])
            .status()
            .unwrap();
        assert!(st.success());
        outs.push(std::fs::read_to_string(out.join("flux_sweep.csv")).unwrap());
    }
    assert_ne!(outs[0], outs[1]);
    assert!(outs[1].lines().nth(1).unwrap().contains(",6,lacunary,"));
}

#[test]
fn field_roundtrip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flux.toml", FLUX);
    let field = dir.path().join("u.field");
    let st = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "gen-field",
            "--output",
            field.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(st.success());
    let out = bin()
        .args([
            "seminorm",
            "--field",
            field.to_str().unwrap(),
            "--alpha",
            "0.4",
            "--s-max",
            "0.8",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cfg = SweepConfig::from_toml(FLUX).unwrap();
    let u = hologlab::harness::periodic_field(&cfg, 128).unwrap();
    let direct = hologlab::modulus::holog_seminorm(&u, &cfg.modulus().unwrap()).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), direct.value);
}

#[test]
fn euler_run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "euler.toml", EULER);
    let out = dir.path().join("o");
    let st = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "euler-run",
        ])
        .status()
        .unwrap();
    assert!(st.success());
    let traj = out.join("trajectory");
    let res = bin()
        .args(["euler-verify", "--trajectory", traj.to_str().unwrap(), "--eps", "0.5"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(v["residual"].as_f64().unwrap() <= 1e-4 * v["energy0"].as_f64().unwrap());
}
