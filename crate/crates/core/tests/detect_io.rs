// SPDX-License-Identifier: MIT OR Apache-2.0
use std::process::Command;
use std::sync::OnceLock;

use intsamp::io::{self, SequenceFile};
use intsamp::pipeline::{self, PipelineConfig};
use intsamp::rwdist::{self, LDistTable, NoiseSpec};
use intsamp::synth::{self, NoiseModel};
use serde_json::Value;

fn table() -> &'static LDistTable {
    static T: OnceLock<LDistTable> = OnceLock::new();
    T.get_or_init(|| {
        let grid = rwdist::snr_grid(0.5, 5.0, 0.1).unwrap();
        LDistTable::build(&grid, &[], 100_000, 2, &NoiseSpec::iid(), 1e-6).unwrap()
    })
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_intsamp"))
}

#[test]
fn file_and_memory_agree() {
    let truth = synth::gen_config(300_000, 6, 1.5, 20_000, 3).unwrap();
    let y = synth::gen_series(&truth, NoiseModel::Iid, 1.0, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("y.bin");
    let csv = dir.path().join("y.csv");
    io::write_raw(&raw, y.values()).unwrap();
    io::write_csv(&csv, y.values()).unwrap();
    let cfg = PipelineConfig { seed: 5, ..PipelineConfig::default() };
    let mem = pipeline::detect(&y, &cfg, table()).unwrap();
    for path in [&raw, &csv] {
        let f = SequenceFile::open(path).unwrap();
        let rep = pipeline::detect(&f, &cfg, table()).unwrap();
        assert_eq!(rep, mem, "{}", path.display());
    }
    assert_eq!(mem.j_hat, 6);
}

#[test]
fn stage_one_reads_a_small_fraction() {
    let n = 10_000_000;
    let truth = synth::even_config(n, 3, 2.0).unwrap();
    let y = synth::gen_series(&truth, NoiseModel::Iid, 1.0, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("big.bin");
    io::write_raw(&raw, y.values()).unwrap();
    drop(y);
    let f = SequenceFile::open(&raw).unwrap();
    let cfg = PipelineConfig { n1: Some(10_000), ..PipelineConfig::default() };
    let s1 = pipeline::stage1(&f, &cfg).unwrap();
    assert_eq!(s1.taus.len(), 3);
    let frac = f.bytes_read() as f64 / (8 * n) as f64;
    assert!(frac <= 0.02, "stage 1 read {frac}");
    f.reset_counters();
    let rep = pipeline::detect(&f, &cfg, table()).unwrap();
    assert_eq!(rep.j_hat, 3);
    assert!(f.bytes_read() as f64 / ((8 * n) as f64) < 0.05);
}

fn check(schema: &Value, v: &Value, path: &str, errs: &mut Vec<String>) {
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let ok = types.iter().any(|t| match *t {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "integer" => v.is_u64() || v.is_i64(),
            "number" => v.is_number(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            _ => false,
        });
        if !ok {
            errs.push(format!("{path}: expected {types:?}, got {v}"));
            return;
        }
    }
    if let (Some(x), Some(min)) = (v.as_f64(), schema.get("minimum").and_then(Value::as_f64)) {
        if x < min {
            errs.push(format!("{path}: {x} < {min}"));
        }
    }
    if let (Some(x), Some(max)) = (v.as_f64(), schema.get("maximum").and_then(Value::as_f64)) {
        if x > max {
            errs.push(format!("{path}: {x} > {max}"));
        }
    }
    if let Some(obj) = v.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        for r in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let r = r.as_str().unwrap();
            if !obj.contains_key(r) {
                errs.push(format!("{path}: missing {r}"));
            }
        }
        for (k, child) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(s) => check(s, child, &format!("{path}.{k}"), errs),
                None => match schema.get("additionalProperties") {
                    Some(Value::Bool(false)) => errs.push(format!("{path}: unexpected {k}")),
                    Some(s @ Value::Object(_)) => check(s, child, &format!("{path}.{k}"), errs),
                    _ => {}
                },
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            check(items, child, &format!("{path}[{i}]"), errs);
        }
    }
}

#[test]
fn report_matches_schema() {
    let schema: Value = serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let truth = synth::even_config(200_000, 4, 1.5).unwrap();
    let y = synth::gen_series(&truth, NoiseModel::Iid, 2.0, 8).unwrap();
    for timings in [false, true] {
        let cfg = PipelineConfig { timings, ..PipelineConfig::default() };
        let rep = pipeline::detect(&y, &cfg, table()).unwrap();
        let v: Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        let mut errs = Vec::new();
        check(&schema, &v, "$", &mut errs);
        assert!(errs.is_empty(), "{errs:#?}");
        assert_eq!(v.get("timings_ms").is_some(), timings);
        for e in &rep.estimates {
            assert!(e.ci_lo <= e.tau && e.tau <= e.ci_hi);
        }
        assert!(rep.estimates.windows(2).all(|w| w[0].tau < w[1].tau));
    }
}

#[test]
fn constant_data_warns_instead_of_failing() {
    let y = intsamp::model::Series::new(vec![2.5; 50_000]).unwrap();
    let rep = pipeline::detect(&y, &PipelineConfig::default(), table()).unwrap();
    assert_eq!(rep.j_hat, 0);
    assert!(!rep.warnings.is_empty());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s);
    let status = |args: &[&str]| bin().args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["--help"]), 0);
    assert_eq!(status(&["frobnicate"]), 2);
    assert_eq!(status(&["plan", "--n", "1000"]), 2);
    assert_eq!(status(&["plan", "--n", "1000000", "--j", "4", "--snr", "-1"]), 2);
    assert_eq!(status(&["detect", "--in", p("missing.bin").to_str().unwrap(), "--report", p("r.json").to_str().unwrap()]), 1);
    std::fs::write(p("bad.bin"), [0u8; 13]).unwrap();
    assert_eq!(
        status(&[
            "detect",
            "--in",
            p("bad.bin").to_str().unwrap(),
            "--report",
            p("r.json").to_str().unwrap(),
            "--cache-dir",
            p("c").to_str().unwrap()
        ]),
        1
    );
    assert_eq!(
        status(&[
            "simulate",
            "--n",
            "5000",
            "--j",
            "2",
            "--snr",
            "2",
            "--out",
            p("s.csv").to_str().unwrap(),
            "--truth",
            p("t.json").to_str().unwrap()
        ]),
        0
    );
    let text = std::fs::read_to_string(p("s.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.parse::<f64>().is_ok()).count(), 5000);
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(p("t.json")).unwrap()).unwrap();
    assert_eq!(truth["config"]["taus"], serde_json::json!([1666, 3333]));
}

#[test]
fn cli_detect_recovers_simulated_truth() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let ok = |args: &[&str]| assert!(bin().args(args).status().unwrap().success(), "{args:?}");
    ok(&[
        "simulate",
        "--n",
        "400000",
        "--j",
        "5",
        "--snr",
        "2",
        "--layout",
        "random",
        "--seed",
        "4",
        "--out",
        &p("y.bin"),
        "--truth",
        &p("t.json"),
    ]);
    ok(&["quantiles", "--snr-grid", "0.5:5:0.5", "--reps", "100000", "--out", &p("q.tsv")]);
    ok(&["detect", "--in", &p("y.bin"), "--table", &p("q.tsv"), "--report", &p("r.json")]);
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(p("t.json")).unwrap()).unwrap();
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(p("r.json")).unwrap()).unwrap();
    let taus: Vec<u64> = truth["config"]["taus"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let est = rep["estimates"].as_array().unwrap();
    assert_eq!(est.len(), taus.len());
    for (e, t) in est.iter().zip(&taus) {
        assert!(e["tau"].as_u64().unwrap().abs_diff(*t) <= 20, "{e} vs {t}");
    }
    let plan = bin().args(["plan", "--n", "10000000", "--j", "10", "--snr", "1.5"]).output().unwrap();
    let plan: Value = serde_json::from_slice(&plan.stdout).unwrap();
    assert!(plan["predicted_total"].as_f64().unwrap() < 1e7);
}
