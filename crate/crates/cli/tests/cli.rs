use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const HEADER: &str = "quantity,coeffs,n,V,value,stderr,certified,mode,seconds";

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn load(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(bundled(name)).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, config: &Value) -> PathBuf {
    let p = dir.path().join("config.json");
    std::fs::write(&p, serde_json::to_string(config).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intricacy")).args(args).output().unwrap()
}

fn run_with(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

struct Row {
    quantity: String,
    coeffs: String,
    n: usize,
    v: Option<usize>,
    value: f64,
    certified: bool,
}

fn rows(csv: &Path) -> Vec<Row> {
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 9, "{l}");
            Row {
                quantity: f[0].into(),
                coeffs: f[1].into(),
                n: f[2].parse().unwrap(),
                v: f[3].parse().ok(),
                value: f[4].parse().unwrap(),
                certified: f[6] == "true",
            }
        })
        .collect()
}

#[test]
fn full_shift_compute_is_constant() {
    let out = TempDir::new().unwrap();
    let o = run_with("compute", &bundled("fullshift2.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rs = rows(&out.path().join("results.csv"));
    let asc: Vec<&Row> = rs.iter().filter(|r| r.quantity == "asc_top").collect();
    assert_eq!(asc.len(), 14);
    for r in asc {
        assert!((r.value - 2f64.ln() / 2.0).abs() <= 1e-12);
        assert!(r.certified);
    }
    for r in rs.iter().filter(|r| r.quantity == "int_top") {
        assert!(r.value.abs() <= 1e-12);
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "ok");
    assert!(out.path().join("run_config.json").exists());
}

#[test]
fn malformed_matrix_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let mut c = load("golden.json");
    c["system"]["transitions"] = json!([[1, 1], [1]]);
    let cfg = write_config(&dir, &c);
    let out = dir.path().join("out");
    let o = run_with("compute", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn validation_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run_with("compute", &bundled("golden.json"), &out, &["--mode", "mc", "--samples", "50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("samples"));
    std::fs::write(dir.path().join("broken.json"), "{\"system\": ").unwrap();
    let o = run_with("verify", &dir.path().join("broken.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn exact_limit_gives_partial_output() {
    let dir = TempDir::new().unwrap();
    let mut c = load("golden.json");
    c["n"] = json!({"from": 14, "to": 18});
    c["exact_limit"] = json!(16);
    c["coefficients"] = json!(["uniform"]);
    c["quantities"] = json!([{"name": "asc_top", "cover": "symbols"}]);
    let cfg = write_config(&dir, &c);
    let out = dir.path().join("out");
    let o = run_with("compute", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    let ns: Vec<usize> = rows(&out.join("results.csv")).iter().map(|r| r.n).collect();
    assert_eq!(ns, vec![14, 15, 16]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "budget_exhausted");
    assert!(report["errors"][0].as_str().unwrap().contains("exact-mode limit"));
}

#[test]
fn verify_bundles() {
    let dir = TempDir::new().unwrap();
    let o = run_with("verify", &bundled("verify_default.json"), &dir.path().join("a"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let mut c = load("verify_default.json");
    c["tolerance_scale"] = json!(0.0);
    let cfg = write_config(&dir, &c);
    let o = run_with("verify", &cfg, &dir.path().join("b"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b/verify_report.json")).unwrap()).unwrap();
    assert!(report["fail"].as_u64().unwrap() > 0);

    let o = run_with("verify", &bundled("verify_mc.json"), &dir.path().join("c"), &[]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/verify_report.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks
        .iter()
        .any(|c| c["status"] == "skipped" && c["name"].as_str().unwrap().ends_with("int_identity")));
    assert!(checks.iter().all(|c| c["status"] != "fail"));
}

#[test]
fn sweep_over_coefficient_systems() {
    let dir = TempDir::new().unwrap();
    let mut c = load("golden.json");
    c["quantities"] = json!([{"name": "asc_top", "cover": "symbols"}]);
    c["n"] = json!({"from": 1, "to": 8});
    let cfg = write_config(&dir, &c);
    let out = dir.path().join("out");
    let o = run_with("sweep", &cfg, &out, &["--param", "coefficients", "--values", "uniform,neural"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let uni = rows(&out.join("coefficients=uniform/results.csv"));
    let neu = rows(&out.join("coefficients=neural/results.csv"));
    assert_eq!(uni.iter().map(|r| r.n).collect::<Vec<_>>(), neu.iter().map(|r| r.n).collect::<Vec<_>>());
    assert!(uni.iter().all(|r| r.coeffs == "uniform") && neu.iter().all(|r| r.coeffs == "neural"));
    // n = 1 has only the empty and full subsets, where the weights agree
    assert!((uni[0].value - neu[0].value).abs() < 1e-15);
    assert!(uni.iter().zip(&neu).skip(1).all(|(a, b)| (a.value - b.value).abs() > 1e-6));
    assert_eq!(rows(&out.join("sweep.csv")).len(), 16);
}

#[test]
fn sweep_over_margins_is_nonincreasing() {
    let dir = TempDir::new().unwrap();
    let mut c = load("verify_default.json");
    c["quantities"] = json!([{"name": "n_conditional", "cover": "symbols"}]);
    c["coefficients"] = json!(["uniform"]);
    c["n"] = json!([5]);
    let cfg = write_config(&dir, &c);
    let out = dir.path().join("out");
    let o = run_with("sweep", &cfg, &out, &["--param", "V", "--values", "0,1,2,3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rs = rows(&out.join("sweep.csv"));
    assert_eq!(rs.iter().map(|r| r.v).collect::<Vec<_>>(), vec![Some(0), Some(1), Some(2), Some(3)]);
    assert!(rs.windows(2).all(|w| w[1].value <= w[0].value + 1e-12));
}

#[test]
fn sweep_over_n_is_nonincreasing_for_a_partition() {
    let dir = TempDir::new().unwrap();
    let mut c = load("golden.json");
    c["quantities"] = json!([{"name": "asc_mu", "cover": "symbols", "measure": "half"}]);
    c["coefficients"] = json!(["uniform"]);
    c["sweep"] = json!({"parameter": "n", "values": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]});
    let cfg = write_config(&dir, &c);
    let out = dir.path().join("out");
    let o = run_with("sweep", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rs = rows(&out.join("sweep.csv"));
    assert_eq!(rs.len(), 10);
    assert!(rs.windows(2).all(|w| w[1].value <= w[0].value + 1e-9));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let mut c = load("golden.json");
    c["n"] = json!({"from": 1, "to": 9});
    let cfg = write_config(&dir, &c);
    for mode in [vec![], vec!["--mode", "mc", "--samples", "400", "--seed", "11"]] {
        let mut outputs = Vec::new();
        for jobs in ["1", "2", "2"] {
            let out = dir.path().join(format!("out{}", outputs.len()));
            let mut extra = mode.clone();
            extra.extend_from_slice(&["--jobs", jobs]);
            let o = run_with("compute", &cfg, &out, &extra);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            outputs.push((
                std::fs::read(out.join("results.csv")).unwrap(),
                std::fs::read(out.join("report.json")).unwrap(),
            ));
            std::fs::remove_dir_all(&out).unwrap();
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn bits_rescales_values() {
    let dir = TempDir::new().unwrap();
    let nats = dir.path().join("nats");
    let bits = dir.path().join("bits");
    assert_eq!(run_with("compute", &bundled("fullshift2.json"), &nats, &[]).status.code(), Some(0));
    assert_eq!(run_with("compute", &bundled("fullshift2.json"), &bits, &["--bits"]).status.code(), Some(0));
    for (a, b) in rows(&nats.join("results.csv")).iter().zip(rows(&bits.join("results.csv")).iter()) {
        assert!((a.value - b.value * 2f64.ln()).abs() < 1e-15);
    }
    let asc = rows(&bits.join("results.csv"));
    assert!((asc[0].value - 0.5).abs() < 1e-15);
}
