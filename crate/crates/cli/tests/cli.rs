use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rankcorr"));
    c.env_remove("RANKCORR_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small clustered data set: 30 clusters of 3..6 rows, numeric x and y plus
/// an ordinal grade. Values are distinct so the model fits cleanly.
fn write_data(dir: &Path) -> PathBuf {
    let mut s: u64 = 17;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64) / ((1u64 << 53) as f64)
    };
    let mut text = String::from("id,a,b,grade\n");
    for i in 0..30 {
        let u = next() * 2.0;
        let k = 3 + (i % 4);
        for j in 0..k {
            let e = next() - 0.5;
            let x = u + e + j as f64 * 1e-3;
            let y = (0.5 * u + 0.7 * e + 0.4 * next()).exp();
            let g = ["low", "mid", "high"][((x / 1.2) as usize).min(2)];
            text.push_str(&format!("c{i},{x:.6},{y:.6},{g}\n"));
        }
    }
    let path = dir.join("data.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    jsonschema::validator_for(&read_json(&path)).expect("valid schema")
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

fn estimate_args<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "estimate", "--input", data, "--cluster", "id", "--x", "a", "--y", "b", "--out", out, "--boot-reps", "50",
    ]
}

#[test]
fn estimate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("out");
    let o = run(&estimate_args(data.to_str().unwrap(), out.to_str().unwrap()));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);

    let est = read_json(&out.join("estimates.json"));
    assert_valid(&schema("estimates.schema.json"), &est);
    assert_valid(&schema("manifest.schema.json"), &read_json(&out.join("manifest.json")));
    let rows = est["estimates"].as_array().unwrap();
    let keys: Vec<&str> = rows.iter().map(|r| r["estimator"].as_str().unwrap()).collect();
    for k in ["gamma_t", "gamma_w", "gamma_b_median", "gamma_b_approx", "rank_icc_x", "d_hat_y"] {
        assert!(keys.contains(&k), "missing {k}");
    }
    let gw = rows.iter().find(|r| r["estimator"] == "gamma_w").unwrap();
    assert_eq!(gw["method"], "sandwich");
    assert!(gw["ci_lo"].as_f64().unwrap() < gw["value"].as_f64().unwrap());

    let csv = std::fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "estimator,value,se,ci_lo,ci_hi,method");
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

#[test]
fn estimate_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let d = data.to_str().unwrap();
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    let mut a = estimate_args(d, o1.to_str().unwrap());
    a.extend(["--seed", "9", "--threads", "1"]);
    assert_eq!(code(&run(&a)), 0);
    let mut b = estimate_args(d, o2.to_str().unwrap());
    b.extend(["--seed", "9", "--threads", "3"]);
    assert_eq!(code(&run(&b)), 0);
    let read = |p: &Path| std::fs::read(p.join("estimates.json")).unwrap();
    assert_eq!(read(&o1), read(&o2));

    let strip = |p: &Path| {
        let mut m = read_json(&p.join("manifest.json"));
        m.as_object_mut().unwrap().remove("timings");
        m["options"].as_object_mut().unwrap().remove("out");
        m
    };
    assert_eq!(strip(&o1), strip(&o2));
}

#[test]
fn ordinal_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "estimate", "--input", data.to_str().unwrap(), "--cluster", "id", "--x", "grade", "--x-levels",
        "low,mid,high", "--y", "b", "--ci", "none", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let est = read_json(&out.join("estimates.json"));
    assert_eq!(est["data"]["x_kind"], "ordinal");
    assert!(est["failures"].as_array().unwrap().iter().any(|f| f["estimator"] == "naive_within"));
}

#[test]
fn levels_on_numeric_column_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("out");
    let mut a = estimate_args(data.to_str().unwrap(), out.to_str().unwrap());
    a.extend(["--x-levels", "low,mid,high"]);
    let o = run(&a);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("looks numeric"), "{}", stderr(&o));
}

#[test]
fn strict_analytic_with_observation_weights_names_the_bootstrap() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let out = dir.path().join("out");
    let mut a = estimate_args(data.to_str().unwrap(), out.to_str().unwrap());
    a.extend(["--weights", "obs", "--ci", "analytic"]);
    let o = run(&a);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--ci bootstrap"));
    assert!(!out.exists());
}

#[test]
fn usage_and_data_errors() {
    assert_eq!(code(&run(&["estimate", "--bogus"])), 1);
    assert_eq!(code(&run(&["estimate", "--x", "a"])), 1);
    assert_eq!(code(&run(&["--version"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("out");
    assert_eq!(code(&run(&estimate_args(missing.to_str().unwrap(), out.to_str().unwrap()))), 2);
    let data = write_data(dir.path());
    let o = run(&[
        "estimate", "--input", data.to_str().unwrap(), "--cluster", "id", "--x", "zz", "--y", "b", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("zz"));
}

#[test]
fn separation_exits_numerical_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    // Cluster s sits entirely below every other value.
    let mut text = String::from("id,a,b\n");
    for i in 0..8 {
        for j in 0..3 {
            let v = 10.0 + (i * 3 + j) as f64 + 0.1 * ((i * 7 + j * 3) % 5) as f64;
            text.push_str(&format!("c{i},{v},{}\n", v * 0.5 + ((j * 5 + i) % 4) as f64));
        }
    }
    text.push_str("s,0.1,0.2\ns,0.2,0.1\n");
    let data = dir.path().join("sep.csv");
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "estimate", "--input", data.to_str().unwrap(), "--cluster", "id", "--x", "a", "--y", "b", "--ci", "none",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(out.join("estimates.json").exists());
    assert!(o.stdout.is_empty());
}

#[test]
fn simulate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = run(&[
        "simulate", "--scenario", "I", "--n", "20", "--k", "1:6", "--reps", "4", "--ci", "analytic", "--seed", "5",
        "--mc-size", "100000", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let header = std::fs::read_to_string(out.join("study.csv")).unwrap();
    let header = header.lines().next().unwrap();
    for col in ["bias", "coverage", "emp_se", "mdn_se"] {
        assert!(header.split(',').any(|c| c == col), "{header}");
    }
    let study = read_json(&out.join("study.json"));
    assert_valid(&schema("study.schema.json"), &study);
    assert_eq!(study["config"]["cluster_size"], "1:6");
    let m = read_json(&out.join("manifest.json"));
    assert_valid(&schema("manifest.schema.json"), &m);
    assert_eq!(m["seed"], 5);
}

#[test]
fn simulate_rejects_bad_designs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let out = out.to_str().unwrap();
    let o = run(&["simulate", "--reps", "0", "--out", out]);
    assert_eq!(code(&o), 1);
    let o = run(&["simulate", "--scenario", "negpairs", "--k", "3", "--reps", "2", "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("2"));
    assert_eq!(code(&run(&["simulate", "--scenario", "IV", "--out", out])), 1);
    assert_eq!(code(&run(&["simulate", "--rho-b", "1.5", "--reps", "2", "--out", out])), 1);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let cfg = dir.path().join("study.toml");
    std::fs::write(
        &cfg,
        format!(
            "scenario = \"negpairs\"\nrho-b = 0.8\nrho-w = -0.7\nn = 20\nreps = 9\nci = \"analytic\"\nmc-size = 100000\nout = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--reps", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let study = read_json(&out.join("study.json"));
    assert_eq!(study["reps"], 3);
    assert_eq!(study["config"]["scenario"], "negpairs");
    assert_eq!(study["config"]["cluster_size"], "2");

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap()])), 1);
}
