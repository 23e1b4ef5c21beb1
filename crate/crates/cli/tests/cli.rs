use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rmp_core::io::read_instance;
use rmp_core::{max_product_map, nominal_instance, Instance, Marginals};

fn rmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let mut args = vec!["gen", "--out", s(dir)];
    args.extend_from_slice(extra);
    let o = rmp(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("instance.json")
}

#[test]
fn gen_writes_instance_and_metadata() {
    let t = tempfile::tempdir().unwrap();
    let path = gen(t.path(), &["--n", "93", "--delta", "1", "--h", "0", "--seed", "7"]);
    let g: Instance = read_instance(&path).unwrap();
    assert_eq!(g.num_variables(), 93);
    assert_eq!(g.num_factors(), 92 + 93);
    assert!(g.is_tree());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("instance.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["spec"]["seed"], 7);
    assert_eq!(meta["edges"].as_array().unwrap().len(), 92);
}

#[test]
fn usage_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&rmp(&["gen", "--n", "1", "--out", s(t.path())])), 2);
    assert_eq!(code(&rmp(&["gen", "--n", "banana"])), 2);
    assert_eq!(code(&rmp(&["frobnicate"])), 2);
    let missing = t.path().join("missing.json");
    assert_eq!(code(&rmp(&["solve", "--instance", s(&missing), "--out", s(t.path())])), 2);
    let junk = t.path().join("junk.json");
    fs::write(&junk, "{\"alphabet\": [1.0]}").unwrap();
    assert_eq!(code(&rmp(&["solve", "--instance", s(&junk), "--out", s(t.path())])), 2);
    let inst = gen(&t.path().join("g"), &["--n", "4"]);
    assert_eq!(code(&rmp(&["solve", "--instance", s(&inst), "--rho", "-1", "--out", s(t.path())])), 2);
    assert_eq!(
        code(&rmp(&["experiment2", "--n", "4", "--alpha-grid", "0.5,0.2", "--out", s(t.path())])),
        2
    );
}

#[test]
fn solve_two_node_nominal_matches_map() {
    let t = tempfile::tempdir().unwrap();
    let inst = gen(t.path(), &["--n", "2", "--delta", "0", "--h", "0.5", "--seed", "3"]);
    let o = rmp(&["solve", "--instance", s(&inst), "--max-iter", "1000", "--out", s(t.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let g: Instance = read_instance(&inst).unwrap();
    let map = max_product_map(&nominal_instance(&g).unwrap()).unwrap();
    let m: Marginals = serde_json::from_str(&fs::read_to_string(t.path().join("marginals.json")).unwrap()).unwrap();
    let j = rmp_core::admm::engineer_objective(&g, &m.factors);
    assert!((j - map.value).abs() < 1e-4, "{j} vs {}", map.value);
    let trace = fs::read_to_string(t.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,C,J,residual\n"));
}

#[test]
fn iteration_cap_exits_3() {
    let t = tempfile::tempdir().unwrap();
    let inst = gen(t.path(), &["--n", "20", "--delta", "1", "--h", "1", "--seed", "1"]);
    let o = rmp(&["solve", "--instance", s(&inst), "--max-iter", "1", "--out", s(t.path())]);
    assert_eq!(code(&o), 3);
    let trace = fs::read_to_string(t.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn hundred_iteration_trace() {
    let t = tempfile::tempdir().unwrap();
    let inst = gen(t.path(), &["--n", "93", "--delta", "1", "--seed", "7"]);
    let o = rmp(&["convergence", "--instance", s(&inst), "--max-iter", "100", "--out", s(t.path())]);
    assert!(matches!(code(&o), 0 | 3));
    let trace = fs::read_to_string(t.path().join("convergence.csv")).unwrap();
    assert_eq!(trace.lines().count(), 101);
    assert!(t.path().join("plot_convergence.py").exists());
}

#[test]
fn timing_column_is_opt_in() {
    let t = tempfile::tempdir().unwrap();
    let inst = gen(t.path(), &["--n", "3"]);
    rmp(&["solve", "--instance", s(&inst), "--timing", "--out", s(t.path())]);
    let trace = fs::read_to_string(t.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,C,J,residual,wall_ms\n"));
}

#[test]
fn config_file_with_flag_override() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.json");
    fs::write(&cfg, r#"{"n": 5, "seed": 9, "h": 0.25}"#).unwrap();
    let o = rmp(&["gen", "--config", s(&cfg), "--n", "6", "--out", s(t.path())]);
    assert_eq!(code(&o), 0);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("instance.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["spec"]["n"], 6);
    assert_eq!(meta["spec"]["seed"], 9);
    assert_eq!(meta["spec"]["h"], 0.25);
    fs::write(&cfg, r#"{"nodes": 5}"#).unwrap();
    assert_eq!(code(&rmp(&["gen", "--config", s(&cfg)])), 2);
}

#[test]
fn small_experiments_and_oracle() {
    let t = tempfile::tempdir().unwrap();
    let d = s(t.path());
    let o = rmp(&["experiment1", "--n", "8", "--h", "0.5", "--seed", "2", "--delta-grid", "0,0.5,1", "--out", d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(t.path().join("experiment1.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let (robust, nominal, oracle): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[5].parse().unwrap());
        assert!(robust >= nominal - 1e-6);
        assert!((robust - oracle).abs() <= 1e-3);
        assert_eq!(r[7], "ok");
    }
    let first: Vec<f64> = rows[0][1..3].iter().map(|v| v.parse().unwrap()).collect();
    assert!((first[0] - first[1]).abs() <= 1e-4);

    let o = rmp(&["experiment2", "--n", "8", "--h", "0.5", "--seed", "2", "--alpha-grid", "0,0.5,1", "--samples", "5", "--out", d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let samples = fs::read_to_string(t.path().join("experiment2_samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 3 * 2 * 5);

    let inst = gen(&t.path().join("g"), &["--n", "4", "--delta", "0.5"]);
    let o = rmp(&["oracle", "--instance", s(&inst), "--out", d]);
    assert_eq!(code(&o), 0);
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("oracle.json")).unwrap()).unwrap();
    let (a, b) = (rec["loc_lp"]["value"].as_f64().unwrap(), rec["exact_minimax_joint"]["value"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
}
