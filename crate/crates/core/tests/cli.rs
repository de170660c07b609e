//! Black-box tests of the `snpalq` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::{array, Array2};
use snpalq::data_io::{load_matrix_csv, save_matrix_csv};
use snpalq::lq_model::{expand_lq, EndmemberSet};
use snpalq::simplex_solver::solve_nnls_delta_oracle;

fn snpalq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snpalq")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(dir: &Path, name: &str, value: serde_json::Value) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, value.to_string()).unwrap();
    p
}

#[test]
fn generate_defaults_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scene");
    let o = snpalq(&["generate", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let x = load_matrix_csv(out.join("X.csv")).unwrap();
    let h = load_matrix_csv(out.join("H.csv")).unwrap();
    let w = load_matrix_csv(out.join("W.csv")).unwrap();
    assert_eq!(x.dim(), (20, 1000));
    assert_eq!(w.dim(), (20, 5));
    assert_eq!(h.dim(), (15, 1000));
    assert!(out.join("meta.json").is_file());
}

#[test]
fn generate_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = snpalq(&["generate", "--seed", "7", "--out", path(d)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["X.csv", "W.csv", "H.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn generate_rejects_fewer_pixels_than_endmembers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", serde_json::json!({"generator": {"r": 5, "n": 3}}));
    let o = snpalq(&["generate", "--config", path(&cfg), "--out", path(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("generator.n"), "{}", stderr(&o));
}

#[test]
fn unmix_recovers_pure_pixels_from_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let cfg = write_json(dir.path(), "c.json", serde_json::json!({"generator": {"r": 4, "n": 200, "seed": 3}}));
    let o = snpalq(&["generate", "--config", path(&cfg), "--out", path(&scene)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let res = dir.path().join("res");
    let o = snpalq(&["unmix", path(&scene), "--r", "4", "--out", path(&res), "--abundances"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(scene.join("meta.json")).unwrap()).unwrap();
    let mut pure: Vec<u64> = meta["pure_pixel_indices"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let mut k: Vec<u64> = fs::read_to_string(res.join("K.csv")).unwrap().lines().map(|l| l.trim().parse().unwrap()).collect();
    pure.sort_unstable();
    k.sort_unstable();
    assert_eq!(k, pure);
    assert_eq!(load_matrix_csv(res.join("W_hat.csv")).unwrap().dim(), (20, 4));
    assert_eq!(load_matrix_csv(res.join("H_hat.csv")).unwrap().dim(), (10, 200));
    assert!(res.join("report.json").is_file());
}

#[test]
fn spa_and_snpa_agree_on_first_pick() {
    let dir = tempfile::tempdir().unwrap();
    let x = array![[1.0, 0.2, 3.0, 0.5], [0.0, 0.9, 1.0, 0.5], [0.3, 0.1, 0.2, 2.0]];
    let input = dir.path().join("x.csv");
    save_matrix_csv(&x, &input).unwrap();
    let mut picks = Vec::new();
    for alg in ["spa", "snpa"] {
        let out = dir.path().join(alg);
        let o = snpalq(&["unmix", path(&input), "--r", "1", "--algorithm", alg, "--out", path(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        picks.push(fs::read_to_string(out.join("K.csv")).unwrap());
    }
    assert_eq!(picks[0], picks[1]);
    assert_eq!(picks[0].trim(), "3");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = snpalq(&["unmix", path(&dir.path().join("nope.csv")), "--r", "2", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let o = snpalq(&["validate", path(&dir.path().join("nope.csv"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_algorithm_and_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    save_matrix_csv(&Array2::eye(3), &input).unwrap();
    assert_eq!(snpalq(&["unmix", path(&input), "--algorithm", "vca"]).status.code(), Some(2));
    assert_eq!(snpalq(&["unmix", path(&input), "--bogus"]).status.code(), Some(2));
}

#[test]
fn validate_reports_one_based_violators() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    save_matrix_csv(&Array2::eye(3), &good).unwrap();
    let o = snpalq(&["validate", path(&good)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).trim().is_empty());

    let bad = dir.path().join("bad.csv");
    save_matrix_csv(&array![[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 0.0]], &bad).unwrap();
    let o = snpalq(&["validate", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "3");
}

#[test]
fn validate_tolerance_is_relative() {
    // w3 sits at relative distance 1e-4 from conv{e1, e2, products}
    let rel: f64 = 1e-4;
    let d = rel * (0.5 / (1.0 - rel * rel)).sqrt();
    let w = array![[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, d]];

    let others = EndmemberSet::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
    let dict = expand_lq(&others);
    let w3 = w.column(2);
    let h = solve_nnls_delta_oracle(dict.view(), w3).unwrap();
    let fit = dict.view().dot(&ndarray::ArrayView1::from(&*h));
    let dist = (&w3 - &fit).mapv(|v| v * v).sum().sqrt() / w3.dot(&w3).sqrt();
    assert!((dist - rel).abs() < 1e-9, "oracle distance {dist}");

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.csv");
    save_matrix_csv(&w, &file).unwrap();
    let o = snpalq(&["validate", path(&file), "--tol", "1e-6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = snpalq(&["validate", path(&file), "--tol", "1e-3"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "3");
}

#[test]
fn config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", serde_json::json!({"generator": {"r": 3, "colour": "blue"}}));
    let o = snpalq(&["generate", "--config", path(&cfg), "--out", path(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_json(dir.path(), "d.json", serde_json::json!({"extra": {}}));
    let o = snpalq(&["benchmark", "--config", path(&cfg), "--out", path(&dir.path().join("b"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn benchmark_output_is_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "c.json",
        serde_json::json!({
            "generator": {"n": 80},
            "benchmark": {"r_grid": [3, 5], "trials": 3, "seed_base": 11}
        }),
    );
    let mut reports = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(run);
        let o = snpalq(&["--threads", threads, "benchmark", "--config", path(&cfg), "--out", path(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        reports.push((fs::read(out.join("report.csv")).unwrap(), fs::read(out.join("trials.csv")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
    let text = String::from_utf8(reports[0].0.clone()).unwrap();
    assert!(text.starts_with("algorithm,r,trials,successes,success_rate"));
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}
