mod common;

use std::fs;

use common::*;
use tempfile::tempdir;

const J_STAR: f64 = 1.6662546754103886;

#[test]
fn solve_lqg_reproduces_the_example_controller() {
    let d = tempdir().unwrap();
    let out = run_ok(d.path(), &["--out", "o", "solve-lqg"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("J* ="));
    let k = json(d.path().join("o/controller.json"));
    let shown_a = [[-1.1, 0.13], [1.19, -1.64]];
    let shown_b = [0.11, 0.45];
    let shown_c = [0.62, -0.22];
    let (a, b, c) = (matrix(&k["A_K"]), matrix(&k["B_K"]), matrix(&k["C_K"]));
    for i in 0..2 {
        for j in 0..2 {
            assert!((a[i][j] - shown_a[i][j]).abs() <= 0.005);
        }
        assert!((b[i][0] - shown_b[i]).abs() <= 0.005);
        assert!((c[0][i] - shown_c[i]).abs() <= 0.005);
    }
    let s = json(d.path().join("o/solve_summary.json"));
    assert!((s["cost"].as_f64().unwrap() - J_STAR).abs() <= 1e-12);
    assert!(s["control_riccati_residual"].as_f64().unwrap() <= 1e-10);
    assert!(s["filter_riccati_residual"].as_f64().unwrap() <= 1e-10);
    assert!(s["closed_loop_abscissa"].as_f64().unwrap() < 0.0);
}

#[test]
fn padded_order_keeps_the_cost() {
    let d = tempdir().unwrap();
    run_ok(d.path(), &["--out", "o", "solve-lqg", "--order", "3"]);
    let k = json(d.path().join("o/controller.json"));
    assert_eq!(matrix(&k["A_K"]).len(), 3);
    let s = json(d.path().join("o/solve_summary.json"));
    assert!((s["cost"].as_f64().unwrap() - J_STAR).abs() <= 1e-10 * J_STAR);
    assert_eq!(run(d.path(), &["--out", "p", "solve-lqg", "--order", "1"]).status.code(), Some(2));
    assert!(!d.path().join("p").exists());
}

#[test]
fn malformed_input_exits_2_without_output() {
    let d = tempdir().unwrap();
    write(d.path(), "bad.json", r#"{"A": [[1, 2]"#);
    let cases: Vec<Vec<&str>> = vec![
        vec!["--out", "o", "solve-lqg", "--plant", "bad.json"],
        vec!["--out", "o", "certify", "--controller", "bad.json"],
        vec!["--out", "o", "certify", "--controller", "missing.json"],
        vec!["--out", "o", "optimize", "--controller", "bad.json"],
        vec!["--out", "o", "solve-lqg", "--config", "bad.json"],
        vec!["--out", "o", "example1", "--eta", "-1"],
        vec!["--out", "o", "estimate-residue", "--radius", "0"],
        vec!["--out", "o", "solve-lqg", "--no-such-flag"],
    ];
    for args in cases {
        let out = run(d.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
        assert!(!d.path().join("o").exists(), "{args:?} left output behind");
    }
}

#[test]
fn inconsistent_plant_is_an_input_error() {
    let d = tempdir().unwrap();
    // B has the wrong number of rows
    write(
        d.path(),
        "plant.json",
        r#"{"A": [[-1, 0], [0, -2]], "B": [[1]], "C": [[1, 0]], "Q": [[1, 0], [0, 1]], "R": [[1]], "W": [[1, 0], [0, 1]], "V": [[1]]}"#,
    );
    assert_eq!(run(d.path(), &["--out", "o", "solve-lqg", "--plant", "plant.json"]).status.code(), Some(2));
    // unstabilizable: the unstable mode is not actuated
    write(
        d.path(),
        "plant.json",
        r#"{"A": [[1, 0], [0, -2]], "B": [[0], [1]], "C": [[1, 1]], "Q": [[1, 0], [0, 1]], "R": [[1]], "W": [[1, 0], [0, 1]], "V": [[1]]}"#,
    );
    let code = run(d.path(), &["--out", "o", "solve-lqg", "--plant", "plant.json"]).status.code();
    assert_eq!(code, Some(3));
    assert!(!d.path().join("o").exists());
}

#[test]
fn certify_verdicts() {
    let d = tempdir().unwrap();
    run_ok(d.path(), &["--out", "k", "solve-lqg"]);
    write(d.path(), "stationary.json", STATIONARY);
    write(d.path(), "ctrl0.json", EXAMPLE2_CTRL);
    for (ctrl, verdict) in [
        ("k/controller.json", "globally_optimal"),
        ("stationary.json", "stationary_not_optimal"),
        ("ctrl0.json", "not_stationary"),
    ] {
        let out = run_ok(d.path(), &["--out", "c", "certify", "--controller", ctrl]);
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), verdict);
        let rep = json(d.path().join("c/certificate.json"));
        assert_eq!(rep["verdict"], verdict);
        assert_eq!(rep["markov_norms_normalized"].as_array().unwrap().len(), 4);
    }
}

#[test]
fn optimize_with_zero_iterations_returns_the_input() {
    let d = tempdir().unwrap();
    write(d.path(), "ctrl0.json", EXAMPLE2_CTRL);
    run_ok(d.path(), &["--out", "o", "optimize", "--controller", "ctrl0.json", "--iters", "0"]);
    let a: serde_json::Value = serde_json::from_str(EXAMPLE2_CTRL).unwrap();
    assert_eq!(json(d.path().join("o/controller.json")), a);
    let t = table(d.path().join("o/run.csv"));
    assert_eq!(t.rows.len(), 1);
}

#[test]
fn optimize_run_schema_and_saved_controller() {
    let d = tempdir().unwrap();
    write(d.path(), "ctrl0.json", EXAMPLE2_CTRL);
    run_ok(
        d.path(),
        &["--out", "o", "optimize", "--controller", "ctrl0.json", "--eta", "0.02", "--iters", "4", "--save-controller", "kN.json"],
    );
    let t = table(d.path().join("o/run.csv"));
    assert_eq!(t.headers, ["iter", "cost", "rel_error", "grad_norm_U", "q_dyn_order", "wall_ms"]);
    assert_eq!(t.rows.len(), 5);
    assert_eq!(t.column("iter"), ["0", "1", "2", "3", "4"]);
    assert!(t.column("q_dyn_order").iter().all(|v| v.parse::<usize>().is_ok()));
    let cost = t.floats("cost");
    assert!(cost.windows(2).all(|w| w[1] < w[0]));
    for (c, e) in cost.iter().zip(t.floats("rel_error")) {
        assert!(((c - J_STAR) / J_STAR - e).abs() <= 1e-12);
    }
    // the saved controller realizes the last iterate
    run_ok(d.path(), &["--out", "c", "certify", "--controller", "kN.json"]);
    let rep = json(d.path().join("c/certificate.json"));
    let final_cost = rep["cost"].as_f64().unwrap();
    assert!((final_cost - cost[4]).abs() <= 1e-6 * cost[4]);
    let report = json(d.path().join("o/optimize_report.json"));
    assert_eq!(report["parameters"]["eta"], 0.02);
}

#[test]
fn optimize_default_step_comes_from_the_smoothness_estimate() {
    let d = tempdir().unwrap();
    write(d.path(), "ctrl0.json", EXAMPLE2_CTRL);
    run_ok(d.path(), &["--out", "o", "optimize", "--controller", "ctrl0.json", "--iters", "2"]);
    let eta = json(d.path().join("o/optimize_report.json"))["parameters"]["eta"].as_f64().unwrap();
    assert!(eta > 0.0 && eta < 0.1);
}

#[test]
fn config_file_values_and_flag_precedence() {
    let d = tempdir().unwrap();
    write(d.path(), "ctrl0.json", EXAMPLE2_CTRL);
    write(d.path(), "cfg.json", r#"{"controller": "ctrl0.json", "eta": 0.01, "iters": 2, "out": "from_file"}"#);
    run_ok(d.path(), &["--config", "cfg.json", "optimize"]);
    let rep = json(d.path().join("from_file/optimize_report.json"));
    assert_eq!(rep["parameters"]["eta"], 0.01);
    assert_eq!(rep["parameters"]["iters"], 2);
    run_ok(d.path(), &["--config", "cfg.json", "--out", "flag", "optimize", "--iters", "1"]);
    let rep = json(d.path().join("flag/optimize_report.json"));
    assert_eq!(rep["parameters"]["iters"], 1);
    assert_eq!(rep["parameters"]["eta"], 0.01);
    write(d.path(), "typo.json", r#"{"itres": 2}"#);
    assert_eq!(run(d.path(), &["--config", "typo.json", "--out", "t", "solve-lqg"]).status.code(), Some(2));
}

#[test]
fn pg_writes_its_trajectory() {
    let d = tempdir().unwrap();
    write(d.path(), "stationary.json", STATIONARY);
    run_ok(d.path(), &["--out", "o", "pg", "--controller", "stationary.json", "--iters", "3"]);
    let t = table(d.path().join("o/pg.csv"));
    assert_eq!(t.rows.len(), 4);
    let c = t.floats("cost");
    assert!(c.iter().all(|v| (v - c[0]).abs() <= 1e-10));
}

#[test]
fn example1_outputs() {
    let d = tempdir().unwrap();
    let out = run_ok(d.path(), &["--out", "o", "example1"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(!stdout.contains("FAIL"), "{stdout}");
    for case in ["example1_case1.csv", "example1_case2.csv"] {
        let t = table(d.path().join("o").join(case));
        assert_eq!(t.headers, ["iter", "method", "cost", "rel_error"]);
        assert_eq!(t.rows.len(), 30);
        for m in ["policy_gradient", "algorithm1"] {
            let rows = t.filter("method", m);
            assert_eq!(rows.rows.len(), 15);
            assert_eq!(rows.column("iter"), (0..15).map(|k| k.to_string()).collect::<Vec<_>>());
        }
    }
    let case2 = table(d.path().join("o/example1_case2.csv"));
    let pg = case2.filter("method", "policy_gradient").floats("rel_error");
    assert!(pg.iter().all(|v| format!("{v:.12e}") == format!("{:.12e}", pg[0])));
    let alg = case2.filter("method", "algorithm1").floats("rel_error");
    assert!(alg.windows(2).all(|w| w[1] < w[0]));
    let rep = json(d.path().join("o/example1_report.json"));
    assert!(rep["verdicts"].as_array().unwrap().iter().all(|v| v["pass"] == true));
    assert_eq!(rep["parameters"]["settings"]["eta"], 0.1);
    assert_eq!(rep["parameters"]["settings"]["iters"], 14);
}

fn small_example2(dir: &std::path::Path, out: &str, seed: &str) {
    run_ok(
        dir,
        &[
            "--out", out, "--seed", seed, "example2", "--laguerre-order", "6", "--sample-sizes", "10,100", "--seeds", "3",
        ],
    );
}

#[test]
fn example2_schemas() {
    let d = tempdir().unwrap();
    small_example2(d.path(), "o", "0");
    let t1 = table(d.path().join("o/table1.csv"));
    assert_eq!(t1.headers, ["entry", "num_degree", "den_degree", "coeff_error", "coeff_error_pct"]);
    assert_eq!(t1.column("entry"), ["TF11", "TF13", "TF22", "TF31", "TF33"]);
    assert!(t1.floats("coeff_error").iter().all(|e| *e <= 1e-3));
    let lg = table(d.path().join("o/laguerre_error.csv"));
    assert_eq!(lg.headers, ["entry", "order", "projection_error", "reduced_error"]);
    assert_eq!(lg.rows.len(), 4 * 6);
    let t2 = table(d.path().join("o/table2.csv"));
    assert_eq!(t2.headers, ["m", "seed", "rel_error", "median_rel_error"]);
    assert_eq!(t2.rows.len(), 2 * 3);
    assert_eq!(t2.column("m"), ["10", "10", "10", "100", "100", "100"]);
    let rep = json(d.path().join("o/example2_report.json"));
    let tables = rep["tables"].as_array().unwrap();
    assert_eq!(tables.len(), 3);
    for t in tables {
        let file = table(d.path().join("o").join(t["name"].as_str().unwrap()));
        assert_eq!(file.rows.len() as u64, t["rows"].as_u64().unwrap());
        let cols: Vec<String> = t["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect();
        assert_eq!(file.headers, cols);
    }
}

#[test]
fn outputs_are_deterministic() {
    let d = tempdir().unwrap();
    small_example2(d.path(), "a", "7");
    small_example2(d.path(), "b", "7");
    for f in ["table1.csv", "laguerre_error.csv", "table2.csv"] {
        assert_eq!(fs::read(d.path().join("a").join(f)).unwrap(), fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
    }
    small_example2(d.path(), "c", "8");
    assert_ne!(fs::read(d.path().join("a/table2.csv")).unwrap(), fs::read(d.path().join("c/table2.csv")).unwrap());

    run_ok(d.path(), &["--out", "e1", "example1"]);
    run_ok(d.path(), &["--out", "e2", "example1"]);
    for f in ["example1_case1.csv", "example1_case2.csv"] {
        assert_eq!(fs::read(d.path().join("e1").join(f)).unwrap(), fs::read(d.path().join("e2").join(f)).unwrap());
    }

    write(d.path(), "ctrl0.json", EXAMPLE2_CTRL);
    let strip = |dir: &str| {
        let t = table(d.path().join(dir).join("run.csv"));
        let k = t.headers.iter().position(|h| h == "wall_ms").unwrap();
        t.rows.into_iter().map(|mut r| {
            r.remove(k);
            r
        }).collect::<Vec<_>>()
    };
    for dir in ["r1", "r2"] {
        run_ok(d.path(), &["--out", dir, "optimize", "--controller", "ctrl0.json", "--eta", "0.02", "--iters", "3"]);
    }
    assert_eq!(strip("r1"), strip("r2"));
    assert_eq!(fs::read(d.path().join("r1/controller.json")).unwrap(), fs::read(d.path().join("r2/controller.json")).unwrap());
}

#[test]
fn estimate_residue_is_seeded() {
    let d = tempdir().unwrap();
    let args = |out: &'static str, seed: &'static str| vec!["--out", out, "--seed", seed, "estimate-residue", "--samples", "200"];
    run_ok(d.path(), &args("a", "3"));
    run_ok(d.path(), &args("b", "3"));
    run_ok(d.path(), &args("c", "4"));
    let (a, b, c) = (json(d.path().join("a/residue.json")), json(d.path().join("b/residue.json")), json(d.path().join("c/residue.json")));
    assert_eq!(a, b);
    assert_ne!(a["estimate"], c["estimate"]);
    assert_eq!(a["exact"], c["exact"]);
    assert_eq!(matrix(&a["exact"])[0][0], 0.0);
}

#[test]
fn identify_and_estimate_s() {
    let d = tempdir().unwrap();
    run_ok(d.path(), &["--out", "i", "identify"]);
    let t = table(d.path().join("i/identify.csv"));
    assert_eq!(t.rows.len(), 5);
    assert!(t.floats("coeff_error").iter().all(|e| *e <= 1e-3));
    run_ok(d.path(), &["--out", "s", "identify", "--mode", "sine", "--points", "8", "--log-grid", "true"]);
    let t = table(d.path().join("s/identify.csv"));
    assert_eq!(t.rows.len(), 5);
    run_ok(d.path(), &["--out", "l", "estimate-s", "--laguerre-order", "4"]);
    let t = table(d.path().join("l/laguerre_error.csv"));
    assert_eq!(t.rows.len(), 4 * 4);
    assert_eq!(run(d.path(), &["--out", "x", "identify", "--points", "0"]).status.code(), Some(2));
}
