use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use sparsevar_cli::commands;
use sparsevar_cli::config::Settings;
use sparsevar_core::connectedness::{self, FevdTable};
use sparsevar_core::synthetic::{self, SparseVarDesign, SyntheticTruth};
use sparsevar_core::varcore::{self, VarCoefficients};
use sparsevar_core::{dataset, io};

fn sparsevar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsevar"))
        .args(args)
        .env_remove("SPARSEVAR_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", s(dir)];
    args.extend_from_slice(extra);
    let out = sparsevar(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_deterministic_and_truth_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let flags = ["--k", "5", "--p", "1", "--density", "0.2", "--seed", "7"];
    simulate(&a, &flags);
    simulate(&b, &flags);
    for f in ["panel.csv", "metadata.csv", "truth.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    let truth: SyntheticTruth = serde_json::from_value(read_json(&a.join("truth.json"))).unwrap();
    let design = SparseVarDesign {
        k: 5,
        p: 1,
        density: 0.2,
        scale: 0.4,
        noise_sd: 1.0,
    };
    assert_eq!(truth, synthetic::draw_sparse_var(&design, 7).unwrap());
    let coeffs: VarCoefficients = serde_json::from_value(read_json(&a.join("truth.json"))["coeffs"].clone()).unwrap();
    assert_eq!(coeffs, truth.coeffs);

    // the panel differences back to the simulated returns
    let panel = dataset::load_panel(std::fs::File::open(a.join("panel.csv")).unwrap()).unwrap();
    let returns = dataset::difference(&panel, dataset::Transform::Diff).unwrap();
    let direct = varcore::simulate(&truth.coeffs, &truth.sigma, 200, 100, commands::innovation_seed(7)).unwrap();
    assert!((returns.values() - direct.values()).amax() < 1e-10);
}

#[test]
fn zero_density_gives_empty_support() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--density", "0", "--seed", "3"]);
    let truth: SyntheticTruth = serde_json::from_value(read_json(&tmp.path().join("truth.json"))).unwrap();
    assert_eq!(truth.coeffs.nonzero_count(), 0);
    assert!(truth.support.iter().flatten().flatten().all(|x| !x));
}

#[test]
fn unstable_design_reports_lower_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sparsevar(&["simulate", "--out", s(tmp.path()), "--density", "1", "--scale", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lower the coefficient scale"));
}

#[test]
fn missing_input_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = sparsevar(&["pipeline", "--panel", s(&tmp.path().join("nope.csv")), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn bad_config_values_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"estimator": "ridge"}"#).unwrap();
    let out = sparsevar(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(sparsevar(&["roll", "--config", s(&cfg)]).status.code(), Some(2));

    let threads = Command::new(env!("CARGO_BIN_EXE_sparsevar"))
        .args(["simulate", "--out", s(&tmp.path().join("x"))])
        .env("SPARSEVAR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, &["--k", "12", "--t", "300", "--density", "0.1", "--groups", "3", "--seed", "2"]);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"panel": "{}", "metadata": "{}", "p_max": 2, "horizon": [8, 10], "seed": 1, "threshold": 0.5}}"#,
            s(&sim.join("panel.csv")),
            s(&sim.join("metadata.csv"))
        ),
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    // the flag overrides the file's threshold
    let out = sparsevar(&["pipeline", "--config", s(&cfg), "--out", s(&out_dir), "--threshold", "0.01"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["threshold"], 0.01);
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(out_dir.join(f.as_str().unwrap()).exists(), "{f}");
    }

    // reload the table and compare with a FEVD recomputed from the fit
    let fit = read_json(&out_dir.join("fit.json"));
    let coeffs: VarCoefficients = serde_json::from_value(fit["coefficients"].clone()).unwrap();
    let sigma_rows: Vec<Vec<f64>> = serde_json::from_value(fit["sigma"].clone()).unwrap();
    let sigma = DMatrix::from_fn(12, 12, |i, j| sigma_rows[i][j]);
    let table = connectedness::fevd(&coeffs, &sigma, 10).unwrap();
    let (labels, theta) = io::read_connectedness_csv(std::fs::File::open(out_dir.join("table_raw_h10.csv")).unwrap(), 100.0).unwrap();
    assert_eq!(labels.len(), 12);
    assert!((theta - &table.theta).amax() < 1e-9);

    let summary = read_json(&out_dir.join("summary.json"));
    let h10 = &summary["horizons"][1];
    assert_eq!(h10["horizon"], 10);
    let net: Vec<f64> = serde_json::from_value(h10["raw"]["summary"]["net"].clone()).unwrap();
    assert!(net.iter().sum::<f64>().abs() < 1e-10);
    let total = h10["raw"]["summary"]["total"].as_f64().unwrap();
    let mass = h10["raw"]["summary"]["off_diagonal_sum"].as_f64().unwrap();
    assert!((total * 12.0 - mass).abs() < 1e-12);
    let within = h10["raw"]["within_cross"]["within"].as_f64().unwrap();
    let cross = h10["raw"]["within_cross"]["cross"].as_f64().unwrap();
    assert!((within + cross - mass).abs() < 1e-12);
    assert_eq!(h10["raw"]["groups"]["labels"].as_array().unwrap().len(), 3);

    let dot = std::fs::read_to_string(out_dir.join("network_normalized_h10.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("label=").count(), 12);
}

#[test]
fn rolling_single_window_matches_static_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, &["--k", "6", "--t", "120", "--seed", "9"]);
    let base = |out: &str| Settings {
        panel: Some(sim.join("panel.csv")),
        out: Some(tmp.path().join(out)),
        p: Some(1),
        horizon: Some(vec![8, 10]),
        window: Some(120),
        ..Default::default()
    };
    commands::pipeline(&base("static").resolve().unwrap()).unwrap();
    commands::roll(&base("roll").resolve().unwrap()).unwrap();
    let rolling = read_json(&tmp.path().join("roll/rolling.json"));
    let windows = rolling["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 1);
    let summary = read_json(&tmp.path().join("static/summary.json"));
    for h in 0..2 {
        assert_eq!(
            windows[0]["horizons"][h]["total"].as_f64().unwrap(),
            summary["horizons"][h]["raw"]["summary"]["total"].as_f64().unwrap()
        );
    }
    // one window: no Welch comparison possible
    assert!(rolling["comparisons"].as_array().unwrap().is_empty());
}

#[test]
fn roll_reports_paired_horizons_and_rejects_oversized_window() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, &["--k", "6", "--t", "150", "--seed", "4"]);
    let out_dir = tmp.path().join("roll");
    let panel = sim.join("panel.csv");
    let args = ["roll", "--panel", s(&panel), "--out", s(&out_dir), "--p", "1", "--window", "40", "--step", "5"];
    let mut with_h = args.to_vec();
    with_h.extend(["--horizon", "8", "--horizon", "10"]);
    let out = sparsevar(&with_h);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rolling = read_json(&out_dir.join("rolling.json"));
    let cmp = &rolling["comparisons"][0];
    assert_eq!((cmp["horizon_a"].as_u64(), cmp["horizon_b"].as_u64()), (Some(8), Some(10)));
    let p = cmp["welch"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    let csv = std::fs::read_to_string(out_dir.join("rolling.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 23);
    assert!(csv.lines().next().unwrap().contains("within_h8,cross_h8"));

    let too_long = sparsevar(&["roll", "--panel", s(&panel), "--out", s(&tmp.path().join("r2")), "--p", "1", "--window", "500"]);
    assert_eq!(too_long.status.code(), Some(2));
}

#[test]
fn export_graph_two_node_table() {
    let tmp = tempfile::tempdir().unwrap();
    let coeffs = VarCoefficients::new(
        nalgebra::DVector::zeros(2),
        vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.4])],
    )
    .unwrap();
    let table: FevdTable = connectedness::fevd(&coeffs, &DMatrix::identity(2, 2), 3).unwrap();
    let labels = vec!["a".to_string(), "b".to_string()];
    let path = tmp.path().join("table.csv");
    let mut buf = Vec::new();
    io::write_connectedness_csv(&table, &labels, 100.0, &mut buf).unwrap();
    std::fs::write(&path, buf).unwrap();

    let out_dir = tmp.path().join("g");
    let out = sparsevar(&["export-graph", "--table", s(&path), "--out", s(&out_dir), "--graph-normalized", "false"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dot = std::fs::read_to_string(out_dir.join("network_raw.dot")).unwrap();
    // B_h stays upper triangular, so b never reaches a: the only edge is b -> a
    assert_eq!(dot.matches("->").count(), 1);
    assert!(dot.contains("n1 -> n0"));

    let out = sparsevar(&["export-graph", "--table", s(&path), "--out", s(&out_dir), "--format", "json", "--threshold", "1"]);
    assert!(out.status.success());
    let net = read_json(&out_dir.join("network_normalized.json"));
    assert_eq!(net["nodes"].as_array().unwrap().len(), 2);
    assert!(net["edges"].as_array().unwrap().is_empty());

    let bad = sparsevar(&["export-graph", "--table", s(&path), "--out", s(&out_dir), "--format", "svg"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn pipeline_lag_selection_on_var2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut hits = 0;
    for seed in 0..20u64 {
        let d = SparseVarDesign {
            k: 10,
            p: 2,
            density: 0.05,
            scale: 0.3,
            noise_sd: 1.0,
        };
        let mut c = synthetic::draw_sparse_var(&d, seed).unwrap().coeffs;
        for i in 0..10 {
            c.lags[0][(i, i)] += 0.3;
            c.lags[1][(i, i)] -= 0.6;
        }
        let returns = varcore::simulate(&c, &DMatrix::identity(10, 10), 500, 200, seed).unwrap();
        let mut levels = DMatrix::zeros(501, 10);
        for t in 0..500 {
            for j in 0..10 {
                levels[(t + 1, j)] = levels[(t, j)] + returns.values()[(t, j)];
            }
        }
        let mut dates = vec![returns.dates()[0].pred_opt().unwrap()];
        dates.extend_from_slice(returns.dates());
        let panel = tmp.path().join(format!("panel{seed}.csv"));
        let mut buf = Vec::new();
        dataset::write_panel(&dates, returns.symbols(), &levels, &mut buf).unwrap();
        std::fs::write(&panel, buf).unwrap();
        let settings = Settings {
            panel: Some(panel),
            out: Some(tmp.path().join(format!("out{seed}"))),
            p_max: Some(3),
            ..Default::default()
        };
        let manifest = commands::pipeline(&settings.resolve().unwrap()).unwrap();
        hits += usize::from(manifest.results["p"] == 2);
    }
    assert!(hits >= 18, "p = 2 in {hits}/20");
}
