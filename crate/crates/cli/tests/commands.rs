use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cdcv::cdcv::{conditioning_diagnostics, fit_cdcv, CdcvConfig};
use cdcv::clustering::{ClusteringConfig, StoppingRule};
use cdcv::panel::{load_panel, RollingWindow};
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdcv")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Generates a small panel in `dir/data` and returns the returns CSV path.
fn small_panel(dir: &Path) -> PathBuf {
    ok(dir, &["generate", "--n-assets", "6", "--n-sectors", "2", "--n-obs", "200", "--seed", "3", "-o", "data"]);
    dir.join("data/returns.csv")
}

#[test]
fn fit_writes_reloadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_panel(d);
    for f in ["returns.csv", "sectors.csv", "generator.json"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    ok(d, &["fit", "--data", data.to_str().unwrap(), "--b", "2", "-o", "fit"]);
    let model = json(d.join("fit/model.json"));
    assert_eq!(model["schema_version"], 1);
    assert_eq!(model["config"]["window_start"], 50);
    let diag = json(d.join("fit/diagnostics.json"));
    assert_eq!(diag["stages"].as_array().unwrap().len(), 3);
    assert_eq!(diag["n_clusters"], 2);
    let text = std::fs::read_to_string(d.join("fit/model.json")).unwrap();
    let reloaded: Value = serde_json::from_str(&text).unwrap();
    let m: cdcv::cdcv::CdcvModel = serde_json::from_value(reloaded["model"].clone()).unwrap();
    m.validate().unwrap();
    assert_eq!(m.n_assets(), 6);
}

#[test]
fn missing_data_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["fit", "--data", "no/such/returns.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["schema_version"], 1);
    assert!(err["error"]["path"].as_str().unwrap().contains("no/such/returns.csv"), "{err}");
    assert!(err["error"]["message"].as_str().unwrap().contains("no/such/returns.csv"), "{err}");
}

#[test]
fn bad_flag_values_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_panel(d);
    let data = data.to_str().unwrap();
    for args in [
        vec!["fit", "--data", data, "--metric", "Cosine"],
        vec!["fit", "--data", data, "--window", "500"],
        vec!["backtest", "--data", data, "--mode", "sideways"],
        vec!["sweep", "--data", data, "--axis", "a"],
    ] {
        let out = run(d, &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"]["kind"], "input");
    }
}

#[test]
fn commands_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let data = small_panel(a.path());
    let data = data.to_str().unwrap();
    let steps: [&[&str]; 5] = [
        &["fit", "--data", data, "--b", "2", "-o", "out"],
        &["simulate", "--model", "out/model.json", "-n", "300", "--seed", "9", "-o", "out"],
        &["diagnostics", "--model", "out/model.json", "-o", "out/diag"],
        &["sweep", "--data", data, "--axis", "b", "--values", "2,3", "--windows", "2", "-o", "out"],
        &["backtest", "--data", data, "--window", "180", "--b", "2", "--n-sims", "1000", "-o", "out"],
    ];
    for dir in [a.path(), b.path()] {
        for args in steps {
            ok(dir, args);
        }
    }
    ok(b.path(), &["generate", "--n-assets", "6", "--n-sectors", "2", "--n-obs", "200", "--seed", "3", "-o", "data"]);
    for f in [
        "data/returns.csv",
        "data/sectors.csv",
        "data/generator.json",
        "out/model.json",
        "out/diagnostics.json",
        "out/simulated.csv",
        "out/simulate.json",
        "out/diag/diagnostics.json",
        "out/sweep.csv",
        "out/sweep.json",
        "out/backtest.json",
        "out/backtest.txt",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn reload_and_simulate_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_panel(d);
    ok(d, &["fit", "--data", data.to_str().unwrap(), "--b", "2", "--seed", "4", "-o", "out"]);
    ok(d, &["simulate", "--model", "out/model.json", "-n", "500", "--seed", "4", "-o", "out"]);
    let sim = load_panel(d.join("out/simulated.csv")).unwrap();
    assert_eq!(sim.n_assets(), 6);
    assert_eq!(sim.n_obs(), 500);

    let panel = load_panel(&data).unwrap();
    let window = panel.window(RollingWindow::new(50, 150)).unwrap();
    let config = CdcvConfig {
        clustering: ClusteringConfig { stop: StoppingRule::Clusters(2), ..Default::default() },
        seed: 4,
        ..Default::default()
    };
    let model = fit_cdcv(&window, &config, 50).unwrap();
    let direct = model.simulate(500, 4).unwrap();
    // the CSV holds shortest round-trip decimal forms, so values are exact
    assert_eq!(direct.columns(), sim.columns());
    assert_eq!(direct.assets(), sim.assets());
}

#[test]
fn sweep_rows_and_single_setting_agree_with_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_panel(d);
    let data = data.to_str().unwrap();
    ok(d, &["sweep", "--data", data, "--axis", "upsilon", "--values", "5,11,20", "-o", "sw"]);
    let csv = std::fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let sweep = json(d.join("sw/sweep.json"));
    assert_eq!(sweep["rows"].as_array().unwrap().len(), 3);

    ok(d, &["sweep", "--data", data, "--axis", "b", "--values", "2", "-o", "one"]);
    ok(d, &["fit", "--data", data, "--b", "2", "-o", "fit"]);
    let sweep = json(d.join("one/sweep.json"));
    let diag = json(d.join("fit/diagnostics.json"));
    assert_eq!(sweep["rows"][0]["summary"], diag["stages"][2]["summary"]);
    assert_eq!(sweep["rows"][0]["abs_summary"], diag["stages"][2]["abs_summary"]);

    // and both agree with the library
    let panel = load_panel(data).unwrap();
    let window = panel.window(RollingWindow::new(50, 150)).unwrap();
    let config = CdcvConfig {
        clustering: ClusteringConfig { stop: StoppingRule::Clusters(2), ..Default::default() },
        ..Default::default()
    };
    let model = fit_cdcv(&window, &config, 50).unwrap();
    let stages = conditioning_diagnostics(&model, &window).unwrap();
    assert_eq!(diag["stages"][2]["summary"]["std"].as_f64().unwrap(), stages[2].summary.std);
}

#[test]
fn backtest_reports_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = small_panel(d);
    let out = ok(d, &[
        "backtest",
        "--data",
        data.to_str().unwrap(),
        "--window",
        "180",
        "--b",
        "2",
        "--n-sims",
        "1000",
        "--alphas",
        "0.9,0.95,0.99",
        "-o",
        "bt",
    ]);
    let report = json(d.join("bt/backtest.json"));
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for r in reports {
        assert_eq!(r["trials"], 20);
    }
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 1 + 3);
    assert_eq!(table, std::fs::read_to_string(d.join("bt/backtest.txt")).unwrap());

    ok(d, &["backtest", "--data", data.to_str().unwrap(), "--window", "150", "--b", "2", "--n-sims", "1000", "--mode", "within-sample", "-o", "ws"]);
    let report = json(d.join("ws/backtest.json"));
    assert_eq!(report["mode"], "WithinSample");
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
}
