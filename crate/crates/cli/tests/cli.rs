use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn tvlds(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvlds")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = tvlds(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Simulated 6-node path instance in `<dir>/sim`.
fn simulated(dir: &Path) {
    ok(dir, &["simulate", "--set", "m=6", "--set", "horizon=30", "--seed", "3", "--out", "sim"]);
}

fn coefficients(dir: &Path) -> Vec<Vec<f64>> {
    let v: serde_json::Value = serde_json::from_str(&read(dir.join("fit.json"))).unwrap();
    v["a_hat"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

#[test]
fn simulate_is_deterministic_and_creates_the_out_dir() {
    let tmp = TempDir::new().unwrap();
    let args = |out: &'static str| ["simulate", "--set", "m=5", "--set", "horizon=12", "--seed", "11", "--out", out];
    ok(tmp.path(), &args("a/nested"));
    ok(tmp.path(), &args("b"));
    for f in ["panel.csv", "ensemble.json", "graph.json", "field.csv"] {
        assert_eq!(read(tmp.path().join("a/nested").join(f)), read(tmp.path().join("b").join(f)), "{f}");
    }
    let panel = read(tmp.path().join("b/panel.csv"));
    assert_eq!(panel.lines().next(), Some("node,t,x1,x2"));
    assert_eq!(panel.lines().count(), 1 + 5 * 13);
}

#[test]
fn resolved_config_records_every_setting() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--set", "m=5", "--seed", "9", "--out", "s"]);
    let cfg: toml::Table = read(tmp.path().join("s/config.resolved.toml")).parse().unwrap();
    assert_eq!(cfg["command"].as_str(), Some("simulate"));
    assert_eq!(cfg["tvlds_version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    let params = cfg["params"].as_table().unwrap();
    assert_eq!(params["m"].as_integer(), Some(5));
    assert_eq!(params["seed"].as_integer(), Some(9));
    assert_eq!(params["graph"].as_str(), Some("path"));
}

#[test]
fn config_file_then_set_then_flags() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "m = 4\nhorizon = 9\nseed = 1\n[simulate]\np = 0.5\n[sweep]\nn_rep = 2\n").unwrap();
    ok(tmp.path(), &["simulate", "--config", "c.toml", "--set", "horizon=7", "--seed", "2", "--out", "s"]);
    let cfg: toml::Table = read(tmp.path().join("s/config.resolved.toml")).parse().unwrap();
    let params = cfg["params"].as_table().unwrap();
    assert_eq!(params["m"].as_integer(), Some(4));
    assert_eq!(params["horizon"].as_integer(), Some(7));
    assert_eq!(params["seed"].as_integer(), Some(2));
    assert_eq!(params["p"].as_float(), Some(0.5));
    assert!(!params.contains_key("n_rep"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let out = tvlds(tmp.path(), &["simulate", "--set", "graph=moebius", "--out", "s"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("moebius"));
    assert_eq!(code(&tvlds(tmp.path(), &["simulate", "--set", "no_such_key=1", "--out", "s"])), 1);
    assert_eq!(code(&tvlds(tmp.path(), &["simulate", "--seed", "minus-one"])), 1);
    assert_eq!(code(&tvlds(tmp.path(), &["transmogrify"])), 1);
}

#[test]
fn version_flag_prints_the_crate_version() {
    let out = ok(Path::new("."), &["--version"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("tvlds {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn zero_penalty_fit_matches_individual_least_squares() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulated(dir);
    let common = ["--set", "panel=sim/panel.csv", "--set", "graph=sim/graph.json"];
    ok(dir, &[&["fit"][..], &common, &["--set", "method=graph_tv", "--set", "lambda=0", "--out", "tv"]].concat());
    ok(dir, &[&["fit"][..], &common, &["--set", "method=ols_ind", "--out", "ols"]].concat());
    let (tv, ols) = (coefficients(&dir.join("tv")), coefficients(&dir.join("ols")));
    assert_eq!(tv.len(), 6);
    for (a, b) in tv.iter().flatten().zip(ols.iter().flatten()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn validated_path_fit_writes_the_path_table() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulated(dir);
    for method in ["graph_tv", "laplacian"] {
        ok(
            dir,
            &["fit", "--set", "panel=sim/panel.csv", "--set", "graph=sim/graph.json", "--set", &format!("method={method}"), "--set", "grid_size=8", "--out", method],
        );
        let path = read(dir.join(method).join("path.csv"));
        assert!(path.starts_with("lambda,val_mse,"));
        assert_eq!(path.lines().count(), 1 + 8, "{method}");
        assert_eq!(coefficients(&dir.join(method)).len(), 6);
    }
}

#[test]
fn unreadable_graph_is_a_data_error_naming_the_file() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulated(dir);
    std::fs::write(dir.join("broken.json"), "{ not json").unwrap();
    for graph in ["broken.json", "missing.json"] {
        let out = tvlds(dir, &["fit", "--set", "panel=sim/panel.csv", "--set", &format!("graph={graph}"), "--out", "f"]);
        assert_eq!(code(&out), 2);
        assert!(String::from_utf8_lossy(&out.stderr).contains(graph));
        assert!(read(dir.join("f/.failed")).contains(graph));
    }
}

#[test]
fn strict_non_convergence_exits_three_and_a_later_success_clears_the_marker() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulated(dir);
    let args = ["fit", "--set", "panel=sim/panel.csv", "--set", "graph=sim/graph.json", "--set", "lambda=0.05", "--set", "max_iter=1", "--out", "f"];
    let out = tvlds(dir, &[&args[..], &["--strict"]].concat());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("f/.failed").exists());
    ok(dir, &args);
    assert!(!dir.join("f/.failed").exists());
}

#[test]
fn sweep_writes_one_row_per_value_and_method() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["sweep", "--set", "n_rep=1", "--set", "values=[4, 8]", "--set", "m=9", "--set", "grid_size=6", "--out", "sw"]);
    let rows = read(dir.join("sw/rows.csv"));
    assert!(rows.starts_with("sweep_axis,sweep_value,"));
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
    assert_eq!(read(dir.join("sw/aggregate.csv")).lines().count(), 1 + 2 * 2);
    assert_eq!(read(dir.join("sw/failures.csv")).lines().count(), 1);
    ok(dir, &["sweep", "--set", "n_rep=1", "--set", "values=[4, 8]", "--set", "m=9", "--set", "grid_size=6", "--jobs", "2", "--out", "sw2"]);
    assert_eq!(rows, read(dir.join("sw2/rows.csv")));
}

#[test]
fn theory_reports_conditions_on_a_complete_graph() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["theory", "--set", "graph=complete", "--set", "m=16", "--set", "horizon=50", "--out", "th"]);
    let conditions = read(dir.join("th/conditions.csv"));
    assert_eq!(conditions.lines().next(), Some("name,lhs,rhs,margin,pass"));
    assert!(conditions.lines().count() > 1);
    let report: serde_json::Value = serde_json::from_str(&read(dir.join("th/theory.json"))).unwrap();
    assert!(report.is_object());
}

#[test]
fn ingest_builds_a_lag_embedded_panel() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let input = fixture("stations.csv");
    let out = ok(dir, &["ingest", "--set", &format!("input={}", input.display()), "--set", "transform=loglog", "--out", "ing"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("using k = 1"));
    let panel = read(dir.join("ing/panel.csv"));
    let rows: Vec<Vec<f64>> = panel.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(panel.lines().next(), Some("node,t,x1,x2"));
    assert_eq!(rows.len(), 2 * 11);
    for w in rows.windows(2).filter(|w| w[0][0] == w[1][0]) {
        // The lagged coordinate of one state is the leading coordinate of the previous.
        assert_eq!(w[1][3], w[0][2]);
    }
    let summary: serde_json::Value = serde_json::from_str(&read(dir.join("ing/preprocess.json"))).unwrap();
    assert_eq!(summary["knn_k"], 1);
    assert_eq!(summary["graph_connected"], true);
    assert!(summary["stability_definition"].as_str().unwrap().contains("variance"));
    assert_eq!(read(dir.join("ing/coords.csv")).lines().count(), 3);
}
