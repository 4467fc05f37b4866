use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn hpca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpca")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn spec(n: usize, steps: usize) -> Value {
    let assets: Vec<Value> = (0..n)
        .map(|i| json!({"s0": 10.0 + i as f64, "mu": 0.0005, "sigma": 0.02 + 0.002 * i as f64, "rho": 0.2 + 0.7 * i as f64 / n as f64}))
        .collect();
    json!({
        "benchmark": {"s0": 100.0, "mu": 0.001, "sigma": 0.02, "beta": 3.0},
        "assets": assets,
        "n_steps": steps,
        "seed": 11
    })
}

fn simulate(dir: &Path, n: usize, steps: usize) -> String {
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, spec(n, steps).to_string()).unwrap();
    let csv = dir.join("prices.csv");
    let out = hpca(&["simulate", "--spec", spec_path.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    csv.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_price_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 4, 30);
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "date,BENCH,A000,A001,A002,A003");
    assert_eq!(lines.count(), 31);
}

#[test]
fn calibrate_and_select() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 12, 80);
    let cal = stdout_json(&hpca(&["calibrate", &csv, "--window", "3"]));
    assert_eq!(cal["window"], 3);
    assert_eq!(cal["tickers"].as_array().unwrap().len(), 12);
    assert!(cal["calibration"]["benchmark"]["sigma"].as_f64().unwrap() > 0.0);

    for mode in ["skew", "normal"] {
        let sel = stdout_json(&hpca(&["select", &csv, "--mode", mode, "-K", "4"]));
        assert_eq!(sel["window"], 29);
        let w: Vec<f64> = sel["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(w, vec![0.4, 0.3, 0.2, 0.1]);
        assert_eq!(sel["tickers"].as_array().unwrap().len(), 4);
    }
}

#[test]
fn backtest_with_toml_config_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 10, 45);
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "L = 30\nK = 5\nstrategies = [\"hpca-skew\", \"hpca-normal\", \"baseline\"]\nbaseline_method = \"greedy\"\n").unwrap();
    let out = dir.path().join("run");
    let res = hpca(&["backtest", &csv, "--config", cfg.to_str().unwrap(), "-K", "3", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["k"], 3);
    assert_eq!(report["config"]["window"], 30);
    assert_eq!(report["aggregates"]["windows"], 15);
    let rows = std::fs::read_to_string(out.join("series_baseline.csv")).unwrap();
    assert_eq!(rows.lines().count(), 16);
    assert!(out.join("fig_te_post.svg").exists());

    // Regenerate the figures from the saved run.
    std::fs::remove_file(out.join("fig_excess.svg")).unwrap();
    let res = hpca(&["report", out.to_str().unwrap(), "--format", "svg"]);
    assert!(res.status.success());
    assert!(out.join("fig_excess.svg").exists());
}

#[test]
fn backtest_json_config_with_sectors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), 6, 40);
    // Sector file: two equal-weight baskets over the simulated assets.
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut sectors = String::from("date,BENCH,S0,S1\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v: Vec<f64> = f[1..].iter().map(|x| x.parse().unwrap()).collect();
        sectors.push_str(&format!("{},{},{},{}\n", f[0], v[0], (v[1] + v[2] + v[3]) / 3.0, (v[4] + v[5] + v[6]) / 3.0));
    }
    let sec = dir.path().join("sectors.csv");
    std::fs::write(&sec, sectors).unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, json!({"window": 30, "k": 2, "strategies": ["practitioner", "hpca-skew"]}).to_string()).unwrap();
    let out = dir.path().join("run");
    let res = hpca(&[
        "backtest", &csv, "--config", cfg.to_str().unwrap(), "--sectors", sec.to_str().unwrap(),
        "--out", out.to_str().unwrap(), "--format", "json",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["aggregates"]["strategies"]["practitioner"]["evaluated"], 10);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "date,B,A\n2020-01-01,1,2\n2020-01-08,-1,2\n").unwrap();
    let res = hpca(&["calibrate", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains(":3:"));

    assert_eq!(hpca(&["calibrate", "/nonexistent.csv"]).status.code(), Some(2));
    assert_eq!(hpca(&["select", "x.csv", "--mode", "sideways"]).status.code(), Some(2));

    let csv = simulate(dir.path(), 30, 60);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, json!({"window": 52, "k": 10, "strategies": ["baseline"], "baseline_method": "exact"}).to_string()).unwrap();
    let res = hpca(&["backtest", &csv, "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));

    std::fs::write(&cfg, "{\"window\": 52, \"unknown\": 1}").unwrap();
    let res = hpca(&["backtest", &csv, "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn calibration_budget_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // A flat benchmark makes every window's calibration degenerate.
    let mut text = String::from("date,B,A,C\n");
    for k in 0..20 {
        text.push_str(&format!("2020-01-{:02},100,{},{}\n", k + 1, 10.0 + (k % 3) as f64, 20.0 + (k % 4) as f64));
    }
    let csv = dir.path().join("flat.csv");
    std::fs::write(&csv, text).unwrap();
    let res = hpca(&[
        "backtest", csv.to_str().unwrap(), "-L", "12", "-K", "1", "--strategies", "hpca-skew",
        "--max-failed-windows", "2", "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}
