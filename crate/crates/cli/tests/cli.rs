use std::path::Path;
use std::process::{Command, Output};

use mom_bayes::data::parse_draws_csv;

fn mombayes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mombayes"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary_value(dir: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap_or_else(|| panic!("no '{key}' in summary"))
}

#[test]
fn missing_data_is_a_usage_error() {
    let out = mombayes(&["fit", "--model", "gaussian-location"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--data"));
}

#[test]
fn fit_writes_schema_stable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    assert!(mombayes(&[
        "simulate",
        "--theta",
        "-2",
        "--n",
        "300",
        "--seed",
        "4",
        "--out",
        path(&sim)
    ])
    .status
    .success());
    let out = dir.path().join("fit");
    let res = mombayes(&[
        "fit",
        "--data",
        path(&sim),
        "--k",
        "15",
        "--draws",
        "600",
        "--warmup",
        "300",
        "--out",
        path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let draws = std::fs::read_to_string(out.join("draws.csv")).unwrap();
    assert!(draws.starts_with("chain,iter,theta_0,log_kernel\n"));
    let chains = parse_draws_csv(&draws).unwrap();
    assert_eq!(chains.len(), 4);
    assert!(chains.iter().all(|c| c.len() == 600));
    let mean: f64 = summary_value(&out, "theta.mean").parse().unwrap();
    assert!((mean + 2.0).abs() < 0.3, "posterior mean {mean}");
    let hist = std::fs::read_to_string(out.join("hist_0.csv")).unwrap();
    assert!(hist.starts_with("bin_left,bin_right,density\n"));
    assert_eq!(hist.lines().count(), 51);
}

#[test]
fn regression_fit_standardizes_and_names_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("reg.csv");
    let res = mombayes(&[
        "simulate",
        "--model",
        "linear-regression",
        "--theta",
        "1,0.5,-1,0.7",
        "--n",
        "400",
        "--out",
        path(&sim),
    ]);
    assert!(res.status.success());
    let out = dir.path().join("fit");
    let res = mombayes(&[
        "fit",
        "--model",
        "linear-regression",
        "--data",
        path(&sim),
        "--features",
        "z1,z2",
        "--k",
        "20",
        "--prior",
        "gaussian",
        "--prior-mean",
        "0",
        "--prior-sd",
        "10",
        "--draws",
        "500",
        "--warmup",
        "500",
        "--out",
        path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let std_csv = std::fs::read_to_string(out.join("standardization.csv")).unwrap();
    assert!(std_csv.starts_with("column,mean,sd\ny,"));
    let intercept: f64 = summary_value(&out, "intercept.map").parse().unwrap();
    assert!(intercept.abs() < 0.1);
    summary_value(&out, "z2.map");
    summary_value(&out, "sigma.map");
    assert!(out.join("hist_3.csv").exists());
}

#[test]
fn config_file_fills_in_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    assert!(
        mombayes(&["simulate", "--theta", "0", "--n", "200", "--out", path(&sim)])
            .status
            .success()
    );
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "data = {}\nk = 50\ndraws = 200\nwarmup = 200\nchains = 2\n",
            sim.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    let res = mombayes(&["fit", "--config", path(&cfg), "--k", "10", "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(summary_value(&out, "k"), "10");
    let chains = parse_draws_csv(&std::fs::read_to_string(out.join("draws.csv")).unwrap()).unwrap();
    assert_eq!(chains.len(), 2);
}

#[test]
fn bad_cell_reports_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "y\n1.0\n2.0\nabc\n").unwrap();
    let out = mombayes(&[
        "fit",
        "--data",
        path(&csv),
        "--k",
        "1",
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 4") && err.contains("'y'"), "{err}");
}

#[test]
fn failed_run_leaves_no_draws() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("small.csv");
    std::fs::write(&csv, "y\n1\n2\n3\n").unwrap();
    let out_dir = dir.path().join("o");
    // k = 3 needs at least 6 observations.
    let out = mombayes(&["fit", "--data", path(&csv), "--k", "3", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k = 3"));
    assert!(!out_dir.join("draws.csv").exists());
}

#[test]
fn wine_experiment_requires_data() {
    let out = mombayes(&["experiment", "wine"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--data"));
}

#[test]
fn deviation_experiment_reports_inflation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dev");
    let res = mombayes(&["experiment", "deviation", "--replications", "100", "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mom: f64 = summary_value(&out, "mom_inflation").parse().unwrap();
    let mean: f64 = summary_value(&out, "mean_inflation").parse().unwrap();
    assert!(mom < 3.0 && mean > 100.0);
    let rows = std::fs::read_to_string(out.join("deviation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 101);
}
