use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn spotdress(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spotdress"))
        .args(args)
        .env_remove("SPOTDRESS_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic market of `days` days in `dir/market`.
fn market(dir: &Path, days: u32, seed: u64) -> PathBuf {
    let m = dir.join("market");
    let out = spotdress(&[
        "synth",
        "--out",
        s(&m),
        "--days",
        &days.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    m
}

fn backtest(m: &Path, out: &Path, extra: &[&str]) -> Output {
    let curves = m.join("curves.csv");
    let observed = m.join("observed.csv");
    let forecasts = m.join("forecasts.csv");
    let mut args = vec![
        "--set",
        "model.tail_window_days=20",
        "backtest",
        "--curves",
        s(&curves),
        "--observed",
        s(&observed),
        "--forecasts",
        s(&forecasts),
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    spotdress(&args)
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn synth_writes_one_row_per_hour() {
    let dir = TempDir::new().unwrap();
    let m = market(dir.path(), 3, 5);
    assert_eq!(data_lines(&m.join("observed.csv")).len(), 72);
    assert_eq!(data_lines(&m.join("forecasts.csv")).len(), 72);
    let header = |f: &str| fs::read_to_string(m.join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header("curves.csv"), "date,hour,side,volume_mwh,price_eur");
    assert_eq!(header("observed.csv"), "date,hour,price_eur,volume_mwh");
    assert_eq!(header("forecasts.csv"), "date,hour,p_hat_eur");
    assert!(m.join("manifest.json").is_file());
}

#[test]
fn settle_reproduces_observed_prices() {
    let dir = TempDir::new().unwrap();
    let m = market(dir.path(), 2, 6);
    let out = dir.path().join("settled.csv");
    let res = spotdress(&["settle", "--curves", s(&m.join("curves.csv")), "--out", s(&out)]);
    assert_eq!(code(&res), 0);
    assert_eq!(data_lines(&out), data_lines(&m.join("observed.csv")));
}

#[test]
fn features_write_three_tables() {
    let dir = TempDir::new().unwrap();
    let m = market(dir.path(), 25, 7);
    let out = dir.path().join("feat.csv");
    let res = spotdress(&[
        "features",
        "--curves",
        s(&m.join("curves.csv")),
        "--forecasts",
        s(&m.join("forecasts.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(data_lines(&out).len(), 600);
    assert!(dir.path().join("feat_residuals.csv").is_file());
    assert!(dir.path().join("feat_diagnostic.csv").is_file());
    assert!(dir.path().join("feat.manifest.json").is_file());
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let res = spotdress(&[
        "settle",
        "--curves",
        s(&dir.path().join("nope.csv")),
        "--out",
        s(&dir.path().join("o.csv")),
    ]);
    assert_eq!(code(&res), 1);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&spotdress(&["settle", "--bogus"])), 1);
    assert_eq!(code(&spotdress(&["--help"])), 0);
}

#[test]
fn bad_override_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let res = spotdress(&["--set", "model.knn=0", "synth", "--out", s(&dir.path().join("m")), "--days", "1"]);
    assert_eq!(code(&res), 1);
    let res = spotdress(&["--set", "model.nope=3", "synth", "--out", s(&dir.path().join("m")), "--days", "1"]);
    assert_eq!(code(&res), 1);
}

#[test]
fn empty_curve_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let curves = dir.path().join("curves.csv");
    fs::write(&curves, "").unwrap();
    let res = spotdress(&["settle", "--curves", s(&curves), "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&res), 2);
}

#[test]
fn malformed_curve_reports_the_line() {
    let dir = TempDir::new().unwrap();
    let curves = dir.path().join("curves.csv");
    fs::write(
        &curves,
        "date,hour,side,volume_mwh,price_eur\n2016-01-01,1,BID,100,50\n2016-01-01,1,BID,abc,40\n",
    )
    .unwrap();
    let res = spotdress(&["settle", "--curves", s(&curves), "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains('3'));
}

#[test]
fn short_history_exits_with_warm_up_code() {
    let dir = TempDir::new().unwrap();
    let m = market(dir.path(), 5, 8);
    let res = backtest(&m, &dir.path().join("bt"), &[]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn outputs_are_protected_without_force() {
    let dir = TempDir::new().unwrap();
    let m = market(dir.path(), 2, 9);
    let again = spotdress(&["synth", "--out", s(&m), "--days", "2", "--seed", "9"]);
    assert_eq!(code(&again), 1);
    let forced = spotdress(&["--force", "synth", "--out", s(&m), "--days", "2", "--seed", "9"]);
    assert_eq!(code(&forced), 0);
}

#[test]
fn backtest_is_deterministic_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let m = market(dir.path(), 30, 10);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&backtest(&m, &a, &[])), 0);
    assert_eq!(code(&backtest(&m, &b, &[])), 0);
    for f in ["scores.csv", "forecasts.csv", "aggregates.csv", "gaps.csv", "reliability.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(data_lines(&a.join("aggregates.csv")).len(), 3);
    assert_eq!(data_lines(&a.join("aggregates_by_hour.csv")).len(), 72);

    let before = fs::read(a.join("scores.csv")).unwrap();
    let res = spotdress(&["rerun", "--manifest", s(&a.join("manifest.json"))]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read(a.join("scores.csv")).unwrap(), before);
}

#[test]
fn excluded_dates_are_not_scored() {
    let dir = TempDir::new().unwrap();
    let m = market(dir.path(), 25, 11);
    let out = dir.path().join("bt");
    let res = backtest(&m, &out, &["--exclude-dates", "2016-01-22,2016-01-23"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let scores = data_lines(&out.join("scores.csv"));
    assert!(!scores.is_empty());
    assert!(scores.iter().all(|l| !l.starts_with("2016-01-22") && !l.starts_with("2016-01-23")));
    assert!(scores.iter().any(|l| l.starts_with("2016-01-24")));
}

#[test]
fn permtest_of_a_model_against_itself_does_not_reject() {
    let dir = TempDir::new().unwrap();
    let m = market(dir.path(), 25, 12);
    let out = dir.path().join("bt");
    assert_eq!(code(&backtest(&m, &out, &[])), 0);
    let res = spotdress(&[
        "permtest",
        "--scores",
        s(&out.join("scores.csv")),
        "--model-a",
        "gaussian",
        "--model-b",
        "gaussian",
        "--resamples",
        "500",
    ]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("p_value=1\n"), "{text}");
    assert!(text.contains("reject=false"));

    let res = spotdress(&[
        "permtest",
        "--scores",
        s(&out.join("scores.csv")),
        "--model-a",
        "gaussian",
        "--model-b",
        "missing",
    ]);
    assert_eq!(code(&res), 1);
}
