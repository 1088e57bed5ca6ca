use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::Parser;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use spotdress::backtest::{
    aggregate, pit_table, reliability_table, run, BacktestPlan, GroupBy, ModelEntry,
};
use spotdress::config::Config;
use spotdress::curves::{delta_features, settle, PriceLimits};
use spotdress::dataset::Dataset;
use spotdress::io::{self, ObservedRow, CURVES_FILE, FORECASTS_FILE, OBSERVED_FILE};
use spotdress::synthmarket::generate;
use spotdress::verification::{permutation_test, ScoreRecord};
use spotdress::volmodel::{compute_residuals, knn_diagnostic_curve};

use crate::manifest::{beside_file, RunManifest, DIR_MANIFEST};
use crate::{Cli, CliError, Command, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct FeatureRow {
    date: NaiveDate,
    hour: u8,
    p_hat_eur: f64,
    delta_plus_mwh: f64,
    delta_minus_mwh: f64,
    clamped: bool,
}

/// Runs a parsed command line. `args` are recorded in the manifest;
/// `replay` carries the configuration of a manifest being rerun.
pub fn execute(cli: Cli, args: &[String], replay: Option<Config>) -> Result<(), CliError> {
    let g = &cli.global;
    let limits = if g.allow_out_of_range_prices {
        PriceLimits::unbounded()
    } else {
        PriceLimits::default()
    };
    let base = match (&replay, &g.config) {
        (Some(cfg), _) => cfg.clone(),
        (None, Some(path)) => {
            require_inputs(&[path])?;
            Config::load(path)?
        }
        (None, None) => Config::default(),
    };
    let mut config = base.with_overrides(&g.overrides)?;
    let mut manifest = RunManifest {
        command: String::new(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: g.config.clone(),
        inputs: Vec::new(),
        output: PathBuf::new(),
        seed: g.seed,
        args: args.to_vec(),
        effective_config: Config::default(),
    };

    match cli.command {
        Command::Settle { curves, out } => {
            manifest.command = "settle".into();
            require_inputs(&[&curves])?;
            let manifest_path = beside_file(&out);
            guard_outputs(&[&out, &manifest_path], g.force)?;
            let ds = io::load_curves(&curves, limits)?;
            let rows = settle_all(&ds)?;
            if rows.is_empty() {
                return Err(CliError::Core(spotdress::Error::Data {
                    path: curves.display().to_string(),
                    line: 0,
                    message: "no hour has both a bid and an ask curve".into(),
                }));
            }
            io::save_table(&out, &rows)?;
            info!("settled {} hours", rows.len());
            manifest.inputs = vec![curves];
            manifest.output = out;
            manifest.effective_config = config;
            manifest.write(&manifest_path)
        }

        Command::Features {
            curves,
            forecasts,
            observed,
            out,
        } => {
            manifest.command = "features".into();
            let mut inputs = vec![curves.clone(), forecasts.clone()];
            inputs.extend(observed.clone());
            require_inputs(&inputs.iter().collect::<Vec<_>>())?;
            let residuals_path = sibling(&out, "residuals");
            let diagnostic_path = sibling(&out, "diagnostic");
            let manifest_path = beside_file(&out);
            guard_outputs(&[&out, &residuals_path, &diagnostic_path, &manifest_path], g.force)?;

            let mut ds = io::load_curves(&curves, limits)?;
            io::merge_point_forecasts(&mut ds, &io::load_point_forecasts(&forecasts)?);
            match &observed {
                Some(path) => io::merge_observed(&mut ds, &io::load_observed(path)?),
                None => {
                    let settled = settle_all(&ds)?;
                    io::merge_observed(&mut ds, &settled);
                }
            }
            let m = config.model.m;
            let mut features = Vec::new();
            for rec in ds.iter() {
                let Some(ask) = rec.ask.as_ref() else { continue };
                let Some(p_hat) = rec.p_hat else {
                    warn!("{} hour {}: no point forecast, features skipped", rec.date, rec.hour);
                    continue;
                };
                let f = delta_features(ask, p_hat, m)?;
                features.push(FeatureRow {
                    date: rec.date,
                    hour: rec.hour,
                    p_hat_eur: p_hat,
                    delta_plus_mwh: f.delta_plus,
                    delta_minus_mwh: f.delta_minus,
                    clamped: f.clamped,
                });
            }
            let residuals = compute_residuals(ds.iter(), m);
            let diagnostic = knn_diagnostic_curve(&residuals, config.model.diagnostic_knn)?;
            io::save_table(&out, &features)?;
            io::save_table(&residuals_path, &residuals)?;
            io::save_table(&diagnostic_path, &diagnostic)?;
            info!("{} feature rows, {} residuals", features.len(), residuals.len());
            manifest.inputs = inputs;
            manifest.output = out;
            manifest.effective_config = config;
            manifest.write(&manifest_path)
        }

        Command::Backtest {
            curves,
            observed,
            forecasts,
            out,
            exclude_dates,
            first_day,
            last_day,
        } => {
            manifest.command = "backtest".into();
            let inputs = vec![curves.clone(), observed.clone(), forecasts.clone()];
            require_inputs(&inputs.iter().collect::<Vec<_>>())?;
            let files = [
                "scores.csv",
                "forecasts.csv",
                "aggregates.csv",
                "aggregates_by_hour.csv",
                "pit_histogram.csv",
                "reliability.csv",
                "gaps.csv",
                DIR_MANIFEST,
            ];
            prepare_dir(&out, &files, g.force)?;
            if let Some(seed) = g.seed {
                config.backtest.seed = seed;
            }
            config.backtest.exclude_dates.extend(exclude_dates);
            config.backtest.exclude_dates.sort();
            config.backtest.exclude_dates.dedup();
            if first_day.is_some() {
                config.backtest.first_day = first_day;
            }
            if last_day.is_some() {
                config.backtest.last_day = last_day;
            }
            let ds = io::load_market(&curves, &observed, &forecasts, limits)?;
            let plan = BacktestPlan::new(
                &ds,
                ModelEntry::standard(),
                config.model.clone(),
                config.backtest.clone(),
            )?;
            let result = run(&plan)?;
            let bt = &config.backtest;
            io::save_table(&out.join(files[0]), &result.scores)?;
            io::save_table(&out.join(files[1]), &result.forecasts)?;
            io::save_table(&out.join(files[2]), &result.aggregates)?;
            io::save_table(&out.join(files[3]), aggregate(&result.scores, GroupBy::ModelHour))?;
            io::save_table(&out.join(files[4]), pit_table(&result.scores, bt.pit_bins)?)?;
            io::save_table(
                &out.join(files[5]),
                reliability_table(&result.scores, bt.reliability_bins, bt.reliability_min_prob)?,
            )?;
            io::save_table(&out.join(files[6]), &result.gaps)?;
            let mut stdout = std::io::stdout().lock();
            for a in &result.aggregates {
                let _ = writeln!(
                    stdout,
                    "model={} n={} crps={:.6} qs10={:.6} qs90={:.6}",
                    a.model, a.n, a.crps, a.qs10, a.qs90
                );
            }
            manifest.inputs = inputs;
            manifest.output = out.clone();
            manifest.seed = Some(bt.seed);
            manifest.effective_config = config;
            manifest.write(&out.join(DIR_MANIFEST))
        }

        Command::Synth { out, days } => {
            manifest.command = "synth".into();
            prepare_dir(&out, &[CURVES_FILE, OBSERVED_FILE, FORECASTS_FILE, DIR_MANIFEST], g.force)?;
            if let Some(seed) = g.seed {
                config.synth.seed = seed;
            }
            if let Some(n) = days {
                config.synth.n_days = n;
            }
            let ds = generate(&config.synth)?;
            io::write_market(&out, &ds)?;
            info!("wrote {} hours to {}", ds.len(), out.display());
            manifest.output = out.clone();
            manifest.seed = Some(config.synth.seed);
            manifest.effective_config = config;
            manifest.write(&out.join(DIR_MANIFEST))
        }

        Command::Permtest {
            scores,
            model_a,
            model_b,
            metric,
            resamples,
            out,
        } => {
            manifest.command = "permtest".into();
            require_inputs(&[&scores])?;
            if let Some(path) = &out {
                guard_outputs(&[path, &beside_file(path)], g.force)?;
            }
            let records: Vec<ScoreRecord> = io::load_table(&scores)?;
            let (a, b) = paired(&records, &model_a, &model_b, metric)?;
            let seed = g.seed.unwrap_or(config.backtest.seed);
            let res = permutation_test(&a, &b, resamples, seed)?;
            let text = format!(
                "model_a={model_a}\nmodel_b={model_b}\nmetric={}\npairs={}\nobserved={}\nq025={}\nq975={}\np_value={}\nresamples={}\nreject={}\n",
                metric_name(metric),
                a.len(),
                res.observed,
                res.q025,
                res.q975,
                res.p_value,
                res.resamples,
                res.rejects()
            );
            print!("{text}");
            if let Some(path) = out {
                fs::write(&path, &text).map_err(|e| CliError::Core(e.into()))?;
                manifest.inputs = vec![scores];
                manifest.seed = Some(seed);
                manifest.effective_config = config;
                manifest.output = path.clone();
                manifest.write(&beside_file(&path))?;
            }
            Ok(())
        }

        Command::Rerun { manifest: path } => {
            if replay.is_some() {
                return Err(CliError::Usage("a manifest cannot rerun another rerun".into()));
            }
            let recorded = RunManifest::read(&path)?;
            let mut argv = vec!["spotdress".to_string()];
            argv.extend(recorded.args.iter().cloned());
            let mut again = Cli::try_parse_from(&argv)
                .map_err(|e| CliError::Usage(format!("manifest arguments do not parse: {e}")))?;
            if matches!(again.command, Command::Rerun { .. }) {
                return Err(CliError::Usage("a manifest cannot rerun another rerun".into()));
            }
            again.global.force = true;
            execute(again, &recorded.args, Some(recorded.effective_config))
        }
    }
}

fn settle_all(ds: &Dataset) -> Result<Vec<ObservedRow>, CliError> {
    let mut rows = Vec::new();
    for rec in ds.iter() {
        let (Some(bid), Some(ask)) = (rec.bid.as_ref(), rec.ask.as_ref()) else {
            warn!("{} hour {}: only one curve side, not settled", rec.date, rec.hour);
            continue;
        };
        let s = settle(bid, ask)?;
        rows.push(ObservedRow {
            date: rec.date,
            hour: rec.hour,
            price_eur: s.price,
            volume_mwh: s.volume,
        });
    }
    Ok(rows)
}

fn paired(
    records: &[ScoreRecord],
    model_a: &str,
    model_b: &str,
    metric: Metric,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let value = |r: &ScoreRecord| match metric {
        Metric::Crps => r.crps,
        Metric::Qs10 => r.qs10,
        Metric::Qs90 => r.qs90,
    };
    let pick = |model: &str| -> BTreeMap<(NaiveDate, u8), f64> {
        records
            .iter()
            .filter(|r| r.model == model)
            .map(|r| ((r.date, r.hour), value(r)))
            .collect()
    };
    let a = pick(model_a);
    let b = pick(model_b);
    for (name, m) in [(model_a, &a), (model_b, &b)] {
        if m.is_empty() {
            return Err(CliError::Usage(format!("no scores for model `{name}`")));
        }
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (key, x) in &a {
        if let Some(y) = b.get(key) {
            xs.push(*x);
            ys.push(*y);
        }
    }
    Ok((xs, ys))
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Crps => "crps",
        Metric::Qs10 => "qs10",
        Metric::Qs90 => "qs90",
    }
}

/// `out/feat.csv` -> `out/feat_<tag>.csv`.
fn sibling(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}_{tag}.{ext}"))
}

fn require_inputs(paths: &[&PathBuf]) -> Result<(), CliError> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::Usage(format!("input {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn guard_outputs(paths: &[&PathBuf], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(CliError::Usage(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    Ok(())
}

fn prepare_dir(dir: &Path, files: &[&str], force: bool) -> Result<(), CliError> {
    let targets: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
    guard_outputs(&targets.iter().collect::<Vec<_>>(), force)?;
    fs::create_dir_all(dir).map_err(|e| CliError::Core(e.into()))
}
