//! Rolling-origin backtest: every forecast day is fitted on strictly earlier
//! data, forecast for all hours, and scored against the realized price.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate};
use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::delta_features;
use crate::dataset::Dataset;
use crate::dressing::{
    dress, EmpiricalBenchmark, GaussianBenchmark, PricePredictiveDistribution, PriceResidual,
};
use crate::error::{Error, Result};
use crate::stats::derive_seed;
use crate::verification::{crps, pit, pit_histogram, quantile_score, reliability, ScoreRecord};
use crate::volmodel::{compute_residuals, ModelConfig, ResidualHistory, VolumeResidual};

/// Quantile levels written to the forecast table.
pub const FORECAST_LEVELS: [f64; 7] = [0.05, 0.10, 0.20, 0.50, 0.80, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// Seed for the randomized PIT.
    pub seed: u64,
    pub first_day: Option<NaiveDate>,
    pub last_day: Option<NaiveDate>,
    /// Days that are not forecast or scored (they still serve as history).
    pub exclude_dates: Vec<NaiveDate>,
    pub exceed_threshold: f64,
    /// How far back to look for an ask curve when the previous day lacks one.
    pub max_curve_lag_days: u32,
    pub pit_bins: usize,
    pub reliability_bins: usize,
    pub reliability_min_prob: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            seed: 1,
            first_day: None,
            last_day: None,
            exclude_dates: Vec::new(),
            exceed_threshold: 50.0,
            max_curve_lag_days: 7,
            pit_bins: 10,
            reliability_bins: 10,
            reliability_min_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    BidAsk,
    Gaussian,
    Empirical,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BidAsk => "bidask",
            ModelKind::Gaussian => "gaussian",
            ModelKind::Empirical => "empirical",
        }
    }

    fn code(self) -> u64 {
        match self {
            ModelKind::BidAsk => 0,
            ModelKind::Gaussian => 1,
            ModelKind::Empirical => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub label: String,
    pub kind: ModelKind,
}

impl ModelEntry {
    pub fn new(kind: ModelKind) -> Self {
        ModelEntry {
            label: kind.name().to_string(),
            kind,
        }
    }

    /// The bid/ask model and both benchmarks.
    pub fn standard() -> Vec<ModelEntry> {
        [ModelKind::BidAsk, ModelKind::Gaussian, ModelKind::Empirical]
            .into_iter()
            .map(ModelEntry::new)
            .collect()
    }
}

/// A validated backtest over a borrowed dataset.
#[derive(Debug, Clone)]
pub struct BacktestPlan<'a> {
    dataset: &'a Dataset,
    models: Vec<ModelEntry>,
    model_config: ModelConfig,
    config: BacktestConfig,
    first_day: NaiveDate,
    last_day: NaiveDate,
}

impl<'a> BacktestPlan<'a> {
    /// Checks the model list, the day range and the warm-up history. The
    /// first day defaults to the earliest day with a full tail window of
    /// history; the last day defaults to the last day in the data.
    pub fn new(
        dataset: &'a Dataset,
        models: Vec<ModelEntry>,
        model_config: ModelConfig,
        config: BacktestConfig,
    ) -> Result<Self> {
        model_config.validate()?;
        if models.is_empty() {
            return Err(Error::InvalidParameter("backtest needs at least one model".into()));
        }
        if !(config.exceed_threshold.is_finite()) {
            return Err(Error::InvalidParameter("exceedance threshold must be finite".into()));
        }
        let (Some(data_first), Some(data_last)) = (dataset.first_date(), dataset.last_date()) else {
            return Err(Error::insufficient("backtest days", 1, 0));
        };
        let window = i64::from(model_config.tail_window_days);
        let first_day = config.first_day.unwrap_or(data_first + Duration::days(window));
        let last_day = config.last_day.unwrap_or(data_last);
        if first_day > last_day && config.first_day.is_none() {
            return Err(Error::WarmUp {
                first_day,
                days_needed: model_config.tail_window_days,
                days_available: ((data_last - data_first).num_days() + 1) as u32,
                residuals_needed: model_config.knn,
                residuals_available: compute_residuals(dataset.iter(), model_config.m).len(),
            });
        }
        if first_day > last_day {
            return Err(Error::InvalidParameter(format!(
                "first forecast day {first_day} is after last day {last_day}"
            )));
        }
        let days_available = (first_day - data_first).num_days().max(0) as u32;
        let residuals_available =
            compute_residuals(dataset.before(first_day), model_config.m).len();
        if days_available < model_config.tail_window_days || residuals_available < model_config.knn {
            return Err(Error::WarmUp {
                first_day,
                days_needed: model_config.tail_window_days,
                days_available,
                residuals_needed: model_config.knn,
                residuals_available,
            });
        }
        let config = BacktestConfig {
            first_day: Some(first_day),
            last_day: Some(last_day),
            ..config
        };
        Ok(BacktestPlan {
            dataset,
            models,
            model_config,
            config,
            first_day,
            last_day,
        })
    }

    pub fn first_day(&self) -> NaiveDate {
        self.first_day
    }

    pub fn last_day(&self) -> NaiveDate {
        self.last_day
    }

    pub fn models(&self) -> &[ModelEntry] {
        &self.models
    }

    /// Days that will be forecast, in order.
    pub fn forecast_days(&self) -> Vec<NaiveDate> {
        let excluded: BTreeSet<NaiveDate> = self.config.exclude_dates.iter().copied().collect();
        self.dataset
            .dates()
            .into_iter()
            .filter(|d| *d >= self.first_day && *d <= self.last_day && !excluded.contains(d))
            .collect()
    }
}

/// Predictive quantiles and exceedance probability for one hour and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub hour: u8,
    pub model: String,
    pub q05: f64,
    pub q10: f64,
    pub q20: f64,
    pub q50: f64,
    pub q80: f64,
    pub q90: f64,
    pub q95: f64,
    pub exceed_50: f64,
}

/// An hour (and possibly a single model) that could not be forecast or
/// scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub date: NaiveDate,
    pub hour: u8,
    /// Empty when the gap affects every model.
    pub model: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupBy {
    Model,
    ModelHour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    /// Set only for per-hour grouping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hour: Option<u8>,
    pub n: usize,
    pub crps: f64,
    pub qs10: f64,
    pub qs90: f64,
}

/// What a result was computed from. The backtest config carries the
/// resolved day range, so a plan rebuilt from it repeats the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_config: ModelConfig,
    pub backtest_config: BacktestConfig,
    pub models: Vec<ModelEntry>,
    pub first_day: NaiveDate,
    pub last_day: NaiveDate,
    pub data_first: NaiveDate,
    pub data_last: NaiveDate,
    pub forecast_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub scores: Vec<ScoreRecord>,
    pub forecasts: Vec<ForecastRecord>,
    pub gaps: Vec<Gap>,
    pub aggregates: Vec<AggregateRow>,
    pub metadata: RunMetadata,
}

#[derive(Default)]
struct DayOutput {
    scores: Vec<ScoreRecord>,
    forecasts: Vec<ForecastRecord>,
    gaps: Vec<Gap>,
}

/// Inputs shared by every forecast day. Each row depends only on its own
/// day, so the tables can be built once and filtered by date.
struct Tables {
    volume: Vec<VolumeResidual>,
    price: Vec<PriceResidual>,
}

impl Tables {
    fn build(ds: &Dataset, m: f64) -> Self {
        let volume = compute_residuals(ds.iter(), m);
        let price = ds
            .iter()
            .filter_map(|r| {
                Some(PriceResidual {
                    date: r.date,
                    hour: r.hour,
                    r: r.p_hat? - r.price?,
                })
            })
            .collect();
        Tables { volume, price }
    }

    fn price_before(&self, date: NaiveDate) -> &[PriceResidual] {
        &self.price[..self.price.partition_point(|r| r.date < date)]
    }
}

/// Runs the backtest with days processed in parallel.
pub fn run(plan: &BacktestPlan) -> Result<BacktestResult> {
    execute(plan, true)
}

/// Same result as [`run`], one day after another.
pub fn run_sequential(plan: &BacktestPlan) -> Result<BacktestResult> {
    execute(plan, false)
}

fn execute(plan: &BacktestPlan, parallel: bool) -> Result<BacktestResult> {
    let tables = Tables::build(plan.dataset, plan.model_config.m);
    let days = plan.forecast_days();
    let outputs: Vec<DayOutput> = if parallel {
        days.par_iter().map(|&d| forecast_day(plan, &tables, d)).collect()
    } else {
        days.iter().map(|&d| forecast_day(plan, &tables, d)).collect()
    };
    let mut scores = Vec::new();
    let mut forecasts = Vec::new();
    let mut gaps = Vec::new();
    for out in outputs {
        scores.extend(out.scores);
        forecasts.extend(out.forecasts);
        gaps.extend(out.gaps);
    }
    if !gaps.is_empty() {
        warn!("backtest skipped {} hour/model combinations; see the gap table", gaps.len());
    }
    let aggregates = aggregate(&scores, GroupBy::Model);
    Ok(BacktestResult {
        scores,
        forecasts,
        gaps,
        aggregates,
        metadata: RunMetadata {
            model_config: plan.model_config.clone(),
            backtest_config: plan.config.clone(),
            models: plan.models.clone(),
            first_day: plan.first_day,
            last_day: plan.last_day,
            data_first: plan.dataset.first_date().unwrap(),
            data_last: plan.dataset.last_date().unwrap(),
            forecast_days: days.len(),
        },
    })
}

fn forecast_day(plan: &BacktestPlan, tables: &Tables, date: NaiveDate) -> DayOutput {
    let mut out = DayOutput::default();
    let gap = |out: &mut DayOutput, hour: u8, model: &str, reason: String| {
        debug!("{date} hour {hour} {model}: {reason}");
        out.gaps.push(Gap {
            date,
            hour,
            model: model.to_string(),
            reason,
        });
    };

    let kinds: BTreeSet<ModelKind> = plan.models.iter().map(|m| m.kind).collect();
    let history = kinds
        .contains(&ModelKind::BidAsk)
        .then(|| ResidualHistory::new(&plan.model_config, &tables.volume, date));
    let past_prices = tables.price_before(date);
    let gaussian = kinds
        .contains(&ModelKind::Gaussian)
        .then(|| GaussianBenchmark::fit(past_prices));
    let empirical = kinds
        .contains(&ModelKind::Empirical)
        .then(|| EmpiricalBenchmark::fit(past_prices));

    for rec in plan.dataset.day(date) {
        let hour = rec.hour;
        let Some(p_hat) = rec.p_hat else {
            gap(&mut out, hour, "", "no point forecast".into());
            continue;
        };
        if rec.price.is_none() {
            gap(&mut out, hour, "", "no realized price".into());
        }
        let mut built: HashMap<ModelKind, Result<PricePredictiveDistribution, String>> = HashMap::new();
        for entry in &plan.models {
            let dist = built
                .entry(entry.kind)
                .or_insert_with(|| match entry.kind {
                    ModelKind::BidAsk => bidask_forecast(plan, history.as_ref().unwrap(), date, hour, p_hat),
                    ModelKind::Gaussian => match gaussian.as_ref().unwrap() {
                        Ok(g) => Ok(g.forecast(p_hat)),
                        Err(err) => Err(err.to_string()),
                    },
                    ModelKind::Empirical => match empirical.as_ref().unwrap() {
                        Ok(e) => Ok(e.forecast(p_hat)),
                        Err(err) => Err(err.to_string()),
                    },
                })
                .clone();
            let dist = match dist {
                Ok(d) => d,
                Err(reason) => {
                    gap(&mut out, hour, &entry.label, reason);
                    continue;
                }
            };
            let q = FORECAST_LEVELS.map(|tau| dist.quantile(tau));
            let exceed_prob = dist.exceedance(plan.config.exceed_threshold);
            out.forecasts.push(ForecastRecord {
                date,
                hour,
                model: entry.label.clone(),
                q05: q[0],
                q10: q[1],
                q20: q[2],
                q50: q[3],
                q80: q[4],
                q90: q[5],
                q95: q[6],
                exceed_50: exceed_prob,
            });
            let Some(price) = rec.price else { continue };
            let seed = derive_seed(
                plan.config.seed,
                &[date.num_days_from_ce() as u64, u64::from(hour), entry.kind.code()],
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            out.scores.push(ScoreRecord {
                date,
                hour,
                model: entry.label.clone(),
                crps: crps(&dist, price),
                qs10: quantile_score(&dist, price, 0.1),
                qs90: quantile_score(&dist, price, 0.9),
                pit: pit(&dist, price, &mut rng),
                exceed_prob,
                exceeded: price > plan.config.exceed_threshold,
            });
        }
    }
    out
}

fn bidask_forecast(
    plan: &BacktestPlan,
    history: &ResidualHistory,
    date: NaiveDate,
    hour: u8,
    p_hat: f64,
) -> Result<PricePredictiveDistribution, String> {
    let lag_limit = plan.config.max_curve_lag_days;
    let Some((ask, lag)) = plan.dataset.latest_ask_before(date, hour, lag_limit) else {
        return Err(format!("no ask curve in the previous {lag_limit} days"));
    };
    if lag > 1 {
        warn!("{date} hour {hour}: using the ask curve from {lag} days earlier");
    }
    let feature = delta_features(ask, p_hat, plan.model_config.m).map_err(|e| e.to_string())?;
    let law = history
        .error_distribution(hour, feature.delta_plus)
        .map_err(|e| e.to_string())?;
    dress(ask, p_hat, Arc::new(law)).map_err(|e| e.to_string())
}

/// Mean scores per model (in first-appearance order) or per model and hour.
pub fn aggregate(records: &[ScoreRecord], by: GroupBy) -> Vec<AggregateRow> {
    let mut index: HashMap<(&str, Option<u8>), usize> = HashMap::new();
    let mut rows: Vec<AggregateRow> = Vec::new();
    for r in records {
        let hour = match by {
            GroupBy::Model => None,
            GroupBy::ModelHour => Some(r.hour),
        };
        let i = *index.entry((r.model.as_str(), hour)).or_insert_with(|| {
            rows.push(AggregateRow {
                model: r.model.clone(),
                hour,
                n: 0,
                crps: 0.0,
                qs10: 0.0,
                qs90: 0.0,
            });
            rows.len() - 1
        });
        let row = &mut rows[i];
        row.n += 1;
        row.crps += r.crps;
        row.qs10 += r.qs10;
        row.qs90 += r.qs90;
    }
    for row in &mut rows {
        let n = row.n as f64;
        row.crps /= n;
        row.qs10 /= n;
        row.qs90 /= n;
    }
    if by == GroupBy::ModelHour {
        let order: HashMap<String, usize> = rows
            .iter()
            .enumerate()
            .rev()
            .map(|(i, r)| (r.model.clone(), i))
            .collect();
        rows.sort_by_key(|r| (order[&r.model], r.hour));
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitBinRow {
    pub model: String,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// PIT histogram per model.
pub fn pit_table(scores: &[ScoreRecord], bins: usize) -> Result<Vec<PitBinRow>> {
    let mut out = Vec::new();
    for model in model_order(scores) {
        let pits: Vec<f64> = scores.iter().filter(|s| s.model == model).map(|s| s.pit).collect();
        for (i, count) in pit_histogram(&pits, bins)?.into_iter().enumerate() {
            out.push(PitBinRow {
                model: model.clone(),
                bin: i + 1,
                lower: i as f64 / bins as f64,
                upper: (i + 1) as f64 / bins as f64,
                count,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub model: String,
    /// Lower cut on forecast probabilities, or none.
    pub min_prob: Option<f64>,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub mean_prob: Option<f64>,
    pub observed_freq: Option<f64>,
    pub count: usize,
}

/// Exceedance reliability per model, with and without the probability cut.
pub fn reliability_table(scores: &[ScoreRecord], bins: usize, min_prob: f64) -> Result<Vec<ReliabilityRow>> {
    let mut out = Vec::new();
    for model in model_order(scores) {
        let recs: Vec<(f64, bool)> = scores
            .iter()
            .filter(|s| s.model == model)
            .map(|s| (s.exceed_prob, s.exceeded))
            .collect();
        for cut in [None, Some(min_prob)] {
            for b in reliability(&recs, bins, cut)? {
                out.push(ReliabilityRow {
                    model: model.clone(),
                    min_prob: cut,
                    bin: b.bin,
                    lower: b.lower,
                    upper: b.upper,
                    mean_prob: b.mean_prob,
                    observed_freq: b.observed_freq,
                    count: b.count,
                });
            }
        }
    }
    Ok(out)
}

fn model_order(scores: &[ScoreRecord]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for s in scores {
        if !seen.contains(&s.model) {
            seen.push(s.model.clone());
        }
    }
    seen
}
