//! Synthetic day-ahead market generator.
//!
//! Produces Nord-Pool-like hourly data: an ask curve that is mostly flat
//! with a steep tail, a near-vertical bid curve at the realized demand, the
//! resulting settlement, and a point forecast. The forecast is built in
//! volume space so that the volume residual `e = v_hat - v` is Gaussian with
//! moments that depend on the curve feature `delta_plus` exactly as
//! [`truth_moments`] reports. The ask curve only moves by a horizontal shift
//! from one day to the next, which leaves `delta_plus` and the pushforward
//! through the previous day's curve unchanged in law.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{delta_features, settle, Side, StepCurve, PRICE_CAP, PRICE_FLOOR};
use crate::dataset::{Dataset, HourRecord, HOURS_PER_DAY};
use crate::error::{Error, Result};
use crate::stats::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupplyShape {
    /// First volume of the ask curve, MWh.
    pub volume_start: f64,
    pub volume_span: f64,
    /// Breakpoints per ask curve.
    pub steps: usize,
    pub flat_price_low: f64,
    pub flat_price_high: f64,
    /// Volume where the steep tail begins.
    pub kink_volume: f64,
    pub tail_exponent: f64,
    pub price_cap: f64,
    /// Standard deviation of the daily horizontal curve shift, MWh.
    pub shift_sd: f64,
    /// Half-width of the bid curve's steep segment, MWh.
    pub bid_half_width: f64,
}

impl Default for SupplyShape {
    fn default() -> Self {
        SupplyShape {
            volume_start: 5_000.0,
            volume_span: 60_000.0,
            steps: 200,
            flat_price_low: 15.0,
            flat_price_high: 35.0,
            kink_volume: 45_000.0,
            tail_exponent: 3.0,
            price_cap: PRICE_CAP,
            shift_sd: 300.0,
            bid_half_width: 1.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandProcess {
    pub base: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub annual_amplitude: f64,
    /// Hour-to-hour AR(1) coefficient.
    pub ar_coef: f64,
    pub ar_sd: f64,
    /// Probability that a day is a spike day.
    pub spike_prob: f64,
    /// Mean extra demand on spike days, MWh.
    pub spike_magnitude: f64,
}

impl Default for DemandProcess {
    fn default() -> Self {
        DemandProcess {
            base: 30_000.0,
            daily_amplitude: 3_000.0,
            weekly_amplitude: 1_000.0,
            annual_amplitude: 4_000.0,
            ar_coef: 0.95,
            ar_sd: 500.0,
            spike_prob: 0.08,
            spike_magnitude: 16_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastErrors {
    /// Residual sd once `delta_plus >= kink_scale`.
    pub sigma_tail: f64,
    /// Residual sd as `delta_plus -> 0`.
    pub sigma_kink_min: f64,
    /// Residual mean as `delta_plus -> 0`; zero from `kink_scale` on.
    pub kink_mean: f64,
    pub kink_scale: f64,
    /// Price step for the generator's own `delta_plus`.
    pub m: f64,
    /// Extra Gaussian noise on the price forecast, EUR/MWh.
    pub price_noise_sd: f64,
}

impl Default for ForecastErrors {
    fn default() -> Self {
        ForecastErrors {
            sigma_tail: 1_500.0,
            sigma_kink_min: 500.0,
            kink_mean: -500.0,
            kink_scale: 6_150.0,
            m: 50.0,
            price_noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_days: u32,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub supply: SupplyShape,
    pub demand: DemandProcess,
    pub errors: ForecastErrors,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_days: 600,
            seed: 20160101,
            start_date: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            supply: SupplyShape::default(),
            demand: DemandProcess::default(),
            errors: ForecastErrors::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.supply;
        let d = &self.demand;
        let e = &self.errors;
        let positive = [
            ("supply.volume_span", s.volume_span),
            ("supply.flat_price_high", s.flat_price_high),
            ("supply.tail_exponent", s.tail_exponent),
            ("supply.bid_half_width", s.bid_half_width),
            ("demand.base", d.base),
            ("errors.sigma_tail", e.sigma_tail),
            ("errors.sigma_kink_min", e.sigma_kink_min),
            ("errors.kink_scale", e.kink_scale),
            ("errors.m", e.m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("supply.shift_sd", s.shift_sd),
            ("demand.daily_amplitude", d.daily_amplitude),
            ("demand.weekly_amplitude", d.weekly_amplitude),
            ("demand.annual_amplitude", d.annual_amplitude),
            ("demand.ar_sd", d.ar_sd),
            ("demand.spike_magnitude", d.spike_magnitude),
            ("errors.price_noise_sd", e.price_noise_sd),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.n_days == 0 {
            return Err(Error::Config("n_days must be positive".into()));
        }
        if s.steps < 2 {
            return Err(Error::Config("supply.steps must be at least 2".into()));
        }
        if !(d.ar_coef > -1.0 && d.ar_coef < 1.0) {
            return Err(Error::Config(format!("demand.ar_coef must lie in (-1, 1), got {}", d.ar_coef)));
        }
        if !(0.0..=1.0).contains(&d.spike_prob) {
            return Err(Error::Config(format!(
                "demand.spike_prob must lie in [0, 1], got {}",
                d.spike_prob
            )));
        }
        let end = s.volume_start + s.volume_span;
        if !(s.kink_volume > s.volume_start && s.kink_volume < end) {
            return Err(Error::Config("supply.kink_volume must lie inside the curve".into()));
        }
        if !(PRICE_FLOOR <= s.flat_price_low
            && s.flat_price_low <= s.flat_price_high
            && s.flat_price_high <= s.price_cap
            && s.price_cap <= PRICE_CAP)
        {
            return Err(Error::Config("supply prices must satisfy floor <= low <= high <= cap <= 3000".into()));
        }
        Ok(())
    }
}

/// True mean and standard deviation of the volume residual at `delta_plus`.
pub fn truth_moments(config: &SynthConfig, delta_plus: f64) -> (f64, f64) {
    let e = &config.errors;
    let t = (delta_plus / e.kink_scale).clamp(0.0, 1.0);
    let sigma = e.sigma_kink_min + (e.sigma_tail - e.sigma_kink_min) * t;
    let mu = e.kink_mean * (1.0 - t);
    (mu, sigma)
}

/// The unshifted ask curve shared by every hour.
pub fn base_ask_curve(shape: &SupplyShape) -> Result<StepCurve> {
    let end = shape.volume_start + shape.volume_span;
    let price = |v: f64| -> f64 {
        let p = if v <= shape.kink_volume {
            let x = (v - shape.volume_start) / (shape.kink_volume - shape.volume_start);
            shape.flat_price_low + (shape.flat_price_high - shape.flat_price_low) * x
        } else {
            let x = (v - shape.kink_volume) / (end - shape.kink_volume);
            shape.flat_price_high + (shape.price_cap - shape.flat_price_high) * x.powf(shape.tail_exponent)
        };
        (p.min(shape.price_cap) * 100.0).round() / 100.0
    };
    let n = shape.steps;
    let at = |i: usize| shape.volume_start + shape.volume_span * i as f64 / n as f64;
    let mut points: Vec<(f64, f64)> = (0..n).map(|i| (at(i), price(at(i + 1)))).collect();
    // closing breakpoint so the domain end survives a CSV round trip
    points.push((end, points[n - 1].1));
    Ok(StepCurve::new(Side::Ask, &points)?)
}

/// Near-vertical demand curve crossing the price axis around `demand`.
fn bid_curve(ask: &StepCurve, demand: f64, half_width: f64) -> Result<StepCurve> {
    const STEPS: usize = 70;
    let mut points = Vec::with_capacity(STEPS + 3);
    points.push((ask.start(), PRICE_CAP));
    for i in 0..=STEPS {
        let v = demand - half_width + 2.0 * half_width * i as f64 / STEPS as f64;
        let p = PRICE_CAP - (PRICE_CAP - PRICE_FLOOR) * i as f64 / STEPS as f64;
        points.push((v, p));
    }
    points.push((ask.end(), PRICE_FLOOR));
    Ok(StepCurve::new(Side::Bid, &points)?)
}

/// Forecast (expected) demand for every hour of every day, MWh.
fn demand_path(config: &SynthConfig) -> Vec<[f64; 24]> {
    let d = &config.demand;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[u64::MAX]));
    let innovations = Normal::new(0.0, d.ar_sd.max(f64::MIN_POSITIVE)).unwrap();
    let mut ar = 0.0;
    (0..config.n_days)
        .map(|day| {
            let date = config.start_date + Duration::days(i64::from(day));
            let annual = d.annual_amplitude * (2.0 * PI * f64::from(date.ordinal0()) / 365.25).cos();
            let weekly = match date.weekday() {
                Weekday::Sat | Weekday::Sun => -d.weekly_amplitude,
                _ => 0.4 * d.weekly_amplitude,
            };
            let spike = if rng.random::<f64>() < d.spike_prob {
                d.spike_magnitude * rng.random_range(0.6..1.4)
            } else {
                0.0
            };
            let mut hours = [0.0; 24];
            for (h, slot) in hours.iter_mut().enumerate() {
                let daily = -d.daily_amplitude * (2.0 * PI * h as f64 / 24.0).cos();
                let eps = if d.ar_sd > 0.0 { innovations.sample(&mut rng) } else { 0.0 };
                ar = d.ar_coef * ar + eps;
                *slot = d.base + annual + weekly + daily + ar + spike;
            }
            hours
        })
        .collect()
}

/// Generates the full dataset. Deterministic in `config`.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let base = base_ask_curve(&config.supply)?;
    let path = demand_path(config);
    let days: Vec<Vec<HourRecord>> = path
        .par_iter()
        .enumerate()
        .map(|(day, demand)| generate_day(config, &base, day as u32, demand))
        .collect::<Result<_>>()?;
    Ok(days.into_iter().flatten().collect())
}

fn generate_day(
    config: &SynthConfig,
    base: &StepCurve,
    day: u32,
    demand: &[f64; 24],
) -> Result<Vec<HourRecord>> {
    let shape = &config.supply;
    let errs = &config.errors;
    let date = config.start_date + Duration::days(i64::from(day));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[u64::from(day)]));
    let mut out = Vec::with_capacity(usize::from(HOURS_PER_DAY));
    for (h, &expected) in demand.iter().enumerate() {
        let shift: f64 = shape.shift_sd * rng.sample::<f64, _>(StandardNormal);
        let ask = base.shifted(shift);
        let noise: f64 = errs.price_noise_sd * rng.sample::<f64, _>(StandardNormal);
        let p_hat = ask.eval(expected) + noise;
        let v_hat = ask.inverse(p_hat).volume;
        let feature = delta_features(&ask, p_hat, errs.m)?;
        let (mu, sigma) = truth_moments(config, feature.delta_plus);
        let e = mu + sigma * rng.sample::<f64, _>(StandardNormal);
        let margin = shape.bid_half_width + 1.0;
        let realized = (v_hat - e).clamp(ask.start() + margin, ask.end() - margin);
        let bid = bid_curve(&ask, realized, shape.bid_half_width)?;
        let s = settle(&bid, &ask)?;
        out.push(HourRecord {
            date,
            hour: h as u8 + 1,
            bid: Some(bid),
            ask: Some(ask),
            price: Some(s.price),
            volume: Some(s.volume),
            p_hat: Some(p_hat),
        });
    }
    Ok(out)
}
