//! Volume residuals and the regime-switched Gaussian volume-error model.
//!
//! Historic point forecasts are mapped to volume through the same day's ask
//! curve, `v_hat = s^-1(p_hat)`, and compared against the settled volume:
//! `e = v_hat - v`. The error law for a new forecast is Gaussian with
//! moments picked by the curve feature `delta_plus`:
//!
//! * `delta_plus > delta0` (tail regime): mean and standard deviation of
//!   the same hour's residuals over the trailing window;
//! * `delta_plus <= delta0` (kink regime): mean and standard deviation of
//!   the `knn` kink-regime residuals, pooled over all hours, whose
//!   `delta_plus` ranks closest to the query.

use std::fmt;

use chrono::{Duration, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::curves::{delta_features, Side};
use crate::dataset::HourRecord;
use crate::error::{Error, Result};
use crate::stats::{norm_cdf, norm_quantile, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeResidual {
    pub date: NaiveDate,
    pub hour: u8,
    /// `v_hat - v`, MWh.
    #[serde(rename = "e_mwh")]
    pub e: f64,
    #[serde(rename = "delta_plus_mwh")]
    pub delta_plus: f64,
    #[serde(rename = "p_hat_eur")]
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Price step used for the curve feature, EUR/MWh.
    pub m: f64,
    /// Regime threshold on `delta_plus`, MWh.
    pub delta0: f64,
    pub tail_window_days: u32,
    pub knn: usize,
    pub diagnostic_knn: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            m: 50.0,
            delta0: 6150.0,
            tail_window_days: 120,
            knn: 100,
            diagnostic_knn: 500,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} must be strictly positive")));
        if !(self.m > 0.0 && self.m.is_finite()) {
            return bad("m");
        }
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return bad("delta0");
        }
        if self.tail_window_days == 0 {
            return bad("tail_window_days");
        }
        if self.knn == 0 {
            return bad("knn");
        }
        if self.diagnostic_knn == 0 {
            return bad("diagnostic_knn");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Kink,
    Tail,
}

/// Distribution of the volume residual `e = v_hat - v` for one forecast.
pub trait ErrorLaw: fmt::Debug + Send + Sync {
    fn cdf(&self, e: f64) -> f64;
    fn quantile(&self, u: f64) -> f64;
    fn mean(&self) -> f64;
    fn std_dev(&self) -> f64;
}

/// Gaussian volume-error law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub regime: Regime,
}

impl ErrorDistribution {
    pub fn new(mu: f64, sigma: f64, regime: Regime) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "volume error needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
            )));
        }
        Ok(ErrorDistribution { mu, sigma, regime })
    }
}

impl ErrorLaw for ErrorDistribution {
    fn cdf(&self, e: f64) -> f64 {
        norm_cdf((e - self.mu) / self.sigma)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.mu + self.sigma * norm_quantile(u)
    }

    fn mean(&self) -> f64 {
        self.mu
    }

    fn std_dev(&self) -> f64 {
        self.sigma
    }
}

/// Residuals for every record with a same-day ask curve, settled volume and
/// point forecast. Incomplete records are skipped with a warning.
pub fn compute_residuals<'a, I>(history: I, m: f64) -> Vec<VolumeResidual>
where
    I: IntoIterator<Item = &'a HourRecord>,
{
    let mut out = Vec::new();
    for rec in history {
        let (Some(ask), Some(v), Some(p_hat)) = (rec.ask.as_ref(), rec.volume, rec.p_hat) else {
            warn!(
                "{} hour {}: no residual (ask curve, volume or forecast missing)",
                rec.date, rec.hour
            );
            continue;
        };
        if ask.side() != Side::Ask || !v.is_finite() || !p_hat.is_finite() {
            warn!("{} hour {}: malformed residual inputs skipped", rec.date, rec.hour);
            continue;
        }
        let v_hat = ask.inverse(p_hat).volume;
        let feature = match delta_features(ask, p_hat, m) {
            Ok(f) => f,
            Err(err) => {
                warn!("{} hour {}: {err}", rec.date, rec.hour);
                continue;
            }
        };
        out.push(VolumeResidual {
            date: rec.date,
            hour: rec.hour,
            e: v_hat - v,
            delta_plus: feature.delta_plus,
            p_hat,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailMoments {
    pub mu: f64,
    pub tau: f64,
    pub count: usize,
}

/// Sample mean and standard deviation of `hour`'s residuals dated in
/// `[asof - window_days, asof)`.
pub fn fit_tail_moments(
    residuals: &[VolumeResidual],
    hour: u8,
    asof: NaiveDate,
    window_days: u32,
) -> Result<TailMoments> {
    let from = asof - Duration::days(i64::from(window_days));
    let m: Moments = residuals
        .iter()
        .filter(|r| r.hour == hour && r.date < asof && r.date >= from)
        .map(|r| r.e)
        .collect();
    tail_from_moments(m)
}

fn tail_from_moments(m: Moments) -> Result<TailMoments> {
    if m.count() < 2 {
        return Err(Error::insufficient("tail-regime moments", 2, m.count()));
    }
    Ok(TailMoments {
        mu: m.mean(),
        tau: m.std_dev(),
        count: m.count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnMoments {
    pub mu: f64,
    pub gamma: f64,
    /// Index range `[start, start + k)` of the window in the sorted order.
    pub start: usize,
}

/// Residuals sorted by `(delta_plus, date, hour)`.
#[derive(Debug, Clone, Default)]
pub struct DeltaIndex {
    keys: Vec<f64>,
    errors: Vec<f64>,
}

impl DeltaIndex {
    pub fn new<'a, I>(residuals: I) -> Self
    where
        I: IntoIterator<Item = &'a VolumeResidual>,
    {
        let mut rows: Vec<&VolumeResidual> = residuals.into_iter().collect();
        rows.sort_by(|a, b| {
            a.delta_plus
                .total_cmp(&b.delta_plus)
                .then(a.date.cmp(&b.date))
                .then(a.hour.cmp(&b.hour))
        });
        DeltaIndex {
            keys: rows.iter().map(|r| r.delta_plus).collect(),
            errors: rows.iter().map(|r| r.e).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[f64] {
        &self.keys
    }

    /// Start of the `k`-window centred on sorted position `center`, moved
    /// inward so it always holds exactly `k` points.
    fn window_start(&self, center: usize, k: usize) -> usize {
        center.saturating_sub(k / 2).min(self.len() - k)
    }

    fn window(&self, start: usize, k: usize) -> Moments {
        self.errors[start..start + k].iter().copied().collect()
    }

    pub fn query(&self, delta_plus: f64, k: usize) -> Result<KnnMoments> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "knn window needs at least 2 neighbours, got {k}"
            )));
        }
        if self.len() < k {
            return Err(Error::insufficient("kink-regime neighbours", k, self.len()));
        }
        let center = self.keys.partition_point(|&x| x < delta_plus);
        let start = self.window_start(center, k);
        let m = self.window(start, k);
        Ok(KnnMoments {
            mu: m.mean(),
            gamma: m.std_dev(),
            start,
        })
    }
}

/// Moments of the `k` residuals whose `delta_plus` ranks around the query.
///
/// The caller supplies the residual pool (already restricted to the strict
/// past and, for the kink regime, to `delta_plus <= delta0`).
pub fn fit_knn_moments(
    residuals: &[VolumeResidual],
    query_delta_plus: f64,
    k: usize,
) -> Result<KnnMoments> {
    DeltaIndex::new(residuals).query(query_delta_plus, k)
}

/// Fitted state for one forecast day: everything needed to produce error
/// distributions from residuals dated strictly before `asof`.
#[derive(Debug, Clone)]
pub struct ResidualHistory {
    asof: NaiveDate,
    config: ModelConfig,
    tail: Vec<Moments>,
    kink: DeltaIndex,
}

impl ResidualHistory {
    pub fn new(config: &ModelConfig, residuals: &[VolumeResidual], asof: NaiveDate) -> Self {
        let from = asof - Duration::days(i64::from(config.tail_window_days));
        let mut tail = vec![Moments::default(); 25];
        for r in residuals.iter().filter(|r| r.date < asof && r.date >= from) {
            if let Some(m) = tail.get_mut(usize::from(r.hour)) {
                m.push(r.e);
            }
        }
        let kink = DeltaIndex::new(
            residuals
                .iter()
                .filter(|r| r.date < asof && r.delta_plus <= config.delta0),
        );
        ResidualHistory {
            asof,
            config: config.clone(),
            tail,
            kink,
        }
    }

    pub fn asof(&self) -> NaiveDate {
        self.asof
    }

    pub fn kink_pool_size(&self) -> usize {
        self.kink.len()
    }

    pub fn tail_moments(&self, hour: u8) -> Result<TailMoments> {
        tail_from_moments(
            self.tail
                .get(usize::from(hour))
                .copied()
                .unwrap_or_default(),
        )
    }

    pub fn knn_moments(&self, delta_plus: f64) -> Result<KnnMoments> {
        self.kink.query(delta_plus, self.config.knn)
    }

    pub fn error_distribution(&self, hour: u8, delta_plus_pred: f64) -> Result<ErrorDistribution> {
        if delta_plus_pred > self.config.delta0 {
            let t = self.tail_moments(hour)?;
            ErrorDistribution::new(t.mu, t.tau, Regime::Tail)
        } else {
            let k = self.knn_moments(delta_plus_pred)?;
            ErrorDistribution::new(k.mu, k.gamma, Regime::Kink)
        }
    }
}

/// Regime-switched error law for a forecast at `(asof, hour)` with curve
/// feature `delta_plus_pred`, fitted on residuals dated before `asof`.
pub fn error_distribution(
    config: &ModelConfig,
    residuals: &[VolumeResidual],
    asof: NaiveDate,
    hour: u8,
    delta_plus_pred: f64,
) -> Result<ErrorDistribution> {
    ResidualHistory::new(config, residuals, asof).error_distribution(hour, delta_plus_pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticPoint {
    #[serde(rename = "delta_plus_mwh")]
    pub delta_plus: f64,
    #[serde(rename = "mean_mwh")]
    pub mean: f64,
    #[serde(rename = "std_mwh")]
    pub std_dev: f64,
}

/// Moving `k`-neighbour mean and standard deviation of the residuals along
/// the sorted `delta_plus` axis, one point per residual.
pub fn knn_diagnostic_curve(residuals: &[VolumeResidual], k: usize) -> Result<Vec<DiagnosticPoint>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "diagnostic window needs at least 2 neighbours, got {k}"
        )));
    }
    let index = DeltaIndex::new(residuals);
    if index.len() < k {
        return Err(Error::insufficient("diagnostic neighbours", k, index.len()));
    }
    Ok((0..index.len())
        .map(|i| {
            let m = index.window(index.window_start(i, k), k);
            DiagnosticPoint {
                delta_plus: index.keys[i],
                mean: m.mean(),
                std_dev: m.std_dev(),
            }
        })
        .collect())
}
