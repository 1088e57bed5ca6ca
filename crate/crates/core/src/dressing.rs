//! Predictive price distributions.
//!
//! The bid/ask model pushes the volume-error law through the ask curve:
//! the realized volume is `v_hat - e` with `e` drawn from the fitted error
//! law, and the price is the curve evaluated there. Because the curve is a
//! step function the result is an atomic law on the curve's price levels,
//! and its masses are computed exactly from the error CDF at the run
//! boundaries. Volume mass below (above) the curve lands on the first
//! (last) level.
//!
//! The two benchmarks dress the price forecast directly with historic price
//! residuals `r = p_hat - p`: a Gaussian with pooled root-mean-square spread
//! and the empirical residual distribution.

use std::sync::Arc;

use chrono::NaiveDate;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curves::{Clamp, Side, StepCurve};
use crate::error::{Error, Result};
use crate::stats::{norm_cdf, norm_quantile};
use crate::volmodel::ErrorLaw;

/// Finite atomic distribution with strictly increasing support.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms {
    support: Vec<f64>,
    /// `cum[i] = P(X <= support[i])`; the last entry is exactly 1.
    cum: Vec<f64>,
    /// `E|X - X'| / 2` for independent copies.
    half_spread: f64,
}

impl Atoms {
    /// Builds from `(value, weight)` pairs in any order; equal values merge
    /// and weights are normalized.
    pub fn from_weighted(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(Error::InvalidParameter("atomic distribution needs at least one atom".into()));
        }
        if pairs
            .iter()
            .any(|&(x, w)| !x.is_finite() || !w.is_finite() || w < 0.0)
        {
            return Err(Error::InvalidParameter("atoms need finite values and nonnegative weights".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("atom weights sum to zero".into()));
        }
        let mut support: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut acc = Vec::with_capacity(pairs.len());
        let mut running = 0.0;
        for (x, w) in pairs {
            running += w;
            if support.last() == Some(&x) {
                *acc.last_mut().unwrap() = running;
            } else {
                support.push(x);
                acc.push(running);
            }
        }
        let cum = acc.into_iter().map(|c| c / total).collect();
        Ok(Self::from_cumulative(support, cum))
    }

    /// Equally weighted sample.
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        let mut sorted = values.to_vec();
        if sorted.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("sample contains non-finite values".into()));
        }
        if sorted.is_empty() {
            return Err(Error::InvalidParameter("atomic distribution needs at least one atom".into()));
        }
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut support = Vec::with_capacity(n);
        let mut cum = Vec::with_capacity(n);
        for (i, &x) in sorted.iter().enumerate() {
            let c = (i + 1) as f64 / n as f64;
            if support.last() == Some(&x) {
                *cum.last_mut().unwrap() = c;
            } else {
                support.push(x);
                cum.push(c);
            }
        }
        Ok(Self::from_cumulative(support, cum))
    }

    fn from_cumulative(support: Vec<f64>, mut cum: Vec<f64>) -> Self {
        debug_assert_eq!(support.len(), cum.len());
        let mut prev = 0.0;
        for c in cum.iter_mut() {
            *c = c.clamp(prev, 1.0);
            prev = *c;
        }
        *cum.last_mut().unwrap() = 1.0;
        let mut atoms = Atoms {
            support,
            cum,
            half_spread: 0.0,
        };
        atoms.half_spread = 0.5 * atoms.mean_pair_distance();
        atoms
    }

    /// `E|X - X'| = 2 sum_i w_i x_i (P(X < x_i) - P(X > x_i))`, evaluated
    /// on values shifted by the first atom.
    fn mean_pair_distance(&self) -> f64 {
        let x0 = self.support[0];
        let mut below = 0.0;
        let mut total = 0.0;
        for (x, w) in self.iter() {
            let above = (1.0 - below - w).max(0.0);
            total += w * (x - x0) * (below - above);
            below += w;
        }
        2.0 * total
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    /// `(value, mass)` pairs in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().enumerate().map(move |(i, &x)| {
            let lo = if i == 0 { 0.0 } else { self.cum[i - 1] };
            (x, self.cum[i] - lo)
        })
    }

    pub fn masses(&self) -> Vec<f64> {
        self.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    /// `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&s| s < x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    /// `inf{x : F(x) >= tau}`.
    pub fn quantile(&self, tau: f64) -> f64 {
        let k = self.cum.partition_point(|&c| c < tau);
        self.support[k.min(self.len() - 1)]
    }

    /// Atom hit by a uniform draw `u` in `[0, 1)`.
    fn inverse_uniform(&self, u: f64) -> f64 {
        let k = self.cum.partition_point(|&c| c <= u);
        self.support[k.min(self.len() - 1)]
    }

    /// `E|X - y|`.
    pub fn mean_abs_dev(&self, y: f64) -> f64 {
        self.iter().map(|(x, w)| w * (x - y).abs()).sum()
    }

    /// `E|X - X'| / 2`.
    pub fn half_spread(&self) -> f64 {
        self.half_spread
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistributionKind {
    Pushforward,
    Gaussian,
    Empirical,
}

/// Ask-curve pushforward of a volume-error law.
#[derive(Debug, Clone)]
pub struct Pushforward {
    curve: StepCurve,
    v_hat: f64,
    clamp: Clamp,
    law: Arc<dyn ErrorLaw>,
    atoms: Atoms,
    degenerate: bool,
}

impl Pushforward {
    pub fn curve(&self) -> &StepCurve {
        &self.curve
    }

    pub fn v_hat(&self) -> f64 {
        self.v_hat
    }

    /// Clamp flag of `v_hat = s^-1(p_hat)`.
    pub fn clamp(&self) -> Clamp {
        self.clamp
    }

    pub fn law(&self) -> &dyn ErrorLaw {
        self.law.as_ref()
    }

    pub fn atoms(&self) -> &Atoms {
        &self.atoms
    }

    /// One price level carries all the mass although the error law is wide.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Gaussian price law; `sd == 0` is a point mass at `mean`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianForecast {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianForecast {
    pub fn is_degenerate(&self) -> bool {
        self.sd == 0.0
    }
}

/// `center - r` for every historic residual `r`, shared between hours.
#[derive(Debug, Clone)]
pub struct EmpiricalForecast {
    center: f64,
    offsets: Arc<Atoms>,
}

impl EmpiricalForecast {
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn offsets(&self) -> &Atoms {
        &self.offsets
    }
}

#[derive(Debug, Clone)]
pub enum PricePredictiveDistribution {
    Pushforward(Pushforward),
    Gaussian(GaussianForecast),
    Empirical(EmpiricalForecast),
}

impl PricePredictiveDistribution {
    pub fn kind(&self) -> DistributionKind {
        match self {
            Self::Pushforward(_) => DistributionKind::Pushforward,
            Self::Gaussian(_) => DistributionKind::Gaussian,
            Self::Empirical(_) => DistributionKind::Empirical,
        }
    }

    /// Right-continuous CDF, `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Pushforward(d) => d.atoms.cdf(x),
            Self::Gaussian(g) if g.sd == 0.0 => f64::from(u8::from(x >= g.mean)),
            Self::Gaussian(g) => norm_cdf((x - g.mean) / g.sd),
            Self::Empirical(d) => d.offsets.cdf(x - d.center),
        }
    }

    /// Left limit of the CDF, `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match self {
            Self::Pushforward(d) => d.atoms.cdf_left(x),
            Self::Gaussian(g) if g.sd == 0.0 => f64::from(u8::from(x > g.mean)),
            Self::Gaussian(_) => self.cdf(x),
            Self::Empirical(d) => d.offsets.cdf_left(x - d.center),
        }
    }

    /// Generalized inverse `inf{x : F(x) >= tau}` for `tau` in (0, 1).
    pub fn quantile(&self, tau: f64) -> f64 {
        assert!(tau > 0.0 && tau < 1.0, "quantile level must lie in (0, 1), got {tau}");
        match self {
            Self::Pushforward(d) => d.atoms.quantile(tau),
            Self::Gaussian(g) => g.mean + g.sd * norm_quantile(tau),
            Self::Empirical(d) => d.center + d.offsets.quantile(tau),
        }
    }

    /// `P(X > threshold)`; atoms at the threshold do not count.
    pub fn exceedance(&self, threshold: f64) -> f64 {
        (1.0 - self.cdf(threshold)).clamp(0.0, 1.0)
    }

    /// Draws `n` prices from a generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    /// Pushforward draws sample the volume error and evaluate the curve.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match self {
            Self::Pushforward(d) => (0..n)
                .map(|_| {
                    let u = open_unit(rng);
                    d.curve.eval(d.v_hat - d.law.quantile(u))
                })
                .collect(),
            Self::Gaussian(g) => (0..n)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    g.mean + g.sd * z
                })
                .collect(),
            Self::Empirical(d) => (0..n)
                .map(|_| d.center + d.offsets.inverse_uniform(rng.random::<f64>()))
                .collect(),
        }
    }

    /// Atomic representation, when the law is discrete.
    pub fn atoms(&self) -> Option<&Atoms> {
        match self {
            Self::Pushforward(d) => Some(&d.atoms),
            Self::Empirical(d) => Some(&d.offsets),
            Self::Gaussian(_) => None,
        }
    }

    /// Shift applied to [`Self::atoms`] to obtain prices.
    pub fn atom_shift(&self) -> f64 {
        match self {
            Self::Empirical(d) => d.center,
            _ => 0.0,
        }
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Pushes the error law through `ask` around `v_hat = s^-1(p_hat)`.
pub fn dress(
    ask: &StepCurve,
    p_hat: f64,
    law: Arc<dyn ErrorLaw>,
) -> Result<PricePredictiveDistribution> {
    if ask.side() != Side::Ask {
        return Err(Error::WrongSide {
            expected: Side::Ask,
            actual: ask.side(),
        });
    }
    if !p_hat.is_finite() {
        return Err(Error::InvalidParameter(format!("price forecast must be finite, got {p_hat}")));
    }
    if law.std_dev().is_nan() || law.std_dev() <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "volume error spread must be positive, got {}",
            law.std_dev()
        )));
    }
    let inv = ask.inverse(p_hat);
    let v_hat = inv.volume;
    let runs = ask.runs();
    // P(v_hat - e < b) = 1 - G(v_hat - b) at each run's right boundary
    let mut cum: Vec<f64> = runs
        .iter()
        .skip(1)
        .map(|&(b, _)| 1.0 - law.cdf(v_hat - b))
        .collect();
    cum.push(1.0);
    let support: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let atoms = Atoms::from_cumulative(support, cum);

    let top = atoms.iter().map(|p| p.1).fold(0.0, f64::max);
    let degenerate = top >= 1.0 - 1e-9 && law.std_dev() >= 1.0;
    if degenerate {
        warn!(
            "degenerate pushforward: one price level carries all mass (sigma = {})",
            law.std_dev()
        );
    }
    Ok(PricePredictiveDistribution::Pushforward(Pushforward {
        curve: ask.clone(),
        v_hat,
        clamp: inv.clamp,
        law,
        atoms,
        degenerate,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceResidual {
    pub date: NaiveDate,
    pub hour: u8,
    /// `p_hat - p`, EUR/MWh.
    pub r: f64,
}

/// Pooled spread of the Gaussian benchmark,
/// `sqrt(sum r^2 / (n - 1))` over every residual supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBenchmark {
    pub sigma: f64,
    pub count: usize,
}

impl GaussianBenchmark {
    pub fn fit(history: &[PriceResidual]) -> Result<Self> {
        if history.len() < 2 {
            return Err(Error::insufficient("Gaussian benchmark", 2, history.len()));
        }
        let ss: f64 = history.iter().map(|r| r.r * r.r).sum();
        let sigma = (ss / (history.len() - 1) as f64).sqrt();
        if sigma == 0.0 {
            warn!("Gaussian benchmark spread is zero; forecasts degenerate to point masses");
        }
        Ok(GaussianBenchmark {
            sigma,
            count: history.len(),
        })
    }

    pub fn forecast(&self, p_hat: f64) -> PricePredictiveDistribution {
        PricePredictiveDistribution::Gaussian(GaussianForecast {
            mean: p_hat,
            sd: self.sigma,
        })
    }
}

/// Historic residuals as price offsets `-r`, reusable for every hour of a
/// forecast day.
#[derive(Debug, Clone)]
pub struct EmpiricalBenchmark {
    offsets: Arc<Atoms>,
}

impl EmpiricalBenchmark {
    pub fn fit(history: &[PriceResidual]) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::insufficient("empirical benchmark", 1, 0));
        }
        let offsets: Vec<f64> = history.iter().map(|r| -r.r).collect();
        Ok(EmpiricalBenchmark {
            offsets: Arc::new(Atoms::from_sample(&offsets)?),
        })
    }

    pub fn forecast(&self, p_hat: f64) -> PricePredictiveDistribution {
        PricePredictiveDistribution::Empirical(EmpiricalForecast {
            center: p_hat,
            offsets: Arc::clone(&self.offsets),
        })
    }
}

pub fn gaussian_benchmark(p_hat: f64, history: &[PriceResidual]) -> Result<PricePredictiveDistribution> {
    Ok(GaussianBenchmark::fit(history)?.forecast(p_hat))
}

pub fn empirical_benchmark(p_hat: f64, history: &[PriceResidual]) -> Result<PricePredictiveDistribution> {
    Ok(EmpiricalBenchmark::fit(history)?.forecast(p_hat))
}
