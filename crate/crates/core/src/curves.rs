//! Bid/ask step curves.
//!
//! A curve maps cumulative volume (MWh) to price (EUR/MWh). Curves are
//! right-continuous and piecewise constant: on `[volume[i], volume[i+1])`
//! the price is `price[i]`. Evaluation outside the volume domain clamps to
//! the nearest end, and inversion uses the supremum of the level set, so a
//! price sitting exactly on a step maps to the far end of that step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

pub const PRICE_FLOOR: f64 = -500.0;
pub const PRICE_CAP: f64 = 3000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "BID")]
    Bid,
    #[serde(rename = "ASK")]
    Ask,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("a curve needs at least 2 breakpoints, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite value at breakpoint {index}")]
    NonFinite { index: usize },
    #[error("volume {volume} at breakpoint {index} does not exceed the previous volume")]
    VolumeNotIncreasing { index: usize, volume: f64 },
    #[error("price {price} at breakpoint {index} breaks {side:?} monotonicity")]
    PriceNotMonotone { index: usize, price: f64, side: Side },
    #[error("price {price} at breakpoint {index} is outside [{min}, {max}]")]
    PriceOutOfRange {
        index: usize,
        price: f64,
        min: f64,
        max: f64,
    },
    #[error("domain end {end} lies before the last breakpoint {last}")]
    EndBeforeLastPoint { end: f64, last: f64 },
}

impl CurveError {
    /// Breakpoint the error refers to, if any.
    pub fn index(&self) -> Option<usize> {
        match *self {
            CurveError::NonFinite { index }
            | CurveError::VolumeNotIncreasing { index, .. }
            | CurveError::PriceNotMonotone { index, .. }
            | CurveError::PriceOutOfRange { index, .. } => Some(index),
            CurveError::TooFewPoints(_) | CurveError::EndBeforeLastPoint { .. } => None,
        }
    }
}

/// Admissible price codomain. Defaults to the exchange limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceLimits {
    pub min: f64,
    pub max: f64,
}

impl Default for PriceLimits {
    fn default() -> Self {
        PriceLimits {
            min: PRICE_FLOOR,
            max: PRICE_CAP,
        }
    }
}

impl PriceLimits {
    pub fn unbounded() -> Self {
        PriceLimits {
            min: f64::NEG_INFINITY,
            max: f64::INFINITY,
        }
    }
}

/// Which end of the volume domain an inversion was pinned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clamp {
    None,
    /// Level set empty; returned the domain start.
    Start,
    /// Level set is the whole domain; returned the domain end.
    End,
}

impl Clamp {
    pub fn is_clamped(self) -> bool {
        self != Clamp::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverse {
    pub volume: f64,
    pub clamp: Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    side: Side,
    volumes: Vec<f64>,
    prices: Vec<f64>,
    end: f64,
}

impl StepCurve {
    /// Builds a curve whose domain ends at the last breakpoint.
    pub fn new(side: Side, points: &[(f64, f64)]) -> Result<Self, CurveError> {
        Self::with_limits(side, points, PriceLimits::default())
    }

    pub fn with_limits(
        side: Side,
        points: &[(f64, f64)],
        limits: PriceLimits,
    ) -> Result<Self, CurveError> {
        if points.len() < 2 {
            return Err(CurveError::TooFewPoints(points.len()));
        }
        for (index, &(v, p)) in points.iter().enumerate() {
            if !v.is_finite() || !p.is_finite() {
                return Err(CurveError::NonFinite { index });
            }
            if p < limits.min || p > limits.max {
                return Err(CurveError::PriceOutOfRange {
                    index,
                    price: p,
                    min: limits.min,
                    max: limits.max,
                });
            }
            if index > 0 {
                let (pv, pp) = points[index - 1];
                if v <= pv {
                    return Err(CurveError::VolumeNotIncreasing { index, volume: v });
                }
                let ok = match side {
                    Side::Ask => p >= pp,
                    Side::Bid => p <= pp,
                };
                if !ok {
                    return Err(CurveError::PriceNotMonotone {
                        index,
                        price: p,
                        side,
                    });
                }
            }
        }
        let (volumes, prices): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let end = *volumes.last().unwrap();
        Ok(StepCurve {
            side,
            volumes,
            prices,
            end,
        })
    }

    /// Extends the volume domain past the last breakpoint; the last price
    /// holds on `[last_volume, end]`.
    pub fn with_end(mut self, end: f64) -> Result<Self, CurveError> {
        let last = *self.volumes.last().unwrap();
        if !end.is_finite() || end < last {
            return Err(CurveError::EndBeforeLastPoint { end, last });
        }
        self.end = end;
        Ok(self)
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.volumes.iter().copied().zip(self.prices.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.volumes[0]
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn min_price(&self) -> f64 {
        self.prices.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_price(&self) -> f64 {
        self.prices.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Shifts the whole curve along the volume axis.
    pub fn shifted(&self, dv: f64) -> StepCurve {
        StepCurve {
            side: self.side,
            volumes: self.volumes.iter().map(|v| v + dv).collect(),
            prices: self.prices.clone(),
            end: self.end + dv,
        }
    }

    /// Price at volume `v`, clamped to the end prices outside the domain.
    ///
    /// # Panics
    ///
    /// Panics if `v` is NaN.
    pub fn eval(&self, v: f64) -> f64 {
        assert!(!v.is_nan(), "StepCurve::eval called with NaN volume");
        // number of breakpoints with volume <= v
        let k = self.volumes.partition_point(|&x| x <= v);
        self.prices[k.saturating_sub(1)]
    }

    /// Generalized inverse: `sup{v : s(v) <= p}` for asks and
    /// `sup{v : b(v) >= p}` for bids, over the curve's volume domain.
    ///
    /// # Panics
    ///
    /// Panics if `p` is NaN.
    pub fn inverse(&self, p: f64) -> Inverse {
        assert!(!p.is_nan(), "StepCurve::inverse called with NaN price");
        // j = first breakpoint whose price leaves the level set
        let j = match self.side {
            Side::Ask => self.prices.partition_point(|&x| x <= p),
            Side::Bid => self.prices.partition_point(|&x| x >= p),
        };
        if j == 0 {
            Inverse {
                volume: self.start(),
                clamp: Clamp::Start,
            }
        } else if j == self.prices.len() {
            Inverse {
                volume: self.end,
                clamp: Clamp::End,
            }
        } else {
            Inverse {
                volume: self.volumes[j],
                clamp: Clamp::None,
            }
        }
    }

    /// Maximal constant runs as `(start_volume, price)`; run `i` covers
    /// `[start_i, start_{i+1})` and the last run extends to the domain end.
    pub fn runs(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(self.len());
        for (v, p) in self.points() {
            match out.last() {
                Some(&(_, last)) if last == p => {}
                _ => out.push((v, p)),
            }
        }
        out
    }
}

/// Market clearing point of a bid/ask pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub volume: f64,
    pub price: f64,
    /// Minimized `|b(v) - s(v)|`.
    pub gap: f64,
}

/// Finds the volume minimizing `|b(v) - s(v)|` over the common domain.
///
/// Both curves are piecewise constant, so the gap is constant between
/// consecutive breakpoints of either curve and it suffices to check those.
/// Ties go to the smallest volume.
pub fn settle(bid: &StepCurve, ask: &StepCurve) -> Result<Settlement> {
    if bid.side() != Side::Bid {
        return Err(Error::WrongSide {
            expected: Side::Bid,
            actual: bid.side(),
        });
    }
    if ask.side() != Side::Ask {
        return Err(Error::WrongSide {
            expected: Side::Ask,
            actual: ask.side(),
        });
    }
    let lo = bid.start().max(ask.start());
    let hi = bid.end().min(ask.end());
    if lo > hi {
        return Err(Error::DisjointDomains {
            bid_lo: bid.start(),
            bid_hi: bid.end(),
            ask_lo: ask.start(),
            ask_hi: ask.end(),
        });
    }

    let mut best = Settlement {
        volume: lo,
        price: ask.eval(lo),
        gap: (bid.eval(lo) - ask.eval(lo)).abs(),
    };
    let candidates = bid
        .volumes()
        .iter()
        .chain(ask.volumes())
        .copied()
        .filter(|&v| v > lo && v <= hi);
    for v in candidates {
        let gap = (bid.eval(v) - ask.eval(v)).abs();
        if gap < best.gap || (gap == best.gap && v < best.volume) {
            best = Settlement {
                volume: v,
                price: ask.eval(v),
                gap,
            };
        }
    }
    Ok(best)
}

/// Volume distances travelled along the ask curve when the price forecast
/// moves up or down by `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFeature {
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub m: f64,
    /// Set when `p_hat`, `p_hat + m` or `p_hat - m` fell outside the
    /// curve's price range and the inverse was pinned to a domain end.
    pub clamped: bool,
}

pub fn delta_features(ask: &StepCurve, p_hat: f64, m: f64) -> Result<CurveFeature> {
    if ask.side() != Side::Ask {
        return Err(Error::WrongSide {
            expected: Side::Ask,
            actual: ask.side(),
        });
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "price step m must be positive, got {m}"
        )));
    }
    if !p_hat.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "price forecast must be finite, got {p_hat}"
        )));
    }
    let center = ask.inverse(p_hat);
    let up = ask.inverse(p_hat + m);
    let down = ask.inverse(p_hat - m);
    Ok(CurveFeature {
        delta_plus: (up.volume - center.volume).abs(),
        delta_minus: (down.volume - center.volume).abs(),
        m,
        clamped: center.clamp.is_clamped() || up.clamp.is_clamped() || down.clamp.is_clamped(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask3() -> StepCurve {
        StepCurve::new(Side::Ask, &[(0.0, 10.0), (100.0, 20.0), (200.0, 100.0)])
            .unwrap()
            .with_end(250.0)
            .unwrap()
    }

    /// Brute-force sup of the ask level set over a fine grid.
    fn grid_sup(curve: &StepCurve, p: f64) -> f64 {
        let n = 250_000;
        let (lo, hi) = (curve.start(), curve.end());
        let mut sup = f64::NEG_INFINITY;
        for i in 0..=n {
            let v = lo + (hi - lo) * i as f64 / n as f64;
            if curve.eval(v) <= p {
                sup = v;
            }
        }
        sup
    }

    #[test]
    fn eval_steps() {
        let c = ask3();
        assert_eq!(c.eval(150.0), 20.0);
        assert_eq!(c.eval(100.0), 20.0);
        assert_eq!(c.eval(99.999), 10.0);
        assert_eq!(c.eval(0.0), 10.0);
        assert_eq!(c.eval(-5.0), 10.0);
        assert_eq!(c.eval(240.0), 100.0);
        assert_eq!(c.eval(1e9), 100.0);
    }

    #[test]
    #[should_panic(expected = "NaN")]
    fn eval_rejects_nan() {
        ask3().eval(f64::NAN);
    }

    #[test]
    fn inverse_is_sup_of_level_set() {
        let c = ask3();
        let inv = c.inverse(20.0);
        assert_eq!(inv.volume, 200.0);
        assert_eq!(inv.clamp, Clamp::None);
        assert!((grid_sup(&c, 20.0) - 200.0).abs() <= 250.0 / 250_000.0 + 1e-12);

        let inv = c.inverse(15.0);
        assert_eq!(inv.volume, 100.0);
        assert!((grid_sup(&c, 15.0) - 100.0).abs() <= 250.0 / 250_000.0 + 1e-12);

        let inv = c.inverse(5.0);
        assert_eq!(inv.volume, 0.0);
        assert_eq!(inv.clamp, Clamp::Start);

        let inv = c.inverse(100.0);
        assert_eq!(inv.volume, 250.0);
        assert_eq!(inv.clamp, Clamp::End);
    }

    #[test]
    fn bid_inverse() {
        let b = StepCurve::new(Side::Bid, &[(0.0, 100.0), (50.0, 60.0), (80.0, 5.0)]).unwrap();
        assert_eq!(b.inverse(70.0).volume, 50.0);
        assert_eq!(b.inverse(60.0).volume, 80.0);
        assert_eq!(b.inverse(150.0).clamp, Clamp::Start);
        let all = b.inverse(1.0);
        assert_eq!((all.volume, all.clamp), (80.0, Clamp::End));
    }

    #[test]
    fn invariants_enforced() {
        assert_eq!(
            StepCurve::new(Side::Ask, &[(0.0, 1.0)]).unwrap_err(),
            CurveError::TooFewPoints(1)
        );
        let e = StepCurve::new(Side::Ask, &[(0.0, 1.0), (0.0, 2.0)]).unwrap_err();
        assert_eq!(e.index(), Some(1));
        let e = StepCurve::new(Side::Ask, &[(0.0, 5.0), (1.0, 2.0)]).unwrap_err();
        assert!(matches!(e, CurveError::PriceNotMonotone { index: 1, .. }));
        let e = StepCurve::new(Side::Bid, &[(0.0, 5.0), (1.0, 7.0)]).unwrap_err();
        assert!(matches!(e, CurveError::PriceNotMonotone { .. }));
        let e = StepCurve::new(Side::Ask, &[(0.0, 5.0), (1.0, 3500.0)]).unwrap_err();
        assert!(matches!(e, CurveError::PriceOutOfRange { index: 1, .. }));
        assert!(StepCurve::with_limits(
            Side::Ask,
            &[(0.0, 5.0), (1.0, 3500.0)],
            PriceLimits::unbounded()
        )
        .is_ok());
        let e = StepCurve::new(Side::Ask, &[(0.0, f64::NAN), (1.0, 2.0)]).unwrap_err();
        assert_eq!(e, CurveError::NonFinite { index: 0 });
        assert!(ask3().with_end(150.0).is_err());
    }

    #[test]
    fn settle_crossing() {
        let eps = 1e-3;
        let bid = StepCurve::new(
            Side::Bid,
            &[(0.0, 100.0), (150.0, 100.0), (150.0 + eps, 5.0)],
        )
        .unwrap();
        let s = settle(&bid, &ask3()).unwrap();
        assert!((s.volume - 150.0).abs() <= 2.0 * eps, "{s:?}");
        assert_eq!(s.price, 20.0);
        assert_eq!(s.gap, 15.0);
    }

    #[test]
    fn settle_ties_take_smallest_volume() {
        let flat_b = StepCurve::new(Side::Bid, &[(0.0, 50.0), (100.0, 50.0)]).unwrap();
        let flat_a = StepCurve::new(Side::Ask, &[(0.0, 50.0), (100.0, 50.0)]).unwrap();
        let s = settle(&flat_b, &flat_a).unwrap();
        assert_eq!((s.volume, s.price, s.gap), (0.0, 50.0, 0.0));
    }

    #[test]
    fn settle_non_crossing_minimizes_positive_gap() {
        let bid = StepCurve::new(Side::Bid, &[(0.0, 8.0), (120.0, 2.0), (250.0, 1.0)]).unwrap();
        let s = settle(&bid, &ask3()).unwrap();
        // gaps: v=0 -> 2, v=100 -> 12, v=120 -> 18, v=200.. -> 98
        assert_eq!((s.volume, s.gap), (0.0, 2.0));
    }

    #[test]
    fn settle_rejects_disjoint_domains() {
        let bid = StepCurve::new(Side::Bid, &[(300.0, 8.0), (400.0, 2.0)]).unwrap();
        assert!(matches!(
            settle(&bid, &ask3()),
            Err(Error::DisjointDomains { .. })
        ));
        assert!(matches!(
            settle(&ask3(), &ask3()),
            Err(Error::WrongSide { .. })
        ));
    }

    #[test]
    fn delta_feature_examples() {
        let f = delta_features(&ask3(), 15.0, 50.0).unwrap();
        assert_eq!(f.delta_plus, 100.0);
        // p_hat - m is below the curve: pinned to the domain start
        assert_eq!(f.delta_minus, 100.0);
        assert!(f.clamped);

        // forecast at the top of the curve
        let f = delta_features(&ask3(), 100.0, 50.0).unwrap();
        assert_eq!(f.delta_plus, 0.0);
        assert!(f.clamped);

        assert!(delta_features(&ask3(), 15.0, 0.0).is_err());
    }

    #[test]
    fn flat_curve_delta_plus_is_distance_to_domain_end() {
        let flat = StepCurve::new(Side::Ask, &[(1000.0, 30.0), (5000.0, 30.0)]).unwrap();
        // at the level the sup-inverse already sits on the domain end
        let f = delta_features(&flat, 30.0, 50.0).unwrap();
        assert_eq!(f.delta_plus, flat.end() - flat.inverse(30.0).volume);
        assert_eq!(f.delta_plus, 0.0);
        // just below the level the whole domain lies ahead
        let f = delta_features(&flat, 29.99, 50.0).unwrap();
        assert_eq!(f.delta_plus, 4000.0);
    }

    #[test]
    fn runs_merge_equal_levels() {
        let c = StepCurve::new(
            Side::Ask,
            &[(0.0, 1.0), (1.0, 1.0), (2.0, 3.0), (3.0, 3.0), (4.0, 9.0)],
        )
        .unwrap();
        assert_eq!(c.runs(), vec![(0.0, 1.0), (2.0, 3.0), (4.0, 9.0)]);
    }
}
