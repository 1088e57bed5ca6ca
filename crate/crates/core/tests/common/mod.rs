#![allow(dead_code)]

use rand::Rng;
use spotdress::curves::{Side, StepCurve};

/// Asymptotic Kolmogorov-Smirnov critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// One-sample KS statistic of `xs` against the continuous CDF `cdf`.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Random valid ask curve with integer-ish structure and occasional flat runs.
pub fn random_ask<R: Rng>(rng: &mut R) -> StepCurve {
    let n = rng.random_range(2..40);
    let mut v = rng.random_range(0.0..5000.0);
    let mut p: f64 = rng.random_range(-500.0..200.0);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push((v, p));
        v += rng.random_range(1.0..800.0);
        if rng.random::<f64>() < 0.7 {
            p = (p + rng.random_range(0.0..150.0)).min(3000.0);
        }
    }
    let end = v + rng.random_range(0.0..500.0);
    StepCurve::new(Side::Ask, &points).unwrap().with_end(end).unwrap()
}

/// Random valid bid curve.
pub fn random_bid<R: Rng>(rng: &mut R) -> StepCurve {
    let n = rng.random_range(2..40);
    let mut v = rng.random_range(0.0..5000.0);
    let mut p: f64 = rng.random_range(0.0..3000.0);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push((v, p));
        v += rng.random_range(1.0..800.0);
        if rng.random::<f64>() < 0.7 {
            p = (p - rng.random_range(0.0..150.0)).max(-500.0);
        }
    }
    StepCurve::new(Side::Bid, &points).unwrap()
}
