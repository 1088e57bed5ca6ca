//! Scoring rules and calibration diagnostics.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dressing::PricePredictiveDistribution;
use crate::error::{Error, Result};
use crate::stats::{norm_cdf, norm_pdf, sorted_quantile};

/// One scored forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub date: NaiveDate,
    pub hour: u8,
    pub model: String,
    pub crps: f64,
    pub qs10: f64,
    pub qs90: f64,
    pub pit: f64,
    pub exceed_prob: f64,
    pub exceeded: bool,
}

/// Continuous ranked probability score of `dist` against the outcome `p`.
///
/// Gaussian laws use the closed form; atomic laws use
/// `E|X - p| - E|X - X'| / 2`.
pub fn crps(dist: &PricePredictiveDistribution, p: f64) -> f64 {
    match dist {
        PricePredictiveDistribution::Gaussian(g) if g.sd == 0.0 => (p - g.mean).abs(),
        PricePredictiveDistribution::Gaussian(g) => {
            let z = (p - g.mean) / g.sd;
            g.sd * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - 1.0 / std::f64::consts::PI.sqrt())
        }
        _ => {
            let atoms = dist.atoms().expect("atomic distribution");
            let y = p - dist.atom_shift();
            (atoms.mean_abs_dev(y) - atoms.half_spread()).max(0.0)
        }
    }
}

/// Pinball loss `(p - q)(tau - 1{p <= q})` with `q` the `tau`-quantile.
pub fn quantile_score(dist: &PricePredictiveDistribution, p: f64, tau: f64) -> f64 {
    let q = dist.quantile(tau);
    let indicator = if p <= q { 1.0 } else { 0.0 };
    (p - q) * (tau - indicator)
}

/// Randomized PIT: uniform on `[F(p-), F(p)]`, equal to `F(p)` wherever
/// the CDF is continuous.
pub fn pit<R: Rng + ?Sized>(dist: &PricePredictiveDistribution, p: f64, rng: &mut R) -> f64 {
    let hi = dist.cdf(p);
    let lo = dist.cdf_left(p);
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        hi
    }
}

/// Equal-width counts on [0, 1]; a value of exactly 1 goes to the last bin.
pub fn pit_histogram(pits: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("PIT histogram needs >= 2 bins, got {bins}")));
    }
    let mut counts = vec![0; bins];
    for &u in pits {
        counts[bin_of(u, bins)] += 1;
    }
    Ok(counts)
}

fn bin_of(u: f64, bins: usize) -> usize {
    ((u.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    /// 1-based.
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    /// `None` for an empty bin.
    pub mean_prob: Option<f64>,
    pub observed_freq: Option<f64>,
    pub count: usize,
}

/// Reliability diagram for a binary event. `min_prob` keeps only forecast
/// probabilities strictly above it; an empty selection yields no bins.
pub fn reliability(
    records: &[(f64, bool)],
    bins: usize,
    min_prob: Option<f64>,
) -> Result<Vec<ReliabilityBin>> {
    if bins == 0 {
        return Err(Error::InvalidParameter("reliability needs at least one bin".into()));
    }
    let kept: Vec<(f64, bool)> = records
        .iter()
        .copied()
        .filter(|&(prob, _)| min_prob.is_none_or(|m| prob > m))
        .collect();
    if kept.is_empty() {
        return Ok(Vec::new());
    }
    let mut sums = vec![(0.0, 0usize, 0usize); bins];
    for (prob, hit) in kept {
        let b = bin_of(prob, bins);
        sums[b].0 += prob;
        sums[b].1 += usize::from(hit);
        sums[b].2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (psum, hits, n))| ReliabilityBin {
            bin: i + 1,
            lower: i as f64 / bins as f64,
            upper: (i + 1) as f64 / bins as f64,
            mean_prob: (n > 0).then(|| psum / n as f64),
            observed_freq: (n > 0).then(|| hits as f64 / n as f64),
            count: n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    /// `mean(a) - mean(b)`.
    pub observed: f64,
    pub q025: f64,
    pub q975: f64,
    /// Two-sided, `(1 + #{|null| >= |observed|}) / (1 + resamples)`.
    pub p_value: f64,
    pub resamples: usize,
}

impl PermutationResult {
    /// Observed difference falls outside the central 95% null band.
    pub fn rejects(&self) -> bool {
        self.observed < self.q025 || self.observed > self.q975
    }
}

/// Paired permutation test: every resample swaps each pair independently
/// with probability one half and records the difference of means.
pub fn permutation_test(
    a: &[f64],
    b: &[f64],
    n_resamples: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::insufficient("permutation test pairs", 2, a.len()));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidParameter("permutation test needs resamples".into()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = diffs.iter().sum::<f64>() / n;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut null: Vec<f64> = (0..n_resamples)
        .map(|_| {
            diffs
                .iter()
                .map(|&d| if rng.random::<bool>() { -d } else { d })
                .sum::<f64>()
                / n
        })
        .collect();
    // relative slack so that sign flips of an all-zero or symmetric sample
    // count as ties despite rounding in the sums
    let tol = 1e-12 * diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
    let extreme = null
        .iter()
        .filter(|x| x.abs() >= observed.abs() - tol)
        .count();
    null.sort_by(f64::total_cmp);
    Ok(PermutationResult {
        observed,
        q025: sorted_quantile(&null, 0.025),
        q975: sorted_quantile(&null, 0.975),
        p_value: (1 + extreme) as f64 / (1 + n_resamples) as f64,
        resamples: n_resamples,
    })
}
