mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spotdress::curves::StepCurve;
use spotdress::dressing::{dress, PricePredictiveDistribution};
use spotdress::volmodel::{ErrorDistribution, Regime};

fn setup(seed: u64, mu: f64, sigma: f64) -> (StepCurve, PricePredictiveDistribution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ask = common::random_ask(&mut rng);
    let p_hat = rng.random_range(ask.min_price() - 20.0..ask.max_price() + 20.0);
    let law = ErrorDistribution::new(mu, sigma, Regime::Tail).unwrap();
    let dist = dress(&ask, p_hat, Arc::new(law)).unwrap();
    (ask, dist)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn masses_form_a_distribution_on_curve_prices(seed in any::<u64>(), mu in -1000.0..1000.0f64, sigma in 10.0..3000.0f64) {
        let (ask, dist) = setup(seed, mu, sigma);
        let atoms = dist.atoms().unwrap();
        let masses = atoms.masses();
        prop_assert!(masses.iter().all(|&m| m >= 0.0));
        prop_assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for x in atoms.support() {
            prop_assert!(ask.prices().contains(x));
        }
    }

    #[test]
    fn quantile_inverts_the_cdf(seed in any::<u64>(), sigma in 10.0..3000.0f64, tau in 0.001..0.999f64) {
        let (_, dist) = setup(seed, 0.0, sigma);
        let q = dist.quantile(tau);
        prop_assert!(dist.cdf(q) >= tau - 1e-12);
        prop_assert!(dist.cdf_left(q) <= tau + 1e-12);
    }

    #[test]
    fn wider_volume_errors_widen_the_interval(seed in any::<u64>(), s1 in 10.0..3000.0f64, s2 in 10.0..3000.0f64) {
        let (small, large) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let (_, narrow) = setup(seed, 0.0, small);
        let (_, wide) = setup(seed, 0.0, large);
        prop_assert!(wide.quantile(0.9) >= narrow.quantile(0.9));
        prop_assert!(wide.quantile(0.1) <= narrow.quantile(0.1));
    }

    #[test]
    fn exceedance_complements_the_cdf(seed in any::<u64>(), sigma in 10.0..3000.0f64, x in -500.0..3000.0f64) {
        let (_, dist) = setup(seed, 0.0, sigma);
        prop_assert!((dist.exceedance(x) - (1.0 - dist.cdf(x))).abs() < 1e-12);
    }
}

#[test]
fn cdf_matches_monte_carlo_draws() {
    let n = 20_000;
    for seed in 0..20 {
        let (_, dist) = setup(seed, 200.0 * (seed as f64 - 10.0), 300.0 + 100.0 * seed as f64);
        let draws = dist.sample(n, 1000 + seed);
        for &x in dist.atoms().unwrap().support() {
            let f = dist.cdf(x);
            let emp = draws.iter().filter(|&&d| d <= x).count() as f64 / n as f64;
            let tol = 5.0 * (f * (1.0 - f) / n as f64).sqrt() + 1e-9;
            assert!((emp - f).abs() <= tol, "seed {seed} x {x}: {emp} vs {f}");
        }
    }
}

#[test]
fn concentrated_errors_collapse_to_one_level() {
    for seed in 0..50 {
        let (ask, dist) = setup(seed, 1e-3, 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let _ = common::random_ask(&mut rng);
        let p_hat = rng.random_range(ask.min_price() - 20.0..ask.max_price() + 20.0);
        let v_hat = ask.inverse(p_hat).volume;
        let level = ask.eval((v_hat - 1e-3).max(ask.start()));
        assert_eq!(dist.quantile(0.01), level);
        assert_eq!(dist.quantile(0.99), level);
    }
}
