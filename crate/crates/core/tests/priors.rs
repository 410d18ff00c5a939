use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spiked_oamp::priors::*;
use spiked_oamp::quad::gauss_hermite;

fn builtins() -> Vec<Prior> {
    vec![
        Prior::two_point(1.0 / 8.0).unwrap(),
        Prior::two_point(1.0 / 3.0).unwrap(),
        Prior::two_point(0.5).unwrap(),
        Prior::three_point(1.0 / 3.0, 1.0 / 5.0).unwrap(),
        Prior::three_point(1.0 / 6.0, 1.0 / 10.0).unwrap(),
    ]
}

#[test]
fn moments_of_builtins() {
    let (m, s) = prior_moments(&Prior::two_point(0.5).unwrap());
    assert!((m - 0.5).abs() < 1e-15 && (s - 1.0).abs() < 1e-12);
    let (m, s) = prior_moments(&Prior::three_point(1.0 / 3.0, 1.0 / 5.0).unwrap());
    assert!((m - 4.0 / 15.0).abs() < 1e-15 && (s - 1.0).abs() < 1e-12);
    let (m, s) = prior_moments(&Prior::new("one", vec![(1.0, 1.0)]).unwrap());
    assert_eq!((m, s), (1.0, 1.0));
}

#[test]
fn mmse_agrees_with_monte_carlo() {
    let prior = Prior::two_point(0.5).unwrap();
    let omega = 0.3;
    let pm = PosteriorMean::new(&prior, omega).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x = prior.quantile(rng.random::<f64>());
        let z: f64 = rng.sample(StandardNormal);
        let e = (x - pm.eval(omega.sqrt() * x + (1.0 - omega).sqrt() * z)).powi(2);
        s1 += e;
        s2 += e * e;
    }
    let mean = s1 / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    let m = mmse(&prior, omega).unwrap();
    assert!((m - mean).abs() < 3.0 * se, "{m} vs {mean} ± {se}");
}

#[test]
fn linear_posterior_gives_unit_dmmse() {
    // Fine grid approximation of a standard normal prior.
    let atoms: Vec<(f64, f64)> = (0..401)
        .map(|i| {
            let x = -10.0 + 0.05 * i as f64;
            (x, (-0.5 * x * x).exp())
        })
        .collect();
    let prior = Prior::normalized("gauss", atoms).unwrap();
    for omega in [0.1, 0.4, 0.7, 0.9] {
        let d = dmmse(&prior, omega).unwrap();
        assert!((d - 1.0).abs() < 1e-3, "ω = {omega}: {d}");
    }
}

#[test]
fn estimator_identity_at_a_moderate_snr() {
    let prior = Prior::two_point(0.5).unwrap();
    let omega = 0.4;
    let est = DmmseEstimator::new(&prior, ChannelStats::new(&prior, omega).unwrap()).unwrap();
    let e = channel_expect(&prior, omega, |x, _, y| x * est.eval(y)).unwrap();
    assert!((e - (1.0 - dmmse(&prior, omega).unwrap())).abs() < 1e-6);
}

#[test]
fn channel_identities_hold_under_gauss_hermite() {
    // 201 nodes leave ~1e-7 errors for the sparsest priors; 401 resolve them.
    let rule = gauss_hermite(401);
    for prior in builtins() {
        for k in 1..=9 {
            let omega = k as f64 / 10.0;
            let stats = ChannelStats::new(&prior, omega).unwrap();
            let est = DmmseEstimator::new(&prior, stats).unwrap();
            let pm = PosteriorMean::new(&prior, omega).unwrap();
            let target = 1.0 - stats.dmmse;
            let xd = channel_expect_hermite(&prior, omega, &rule, |x, _, y| x * est.eval(y)).unwrap();
            let pd = channel_expect_hermite(&prior, omega, &rule, |_, _, y| pm.eval(y) * est.eval(y)).unwrap();
            let dd = channel_expect_hermite(&prior, omega, &rule, |_, _, y| est.eval(y).powi(2)).unwrap();
            let zd = channel_expect_hermite(&prior, omega, &rule, |_, z, y| z * est.eval(y)).unwrap();
            let p2 = channel_expect_hermite(&prior, omega, &rule, |_, _, y| pm.eval(y).powi(2)).unwrap();
            let tag = format!("{} ω = {omega}", prior.name());
            assert!((xd - target).abs() < 1e-8, "{tag}: E[X d] {xd} vs {target}");
            assert!((pd - target).abs() < 1e-8, "{tag}: E[φ d]");
            assert!((dd - target).abs() < 1e-8, "{tag}: E[d²]");
            assert!(zd.abs() < 1e-8, "{tag}: E[Z d] = {zd}");
            assert!((stats.mmse - (1.0 - p2)).abs() < 1e-8, "{tag}: Pythagoras");
        }
    }
}

#[test]
fn monotone_on_a_fifty_point_grid() {
    for prior in builtins() {
        let grid: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let stats: Vec<ChannelStats> = grid.iter().map(|&w| ChannelStats::new(&prior, w).unwrap()).collect();
        for w in stats.windows(2) {
            assert!(w[1].mmse <= w[0].mmse + 1e-14, "{}", prior.name());
            assert!(w[1].dmmse <= w[0].dmmse + 1e-14, "{}", prior.name());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn channel_stats_invariants(eps in 0.05f64..1.0, omega in 0.0f64..0.999) {
        let prior = Prior::two_point(eps).unwrap();
        let s = ChannelStats::new(&prior, omega).unwrap();
        prop_assert!(0.0 <= s.mmse && s.mmse <= s.dmmse + 1e-15 && s.dmmse <= 1.0 + 1e-12);
        if s.mmse > 0.0 {
            let lhs = 1.0 / s.dmmse;
            let rhs = 1.0 / s.mmse - omega / (1.0 - omega);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
            prop_assert!((s.beta - omega.sqrt() * s.mmse / (1.0 - omega)).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_mean_lies_in_the_atom_hull(e1 in 0.1f64..1.0, e2 in 0.1f64..1.0, omega in 0.0f64..1.0, x in -50.0f64..50.0) {
        prop_assume!(0.5 * (e1 * e1 + e2 * e2) <= 1.0);
        let prior = Prior::three_point(e1, e2).unwrap();
        let v = posterior_mean(&prior, x, omega).unwrap();
        let lo = prior.atoms().iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
        let hi = prior.atoms().iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v.is_finite() && v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn posterior_mean_is_nondecreasing(eps in 0.05f64..1.0, omega in 0.01f64..0.99, a in -10.0f64..10.0, d in 0.0f64..5.0) {
        let pm = PosteriorMean::new(&Prior::two_point(eps).unwrap(), omega).unwrap();
        prop_assert!(pm.eval(a + d) >= pm.eval(a) - 1e-12);
    }

    #[test]
    fn domain_is_enforced(omega in prop_oneof![-10.0f64..-1e-9, 1.0f64 + 1e-9..10.0]) {
        let prior = Prior::two_point(0.5).unwrap();
        prop_assert!(mmse(&prior, omega).is_err());
        prop_assert!(posterior_mean(&prior, 0.0, omega).is_err());
    }
}
