use proptest::prelude::*;
use spiked_oamp::priors::{mmse, Prior};
use spiked_oamp::spectral::{NoiseSpectrum, PhiContext};
use spiked_oamp::state_evolution::*;

fn params(spec: NoiseSpectrum, theta: f64, prior: Prior) -> SEParams {
    SEParams::new(prior, PhiContext::new(spec, theta).unwrap()).unwrap()
}

fn quartic_18() -> SEParams {
    params(NoiseSpectrum::quartic(0.0).unwrap(), 1.8, Prior::two_point(0.5).unwrap())
}

#[test]
fn f1_anchor_values() {
    let p = quartic_18();
    let e_phi = p.ctx.expect_mu_phi(|_, v| v);
    assert!((f1(&p, 1e8) - (1.0 - 1.0 / e_phi)).abs() < 1e-6);
    assert!(f1(&p, 0.5) <= f1(&p, 1.0) && f1(&p, 1.0) <= f1(&p, 2.0));
    let sub = params(NoiseSpectrum::quadratic(), 0.5, Prior::two_point(0.5).unwrap());
    assert!(f1(&sub, 1e-8).abs() < 1e-4);
}

#[test]
fn f2_anchor_values() {
    let p = quartic_18();
    assert!((f2(&p, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let sparse = params(NoiseSpectrum::quartic(0.0).unwrap(), 1.8, Prior::two_point(0.125).unwrap());
    assert!((f2(&sparse, 0.0).unwrap() - 1.0 / 63.0).abs() < 1e-12);
    assert!(f2(&p, 0.999).unwrap() > f2(&p, 0.99).unwrap());
}

#[test]
fn long_trace_is_monotone_and_lands_on_a_fixed_point() {
    let p = quartic_18();
    let tr = run_se(&p, 50).unwrap();
    for t in 1..tr.len() {
        let rel = |a: f64, b: f64| (a - b) / a.abs().max(1.0);
        assert!(rel(tr.omegas[t - 1], tr.omegas[t]) <= 1e-12);
        assert!(rel(tr.rhos[t - 1], tr.rhos[t]) <= 1e-12);
        assert_eq!(tr.rhos[t], f2(&p, tr.omegas[t - 1]).unwrap());
        assert_eq!(tr.omegas[t], f1(&p, tr.rhos[t]));
    }
    let fp = fixed_point(&p, 1e-12, 10_000).unwrap();
    assert!((fp.omega_star - p.f1f2(fp.omega_star).unwrap()).abs() < 1e-8);
    let alt = alt_fixed_point_residuals(&p, fp.omega_star, fp.rho_star).unwrap();
    assert!(alt.iter().all(|r| r.abs() < 1e-8), "{alt:?}");
    let rep = replica_residual(&p, fp.omega_star, fp.rho_star).unwrap();
    assert!(rep.max_abs_residual() < 1e-8, "{rep:?}");
    assert!(rep.residuals[1].abs() < 1e-8);
    let off = replica_residual(&p, fp.omega_star + 0.05, fp.rho_star).unwrap();
    assert!(off.max_abs_residual() > 1e-3);
}

#[test]
fn subcritical_fixed_point_is_the_smallest_crossing() {
    let p = params(NoiseSpectrum::quadratic(), 0.5, Prior::two_point(0.5).unwrap());
    let fp = fixed_point(&p, 1e-12, 10_000).unwrap();
    let scan = scan_landscape(&p, 4000).unwrap();
    let first = scan.fixed_points.iter().find(|c| c.reachable).unwrap();
    assert!((fp.omega_star - first.omega).abs() < 1e-3, "{} vs {}", fp.omega_star, first.omega);
    assert_eq!(scan.fixed_points[0].omega, first.omega);
}

#[test]
fn landscape_counts_at_the_gap_snr() {
    let spec = NoiseSpectrum::quartic(0.0).unwrap();
    let one = scan_landscape(&params(spec.clone(), 0.46, Prior::three_point(1.0 / 3.0, 1.0 / 5.0).unwrap()), 2000).unwrap();
    assert_eq!(one.fixed_points.len(), 1);
    let two = scan_landscape(&params(spec, 0.46, Prior::three_point(1.0 / 6.0, 1.0 / 10.0).unwrap()), 2000).unwrap();
    assert_eq!(two.fixed_points.len(), 3);
    assert_eq!(two.n_stable(), 2);
    for w in two.points.windows(2) {
        assert!(w[1].1 >= w[0].1 - 1e-12);
    }
}

#[test]
fn pca_limits() {
    let a = pca_asymptotics(&PhiContext::new(NoiseSpectrum::quadratic(), 2.0).unwrap());
    assert!((a.lambda_c.unwrap() - 2.5).abs() < 1e-9 && (a.overlap_sq - 0.75).abs() < 1e-6);
    let b = pca_asymptotics(&PhiContext::new(NoiseSpectrum::quadratic(), 0.9).unwrap());
    assert_eq!((b.lambda_c, b.overlap_sq), (None, 0.0));
}

#[test]
fn resolvent_moments() {
    let p = quartic_18();
    for rho in [0.1, 1.0, 10.0] {
        let d0 = d_moments(&p, rho, 0);
        assert!((d0 - p.resolvent_means(rho).0).abs() < 1e-12);
        let edge = p.ctx.spectrum().support().1;
        assert!(d_moments(&p, rho, 2) <= edge * edge * d0);
    }
    let flat = params(NoiseSpectrum::quadratic(), 0.0, Prior::two_point(0.5).unwrap());
    assert!(d_moments(&flat, 100.0, 1).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transfer_maps_are_monotone(theta in 0.2f64..3.0, eps in 0.2f64..0.95, a in 0.01f64..50.0, b in 0.01f64..50.0) {
        let p = params(NoiseSpectrum::quartic(0.0).unwrap(), theta, Prior::two_point(eps).unwrap());
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(f1(&p, lo) <= f1(&p, hi) + 1e-12);
        prop_assert!((0.0..1.0).contains(&f1(&p, lo)));
        let (w1, w2) = (lo / 50.5, hi / 50.5);
        prop_assert!(f2(&p, w1).unwrap() <= f2(&p, w2).unwrap() * (1.0 + 1e-12));
        prop_assert!(f2(&p, w1).unwrap() > 0.0);
    }

    #[test]
    fn replica_equations_hold_at_fixed_points(gamma in 0.0f64..1.0, theta in 0.9f64..3.0, eps in 0.4f64..0.95) {
        let p = params(NoiseSpectrum::quartic(gamma).unwrap(), theta, Prior::two_point(eps).unwrap());
        let fp = fixed_point(&p, 1e-13, 100_000).unwrap();
        prop_assume!(fp.omega_star > 1e-6 && fp.omega_star < 1.0 - 1e-6);
        let r = replica_residual(&p, fp.omega_star, fp.rho_star).unwrap();
        prop_assert!(r.max_abs_residual() < 1e-8, "{:?}", r);
        let alt = alt_fixed_point_residuals(&p, fp.omega_star, fp.rho_star).unwrap();
        prop_assert!(alt.iter().all(|x| x.abs() < 1e-8), "{:?}", alt);
        prop_assert!((fp.mmse_star - mmse(&p.prior, fp.omega_star).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn traces_are_monotone(theta in 0.2f64..3.0, eps in 0.1f64..0.95, which in 0usize..3) {
        let spec = [NoiseSpectrum::quadratic(), NoiseSpectrum::quartic(0.3).unwrap(), NoiseSpectrum::sestic()][which].clone();
        let p = params(spec, theta, Prior::two_point(eps).unwrap());
        let tr = run_se(&p, 30).unwrap();
        for w in tr.omegas.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
        for w in tr.rhos.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
    }
}
