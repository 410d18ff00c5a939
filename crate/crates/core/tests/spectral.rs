use proptest::prelude::*;
use spiked_oamp::spectral::*;

fn trace_ensembles() -> Vec<NoiseSpectrum> {
    vec![
        NoiseSpectrum::quadratic(),
        NoiseSpectrum::quartic(0.0).unwrap(),
        NoiseSpectrum::quartic(0.5).unwrap(),
        NoiseSpectrum::quartic(1.0).unwrap(),
        NoiseSpectrum::sestic(),
    ]
}

#[test]
fn normalization_and_symmetry() {
    for spec in trace_ensembles() {
        assert!((spec.expect(|_| 1.0) - 1.0).abs() < 1e-9, "{}", spec.name());
        assert!(spec.expect(|l| l).abs() < 1e-10, "{}", spec.name());
        assert!(spec.hilbert(0.0).abs() < 1e-12, "{}", spec.name());
        if spec.quartic_params().is_some() {
            assert!((spec.expect(|l| l * l) - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn semicircle_closed_forms() {
    let q = NoiseSpectrum::quadratic();
    assert!((q.density(0.0) - 1.0 / std::f64::consts::PI).abs() < 1e-14);
    let pi = std::f64::consts::PI;
    assert!((pi * q.hilbert(2.5) - 0.5).abs() < 1e-9);
    assert!((pi * q.hilbert(1.0) - 0.5).abs() < 1e-12);
    assert_eq!(NoiseSpectrum::quartic(0.0).unwrap().density(3f64.sqrt()), 0.0);
}

#[test]
fn phi_is_nonnegative_everywhere() {
    for spec in trace_ensembles() {
        for theta in [0.3, 0.8, 1.8, 3.0] {
            let ctx = PhiContext::new(spec.clone(), theta).unwrap();
            let (lo, hi) = spec.support();
            let (a, b) = (lo - 2.0, hi + 5.0);
            for i in 0..10_000 {
                let l = a + (b - a) * i as f64 / 9999.0;
                assert!(ctx.phi(l) >= 0.0, "{} θ = {theta}, λ = {l}", spec.name());
            }
        }
    }
}

#[test]
fn phi_poly_agrees_with_phi_on_support_and_atoms() {
    for spec in trace_ensembles() {
        for theta in [0.5, 1.8] {
            let ctx = PhiContext::new(spec.clone(), theta).unwrap();
            let (lo, hi) = spec.support();
            for i in 1..20 {
                let l = lo + (hi - lo) * i as f64 / 20.0;
                assert!((ctx.phi(l) - ctx.phi_poly(l).unwrap()).abs() < 1e-8, "{} λ = {l}", spec.name());
            }
            for atom in ctx.nu_measure().unwrap().atoms {
                assert!(ctx.phi_poly(atom.location).unwrap().abs() < 1e-8);
                assert!(ctx.phi(atom.location).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn phi_poly_anchor_values() {
    let q = PhiContext::new(NoiseSpectrum::quadratic(), 1.0).unwrap();
    assert!(q.phi_poly(2.0).unwrap().abs() < 1e-14);
    let s = PhiContext::new(NoiseSpectrum::sestic(), 1.0).unwrap();
    assert!((s.phi_poly(0.0).unwrap() - 1.54).abs() < 1e-12);
    let c = PhiContext::new(NoiseSpectrum::quadratic(), 2.0).unwrap();
    assert!(c.phi(2.5).abs() < 1e-12);
}

#[test]
fn signal_measure_for_the_semicircle() {
    let nu = PhiContext::new(NoiseSpectrum::quadratic(), 2.0).unwrap().nu_measure().unwrap();
    assert!((nu.ac_mass() - 0.25).abs() < 1e-6);
    assert_eq!(nu.atoms.len(), 1);
    assert!((nu.atoms[0].location - 2.5).abs() < 1e-9 && (nu.atoms[0].weight - 0.75).abs() < 1e-6);
    // A narrow bump at the atom sees only the atom.
    let bump = nu.expect(|l| (-((l - 2.5) / 0.05).powi(2)).exp());
    assert!((bump - 0.75).abs() < 1e-6);

    let sub = PhiContext::new(NoiseSpectrum::quadratic(), 0.5).unwrap().nu_measure().unwrap();
    assert!(sub.atoms.is_empty() && (sub.ac_mass() - 1.0).abs() < 1e-6);
    assert!(PhiContext::new(NoiseSpectrum::quadratic(), 0.9).unwrap().outlier().is_none());
}

#[test]
fn empirical_spectra_lack_a_polynomial() {
    let grid: Vec<f64> = (0..=200).map(|i| -2.0 + 0.02 * i as f64).collect();
    let density: Vec<f64> = grid.iter().map(|&l| (4.0 - l * l).max(0.0).sqrt() / (2.0 * std::f64::consts::PI)).collect();
    let spec = NoiseSpectrum::empirical("semi", grid, density).unwrap();
    let ctx = PhiContext::new(spec, 2.0).unwrap();
    assert!(ctx.phi_poly(0.0).is_err());
    let o = ctx.outlier().unwrap();
    assert!((o.location - 2.5).abs() < 0.02, "{o:?}");
}

#[test]
fn parses_config_names() {
    assert_eq!(NoiseSpectrum::parse("quadratic").unwrap().name(), "quadratic");
    assert!(NoiseSpectrum::parse("quartic:0.5").is_ok());
    assert!(NoiseSpectrum::parse("sestic").is_ok());
    assert!(NoiseSpectrum::parse("octic").is_err());
    assert!(NoiseSpectrum::parse("quartic:2").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quartic_family_is_normalized(gamma in 0.0f64..=1.0) {
        let spec = NoiseSpectrum::quartic(gamma).unwrap();
        let kappa = quartic_kappa(gamma);
        let closed = (8.0 - 9.0 * gamma + (64.0 - 144.0 * gamma + 108.0 * gamma * gamma - 27.0 * gamma.powi(3)).sqrt()) / 27.0;
        prop_assert!((kappa - closed).abs() < 1e-14);
        prop_assert!((spec.expect(|_| 1.0) - 1.0).abs() < 1e-8);
        prop_assert!((spec.expect(|l| l * l) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn signal_measure_closes(theta in 0.05f64..4.0, which in 0usize..5) {
        let spec = trace_ensembles()[which].clone();
        let ctx = PhiContext::new(spec.clone(), theta).unwrap();
        let nu = ctx.nu_measure().unwrap();
        prop_assert!((nu.total_mass() - 1.0).abs() < 1e-6);
        for a in &nu.atoms {
            prop_assert!(a.weight > 0.0 && a.weight < 1.0);
            prop_assert!(a.location > spec.support().1);
        }
        prop_assert_eq!(nu.atoms.len(), usize::from(theta > ctx.theta_c()));
    }

    #[test]
    fn key_resolvent_identity(theta in 0.05f64..4.0, rho in 0.05f64..20.0, which in 0usize..5) {
        let ctx = PhiContext::new(trace_ensembles()[which].clone(), theta).unwrap();
        let nu = ctx.nu_measure().unwrap();
        let lhs = nu.expect_phi(|_, p| 1.0 / (rho + p));
        let rhs = (1.0 - ctx.expect_mu_phi(|_, p| 1.0 / (rho + p))) / rho;
        prop_assert!((lhs - rhs).abs() < 1e-6);
    }

    #[test]
    fn hilbert_is_continuous_inside_support(which in 0usize..5, frac in 0.02f64..0.98) {
        let spec = trace_ensembles()[which].clone();
        let (lo, hi) = spec.support();
        let l = lo + (hi - lo) * frac;
        let pv = spec.hilbert(l);
        prop_assert!(pv.is_finite());
        let h = 1e-5;
        prop_assert!((spec.hilbert(l + h) - spec.hilbert(l - h)).abs() < 1e-3);
    }

    #[test]
    fn cdf_is_monotone(which in 0usize..5, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let spec = trace_ensembles()[which].clone();
        let (lo, hi) = spec.support();
        let (x, y) = (lo + (hi - lo) * a.min(b), lo + (hi - lo) * a.max(b));
        prop_assert!(spec.cdf(x) <= spec.cdf(y) + 1e-12);
        let p = spec.cdf(x);
        prop_assert!((spec.quantile(p) - x).abs() < 1e-6);
    }
}
