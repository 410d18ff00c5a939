//! State evolution of optimal OAMP: the maps 𝓕₁ and 𝓕₂, the `(ω_t, ρ_t)`
//! recursion, fixed points, landscape scans, PCA asymptotics and the
//! quartic replica residuals.

use serde::Serialize;

use crate::error::{check_omega, Error, Result};
use crate::par;
use crate::priors::{ChannelStats, Prior};
use crate::spectral::{PhiContext, SignalMeasure, SpectrumKind};

/// Guard below `ω = 1` used by landscape scans.
pub const OMEGA_GUARD: f64 = 1e-4;
/// Central-difference step for stability slopes.
pub const SLOPE_STEP: f64 = 1e-5;

/// Which branch of the recursion applies, decided by `mmse(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `mmse(0) ∈ (0, 1)`.
    Typical,
    /// `mmse(0) = 0`: the prior alone pins down the signal.
    PerfectRecovery,
    /// `mmse(0) = 1`: zero-mean prior, the iteration stays at zero.
    Trivial,
}

#[derive(Debug, Clone)]
pub struct SEParams {
    pub prior: Prior,
    pub ctx: PhiContext,
    pub nu: SignalMeasure,
    mmse0: f64,
}

impl SEParams {
    pub fn new(prior: Prior, ctx: PhiContext) -> Result<Self> {
        let nu = ctx.nu_measure()?;
        let mmse0 = crate::priors::mmse(&prior, 0.0)?;
        Ok(Self {
            prior,
            ctx,
            nu,
            mmse0,
        })
    }

    pub fn theta(&self) -> f64 {
        self.ctx.theta()
    }

    pub fn regime(&self) -> Regime {
        if self.mmse0 <= 1e-14 {
            Regime::PerfectRecovery
        } else if self.mmse0 >= 1.0 - 1e-14 {
            Regime::Trivial
        } else {
            Regime::Typical
        }
    }

    /// `𝓕₁(ρ) = 1 − E_μ[1/(φ+ρ)] / E_μ[φ/(φ+ρ)]`, with the limit
    /// `1 − 1/E_μ[φ]` at `ρ = ∞`.
    pub fn f1(&self, rho: f64) -> f64 {
        if rho == f64::INFINITY {
            return 1.0 - 1.0 / self.ctx.expect_mu_phi(|_, p| p);
        }
        let (a, b) = self.resolvent_means(rho);
        1.0 - a / b
    }

    /// `(E_μ[1/(φ+ρ)], E_μ[φ/(φ+ρ)])`.
    pub fn resolvent_means(&self, rho: f64) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for (&w, &p) in self.ctx.spectrum().weights().iter().zip(self.ctx.phi_nodes()) {
            let r = 1.0 / (p + rho);
            a += w * r;
            b += w * p * r;
        }
        (a, b)
    }

    /// `𝓕₂(ω) = 1/dmmse(ω) − 1`.
    ///
    /// For a non-degenerate prior whose mmse underflows to zero below
    /// `ω = 1` the channel is numerically noiseless and `+∞` is returned.
    pub fn f2(&self, omega: f64) -> Result<f64> {
        Ok(self.f2_stats(omega)?.0)
    }

    fn f2_stats(&self, omega: f64) -> Result<(f64, ChannelStats)> {
        check_omega(omega)?;
        if omega >= 1.0 {
            return Err(Error::Domain {
                what: "omega",
                value: omega,
                domain: "[0, 1)",
            });
        }
        let stats = ChannelStats::new(&self.prior, omega)?;
        if stats.degenerate || stats.dmmse <= 0.0 {
            if self.regime() != Regime::PerfectRecovery {
                return Ok((f64::INFINITY, stats));
            }
            return Err(Error::Degenerate(format!(
                "dmmse vanishes at omega = {omega} for prior {}",
                self.prior.name()
            )));
        }
        Ok((1.0 / stats.dmmse - 1.0, stats))
    }

    /// `𝓕₁(𝓕₂(ω))`.
    pub fn f1f2(&self, omega: f64) -> Result<f64> {
        Ok(self.f1(self.f2(omega)?))
    }
}

pub fn f1(params: &SEParams, rho: f64) -> f64 {
    params.f1(rho)
}

pub fn f2(params: &SEParams, omega: f64) -> Result<f64> {
    params.f2(omega)
}

/// Trajectory `(ω_t, ρ_t)` for `t = 1..=T`; `ω₀ = 0` is implicit.
#[derive(Debug, Clone, Serialize)]
pub struct SETrace {
    pub regime: Regime,
    pub omegas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub mmse_curve: Vec<f64>,
    /// Channel statistics at `ω_t`, used by the iterate denoisers.
    #[serde(skip)]
    pub stats: Vec<ChannelStats>,
    #[serde(skip)]
    pub stats0: ChannelStats,
}

impl SETrace {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// `ω_t` with `ω₀ = 0`.
    pub fn omega(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.omegas[t - 1]
        }
    }

    /// Channel statistics at `ω_t`, including `t = 0`.
    pub fn stats_at(&self, t: usize) -> ChannelStats {
        if t == 0 {
            self.stats0
        } else {
            self.stats[t - 1]
        }
    }
}

/// Runs `T` steps of `ρ_t = 𝓕₂(ω_{t−1})`, `ω_t = 𝓕₁(ρ_t)` from `ω₀ = 0`.
pub fn run_se(params: &SEParams, t_max: usize) -> Result<SETrace> {
    if t_max == 0 {
        return Err(Error::Domain {
            what: "T",
            value: 0.0,
            domain: "T ≥ 1",
        });
    }
    let regime = params.regime();
    let stats0 = ChannelStats::from_mmse(0.0, params.mmse0);
    if regime != Regime::Typical {
        let s = ChannelStats::from_mmse(0.0, params.mmse0);
        return Ok(SETrace {
            regime,
            omegas: vec![0.0; t_max],
            rhos: vec![0.0; t_max],
            mmse_curve: vec![params.mmse0; t_max],
            stats: vec![s; t_max],
            stats0,
        });
    }
    let mut trace = SETrace {
        regime,
        omegas: Vec::with_capacity(t_max),
        rhos: Vec::with_capacity(t_max),
        mmse_curve: Vec::with_capacity(t_max),
        stats: Vec::with_capacity(t_max),
        stats0,
    };
    let mut omega = 0.0;
    for _ in 0..t_max {
        let rho = params.f2(omega)?;
        omega = params.f1(rho);
        let s = ChannelStats::new(&params.prior, omega)?;
        trace.rhos.push(rho);
        trace.omegas.push(omega);
        trace.mmse_curve.push(s.mmse);
        trace.stats.push(s);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub omega_star: f64,
    pub rho_star: f64,
    pub mmse_star: f64,
    pub iterations: usize,
}

/// Iterates the recursion until `|ω_t − ω_{t−1}| < tol`. The returned pair
/// satisfies `ω⋆ = 𝓕₁(ρ⋆)` exactly.
pub fn fixed_point(params: &SEParams, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    if params.regime() != Regime::Typical {
        return Ok(FixedPoint {
            omega_star: 0.0,
            rho_star: 0.0,
            mmse_star: params.mmse0,
            iterations: 0,
        });
    }
    let mut omega = 0.0;
    let mut step = f64::INFINITY;
    for it in 1..=max_iter {
        let rho = params.f2(omega)?;
        let next = params.f1(rho);
        step = (next - omega).abs();
        omega = next;
        if step < tol {
            return Ok(FixedPoint {
                omega_star: omega,
                rho_star: rho,
                mmse_star: crate::priors::mmse(&params.prior, omega)?,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_step: step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LandscapeCrossing {
    pub omega: f64,
    pub slope: f64,
    pub stable: bool,
    /// The smallest crossing, which the recursion from `ω₀ = 0` reaches.
    pub reachable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Landscape {
    /// `(ω, 𝓕₁(𝓕₂(ω)))` samples.
    pub points: Vec<(f64, f64)>,
    pub fixed_points: Vec<LandscapeCrossing>,
}

impl Landscape {
    pub fn n_stable(&self) -> usize {
        self.fixed_points.iter().filter(|f| f.stable).count()
    }
}

/// Samples `ω ↦ 𝓕₁(𝓕₂(ω))` on a uniform grid over `[0, 1 − δ]` and locates
/// the crossings with the diagonal.
pub fn scan_landscape(params: &SEParams, grid_size: usize) -> Result<Landscape> {
    let n = grid_size.max(2);
    let hi = 1.0 - OMEGA_GUARD;
    let values: Vec<Result<(f64, f64)>> = par::map_indices(n, |k| {
        let w = hi * k as f64 / (n - 1) as f64;
        Ok((w, params.f1f2(w)?))
    });
    let points = values.into_iter().collect::<Result<Vec<_>>>()?;
    let g = |w: f64| -> Result<f64> { Ok(params.f1f2(w)? - w) };

    let mut roots = Vec::new();
    for k in 0..points.len() {
        let gk = points[k].1 - points[k].0;
        if gk == 0.0 {
            roots.push(points[k].0);
            continue;
        }
        if k + 1 < points.len() {
            let gn = points[k + 1].1 - points[k + 1].0;
            if gk * gn < 0.0 {
                let (mut lo, mut hi) = (points[k].0, points[k + 1].0);
                let mut glo = gk;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let gm = g(mid)?;
                    if (gm > 0.0) == (glo > 0.0) {
                        lo = mid;
                        glo = gm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
    }

    let mut fixed_points = Vec::with_capacity(roots.len());
    for (i, &w) in roots.iter().enumerate() {
        let a = (w - SLOPE_STEP).max(0.0);
        let b = (w + SLOPE_STEP).min(hi);
        let slope = (params.f1f2(b)? - params.f1f2(a)?) / (b - a);
        fixed_points.push(LandscapeCrossing {
            omega: w,
            slope,
            stable: slope < 1.0,
            reachable: i == 0,
        });
    }
    Ok(Landscape {
        points,
        fixed_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PcaAsymptotics {
    pub lambda_c: Option<f64>,
    pub overlap_sq: f64,
}

/// Limit of the top eigenvalue and its squared overlap with the signal.
pub fn pca_asymptotics(ctx: &PhiContext) -> PcaAsymptotics {
    match ctx.outlier() {
        Some(o) => PcaAsymptotics {
            lambda_c: Some(o.location),
            overlap_sq: o.weight,
        },
        None => PcaAsymptotics {
            lambda_c: None,
            overlap_sq: 0.0,
        },
    }
}

/// `dᵢ = E_μ[Λⁱ/(ρ + φ(Λ))]`.
pub fn d_moments(params: &SEParams, rho: f64, i: i32) -> f64 {
    params.ctx.expect_mu_phi(|x, p| x.powi(i) / (rho + p))
}

/// Residuals of the two-equation form
/// `ω/(1−ω) = (1 − E_μ[H])(1/E_μ[H] − 1/E_ν[H])` and `E_μ[H] = mmse(ω)`,
/// with `H = 1/(ρ + φ)`.
pub fn alt_fixed_point_residuals(params: &SEParams, omega: f64, rho: f64) -> Result<[f64; 2]> {
    let d0 = d_moments(params, rho, 0);
    let e_nu = params.nu.expect_phi(|_, p| 1.0 / (rho + p));
    let m = crate::priors::mmse(&params.prior, omega)?;
    let lhs = omega / (1.0 - omega);
    let rhs = (1.0 - d0) * (1.0 / d0 - 1.0 / e_nu);
    Ok([lhs - rhs, d0 - m])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicaState {
    pub m: f64,
    pub chi: f64,
    pub m_hat: f64,
    /// m-equation, `E[H] = 1 − m`, `χ = E[ΛQH]`, m̂-equation.
    pub residuals: [f64; 4],
}

impl ReplicaState {
    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, r| a.max(r.abs()))
    }
}

/// Evaluates the quartic replica fixed-point equations at `(ω, ρ)`.
pub fn replica_residual(params: &SEParams, omega: f64, rho: f64) -> Result<ReplicaState> {
    let spectrum = params.ctx.spectrum();
    let SpectrumKind::Quartic { gamma } = spectrum.kind() else {
        return Err(Error::Unsupported {
            op: "replica_residual",
            spectrum: spectrum.name().to_string(),
        });
    };
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::Domain {
            what: "omega",
            value: omega,
            domain: "(0, 1)",
        });
    }
    if !(rho > 0.0) {
        return Err(Error::Domain {
            what: "rho",
            value: rho,
            domain: "(0, ∞)",
        });
    }
    let (_, kappa, _) = spectrum.quartic_params().expect("quartic spectrum");
    let theta = params.ctx.theta();
    let kt = kappa * theta * theta;
    let coeffs = params.ctx.phi_poly_coeffs()?;
    let h = |x: f64| 1.0 / (rho + crate::spectral::horner(coeffs, x));

    let m = 1.0 - crate::priors::mmse(&params.prior, omega)?;
    let d: Vec<f64> = (0..5).map(|i| spectrum.expect(|x| x.powi(i) * h(x))).collect();
    let chi = (1.0 - d[0]) * (d[1] + kt * d[0] * d[3] - kt * d[1] * d[2])
        / (d[0] - kt * d[0] * d[2] + kt * d[1] * d[1]);
    let shift = -kt / (1.0 - m) * (m * d[2] + chi * d[1]) + m / (1.0 - m);
    let q = |x: f64| kt * m * x * x + kt * chi * x + shift;
    let e_lqh = spectrum.expect(|x| x * q(x) * h(x));
    let e_l2qh = spectrum.expect(|x| x * x * q(x) * h(x));
    let m_hat = omega / (1.0 - omega);
    let rhs = kt * (m / (1.0 - m) * d[2] + chi / (1.0 - m) * d[1] + e_l2qh)
        + gamma * theta * theta * m;
    let mmse = crate::priors::mmse(&params.prior, omega)?;
    Ok(ReplicaState {
        m,
        chi,
        m_hat,
        residuals: [m - (1.0 - mmse), d[0] - (1.0 - m), chi - e_lqh, m_hat - rhs],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::NoiseSpectrum;

    fn params(spec: NoiseSpectrum, theta: f64, prior: Prior) -> SEParams {
        SEParams::new(prior, PhiContext::new(spec, theta).unwrap()).unwrap()
    }

    #[test]
    fn f2_anchors() {
        let p = params(NoiseSpectrum::quadratic(), 1.0, Prior::two_point(0.5).unwrap());
        assert!((p.f2(0.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        let p = params(NoiseSpectrum::quadratic(), 1.0, Prior::two_point(0.125).unwrap());
        assert!((p.f2(0.0).unwrap() - 1.0 / 63.0).abs() < 1e-14);
        assert!(p.f2(0.5).unwrap() > p.f2(0.3).unwrap());
        // mmse underflows long before ω = 1 for this prior.
        assert_eq!(p.f2(0.99).unwrap(), f64::INFINITY);
        assert!(p.f2(1.0).is_err());
    }

    #[test]
    fn f1_limits() {
        let p = params(NoiseSpectrum::quartic(0.0).unwrap(), 1.8, Prior::two_point(0.5).unwrap());
        let e_phi = p.ctx.expect_mu_phi(|_, f| f);
        assert!((p.f1(1e8) - (1.0 - 1.0 / e_phi)).abs() < 1e-6);
        assert!(p.f1(0.5) <= p.f1(1.0) && p.f1(1.0) <= p.f1(2.0));
        let p = params(NoiseSpectrum::quadratic(), 0.5, Prior::two_point(0.5).unwrap());
        assert!(p.f1(1e-8).abs() < 1e-4);
    }

    #[test]
    fn first_step_is_exact_composition() {
        let p = params(NoiseSpectrum::quartic(0.0).unwrap(), 1.8, Prior::two_point(0.5).unwrap());
        let tr = run_se(&p, 1).unwrap();
        let rho = p.f2(0.0).unwrap();
        assert_eq!(tr.rhos[0], rho);
        assert_eq!(tr.omegas[0], p.f1(rho));
    }

    #[test]
    fn corner_regimes() {
        let unit = Prior::new("unit", vec![(1.0, 1.0)]).unwrap();
        let p = params(NoiseSpectrum::quadratic(), 2.0, unit);
        assert_eq!(p.regime(), Regime::PerfectRecovery);
        let tr = run_se(&p, 5).unwrap();
        assert!(tr.mmse_curve.iter().all(|&m| m == 0.0));

        let sym = Prior::new("rademacher", vec![(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        let p = params(NoiseSpectrum::quadratic(), 2.0, sym);
        assert_eq!(p.regime(), Regime::Trivial);
        let fp = fixed_point(&p, 1e-10, 100).unwrap();
        assert_eq!(fp.omega_star, 0.0);
        assert_eq!(fp.mmse_star, 1.0);
    }

    #[test]
    fn d_moment_zero_matches_f1_integrand() {
        let p = params(NoiseSpectrum::sestic(), 1.4, Prior::two_point(0.5).unwrap());
        let (a, _) = p.resolvent_means(0.7);
        assert!((d_moments(&p, 0.7, 0) - a).abs() < 1e-12);
        let p = params(NoiseSpectrum::quadratic(), 0.0, Prior::two_point(0.5).unwrap());
        assert!(d_moments(&p, 100.0, 1).abs() < 1e-4);
    }

    #[test]
    fn replica_rejects_other_spectra() {
        let p = params(NoiseSpectrum::sestic(), 1.4, Prior::two_point(0.5).unwrap());
        assert!(matches!(replica_residual(&p, 0.5, 1.0), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn pca_limits_share_outlier() {
        let ctx = PhiContext::new(NoiseSpectrum::quadratic(), 2.0).unwrap();
        let a = pca_asymptotics(&ctx);
        assert_eq!(a.overlap_sq, ctx.nu_measure().unwrap().atoms[0].weight);
        let ctx = PhiContext::new(NoiseSpectrum::quadratic(), 0.9).unwrap();
        assert_eq!(pca_asymptotics(&ctx), PcaAsymptotics { lambda_c: None, overlap_sq: 0.0 });
    }
}
