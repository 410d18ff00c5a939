use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::denoiser::{apply_matrix_denoiser, DenoiserBackend};
use super::model::SpikedModel;
use super::{rng_for, Stream};
use crate::error::{Error, Result};
use crate::par;
use crate::priors::{DmmseEstimator, PosteriorMean, Prior};
use crate::spectral::PhiContext;
use crate::state_evolution::{run_se, Regime, SEParams};

#[derive(Debug, Clone, Copy, Default)]
pub struct OampOptions {
    pub backend: DenoiserBackend,
    /// Keep every `x_t` in the returned metrics.
    pub record_iterates: bool,
}

/// Empirical and predicted statistics for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub t: usize,
    /// `⟨x_t, x⋆⟩/(‖x_t‖‖x⋆‖)`.
    pub overlap: f64,
    /// `⟨x_t, x⋆⟩/N`.
    pub inner: f64,
    /// `‖x_t‖²/N`.
    pub norm: f64,
    /// `‖x̂_t − x⋆‖²/N`.
    pub mse: f64,
    /// Normalized overlap of `x̂_t` with `x⋆`.
    pub est_overlap: f64,
    pub se_omega: f64,
    pub se_overlap: f64,
    pub se_mse: f64,
    pub rho: f64,
    pub cg_iters: usize,
    pub cg_residual: f64,
    pub min_ritz: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub theta: f64,
    pub n: usize,
    pub seed: u64,
    pub steps: Vec<StepMetrics>,
    #[serde(skip)]
    pub iterates: Vec<Vec<f64>>,
}

impl RunMetrics {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let den = (par::norm_sq(a) * par::norm_sq(b)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (par::dot(a, b) / den).clamp(-1.0, 1.0)
    }
}

fn guard(t: usize, what: &'static str, xs: &[f64]) -> Result<()> {
    if par::sum(xs).is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { t, what })
    }
}

pub(crate) fn step_metrics(x_star: &[f64], x: &[f64], est: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let inner = par::dot(x, x_star) / n;
    let norm = par::norm_sq(x) / n;
    let err = par::zip_map(est, x_star, |a, b| a - b);
    let mse = par::norm_sq(&err) / n;
    (cosine(x, x_star), inner, norm, mse, cosine(est, x_star))
}

/// Optimal OAMP with state-evolution parameters. The first denoiser input
/// is the prior mean in every coordinate.
pub fn run_oamp(
    model: &SpikedModel,
    prior: &Prior,
    ctx: &PhiContext,
    t_max: usize,
    opts: OampOptions,
) -> Result<RunMetrics> {
    let params = SEParams::new(prior.clone(), ctx.clone())?;
    let se = run_se(&params, t_max)?;
    if se.regime != Regime::Typical {
        return Err(Error::Domain {
            what: "mmse(0)",
            value: se.stats0.mmse,
            domain: "(0, 1)",
        });
    }
    let n = model.n();
    let mut f = vec![prior.mean(); n];
    let mut steps = Vec::with_capacity(t_max);
    let mut iterates = Vec::new();
    for t in 1..=t_max {
        let (omega, rho) = (se.omegas[t - 1], se.rhos[t - 1]);
        let out = apply_matrix_denoiser(model, ctx, rho, &f, opts.backend)?;
        let gain = if rho == f64::INFINITY { 1.0 } else { 1.0 + 1.0 / rho };
        let scale = gain / omega.sqrt();
        let x: Vec<f64> = par::map(&out.value, |v| scale * v);
        guard(t, "iterate", &x)?;
        let est = PosteriorMean::new(prior, omega)?.apply(&x);
        let (overlap, inner, norm, mse, est_overlap) = step_metrics(&model.x_star, &x, &est);
        let cg = out.cg;
        steps.push(StepMetrics {
            t,
            overlap,
            inner,
            norm,
            mse,
            est_overlap,
            se_omega: omega,
            se_overlap: omega.sqrt(),
            se_mse: se.mmse_curve[t - 1],
            rho,
            cg_iters: cg.map_or(0, |c| c.iterations),
            cg_residual: cg.map_or(0.0, |c| c.residual),
            min_ritz: cg.map_or(f64::NAN, |c| c.min_ritz),
        });
        if t < t_max {
            f = DmmseEstimator::new(prior, se.stats[t - 1])?.apply(&x);
            guard(t, "denoiser output", &f)?;
        }
        if opts.record_iterates {
            iterates.push(x);
        }
    }
    Ok(RunMetrics {
        theta: model.theta,
        n,
        seed: model.seed(),
        steps,
        iterates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PcaResult {
    pub top_eig: f64,
    pub overlap_sq: f64,
}

/// Power iteration on `Y + sI` with `s = max|λᵢ(W)| + θ`, so the top
/// eigenvalue of `Y` dominates in magnitude.
pub fn run_pca(model: &SpikedModel, iters: usize) -> Result<PcaResult> {
    if iters == 0 {
        return Err(Error::Domain {
            what: "iters",
            value: 0.0,
            domain: "iters ≥ 1",
        });
    }
    let n = model.n();
    let shift = model.noise.eigenvalues().iter().fold(0.0f64, |m, l| m.max(l.abs())) + model.theta;
    let mut rng = rng_for(model.seed(), Stream::Power);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut nv = par::norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    for _ in 0..iters {
        let mut w = model.matvec_y(&v);
        par::axpby(shift, &v, 1.0, &mut w);
        nv = par::norm_sq(&w).sqrt();
        v = par::map(&w, |x| x / nv);
    }
    let top_eig = par::dot(&v, &model.matvec_y(&v));
    let c = cosine(&v, &model.x_star);
    Ok(PcaResult {
        top_eig,
        overlap_sq: c * c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Entry {
    pub statistic: &'static str,
    pub empirical: f64,
    pub expected: f64,
}

impl W2Entry {
    pub fn deviation(&self) -> f64 {
        (self.empirical - self.expected).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Report {
    pub entries: Vec<W2Entry>,
}

impl W2Report {
    pub fn max_deviation(&self) -> f64 {
        self.entries.iter().map(W2Entry::deviation).fold(0.0, f64::max)
    }
}

/// Compares `(1/N)Σ h(x⋆ᵢ, xᵢ)` to its value under `X = √ω X⋆ + √(1−ω) Z`
/// for `h ∈ {xy, x²y², y², y}`.
pub fn empirical_w2_check(prior: &Prior, x_star: &[f64], x: &[f64], omega: f64) -> Result<W2Report> {
    if x_star.len() != x.len() {
        return Err(Error::Length {
            expected: x_star.len(),
            got: x.len(),
        });
    }
    crate::error::check_omega(omega)?;
    let n = x.len() as f64;
    let m1 = prior.mean();
    let m4: f64 = prior.atoms().iter().map(|(v, p)| p * v.powi(4)).sum();
    let xy = par::dot(x_star, x) / n;
    let x2y2 = par::zip_map(x_star, x, |a, b| a * a * b * b);
    let entries = vec![
        W2Entry {
            statistic: "xy",
            empirical: xy,
            expected: omega.sqrt(),
        },
        W2Entry {
            statistic: "x2y2",
            empirical: par::sum(&x2y2) / n,
            expected: omega * m4 + (1.0 - omega),
        },
        W2Entry {
            statistic: "y2",
            empirical: par::norm_sq(x) / n,
            expected: 1.0,
        },
        W2Entry {
            statistic: "y",
            empirical: par::sum(x) / n,
            expected: omega.sqrt() * m1,
        },
    ];
    Ok(W2Report { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::NoiseMode;
    use crate::spectral::NoiseSpectrum;

    #[test]
    fn w2_check_is_exact_on_a_constructed_channel() {
        let prior = Prior::two_point(0.5).unwrap();
        let xs = vec![0.0, 0.0, 2.0, 0.0];
        let report = empirical_w2_check(&prior, &xs, &xs, 1.0).unwrap();
        // x = x⋆ is the ω = 1 channel; all four statistics are exact here.
        assert!(report.max_deviation() < 1e-12, "{report:?}");
    }

    #[test]
    fn pca_rayleigh_quotient_is_bounded_by_top_eigenvalue() {
        let prior = Prior::two_point(0.5).unwrap();
        let spec = NoiseSpectrum::quadratic();
        let m = SpikedModel::sample(&prior, &spec, 2.0, 256, 3, NoiseMode::Structured, 4096).unwrap();
        let r = run_pca(&m, 200).unwrap();
        let top = m.dense_y(4096).unwrap().symmetric_eigenvalues().max();
        assert!(r.top_eig <= top + 1e-12);
        assert!((r.top_eig - top).abs() < 1e-6);
    }
}
