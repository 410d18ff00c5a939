//! Degree-`D` lifted OAMP: each step combines `(pᵢ(Y) − E_μ[pᵢ])·f_t` for a
//! polynomial basis `p₁..p_D` with the linear weights that maximize the
//! effective SNR.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::model::SpikedModel;
use super::oamp::{step_metrics, RunMetrics, StepMetrics};
use crate::error::{Error, Result};
use crate::par;
use crate::priors::{dmmse, mmse, ChannelStats, DmmseEstimator, PosteriorMean, Prior};
use crate::spectral::{PhiContext, SignalMeasure};

pub const MAX_DEGREE: usize = 12;
const PINV_THRESHOLD: f64 = 1e-10;

/// Moments of the Chebyshev basis `pᵢ(λ) = Tᵢ((λ − center)/half_width)`.
#[derive(Debug, Clone)]
pub struct LiftedMoments {
    pub degree: usize,
    pub center: f64,
    pub half_width: f64,
    /// `E_μ[pᵢ]`.
    pub mu_mean: Vec<f64>,
    /// `qᵢ = E_ν[pᵢ] − E_μ[pᵢ]`.
    pub q: DVector<f64>,
    /// `E_ν[(pᵢ − E_μpᵢ)(pⱼ − E_μpⱼ)]`.
    pub big_q: DMatrix<f64>,
    /// `Cov_μ(pᵢ, pⱼ)`.
    pub gamma: DMatrix<f64>,
}

fn chebyshev_all(x: f64, degree: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(degree + 1);
    t.push(1.0);
    if degree >= 1 {
        t.push(x);
    }
    for k in 1..degree {
        t.push(2.0 * x * t[k] - t[k - 1]);
    }
    t
}

pub fn lifted_moments(ctx: &PhiContext, nu: &SignalMeasure, degree: usize) -> Result<LiftedMoments> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::Domain {
            what: "D",
            value: degree as f64,
            domain: "[1, 12]",
        });
    }
    let (mut lo, mut hi) = ctx.spectrum().support();
    for a in &nu.atoms {
        lo = lo.min(a.location);
        hi = hi.max(a.location);
    }
    let center = 0.5 * (lo + hi);
    let half_width = 0.5 * (hi - lo);
    let basis = |l: f64| chebyshev_all((l - center) / half_width, degree);
    let spec = ctx.spectrum();

    let mu_mean: Vec<f64> = (1..=degree).map(|i| spec.expect(|l| basis(l)[i])).collect();
    let mut gamma = DMatrix::zeros(degree, degree);
    let mut big_q = DMatrix::zeros(degree, degree);
    let mut q = DVector::zeros(degree);
    for i in 0..degree {
        q[i] = nu.expect(|l| basis(l)[i + 1]) - mu_mean[i];
        for j in 0..=i {
            let (mi, mj) = (mu_mean[i], mu_mean[j]);
            let g = spec.expect(|l| {
                let b = basis(l);
                (b[i + 1] - mi) * (b[j + 1] - mj)
            });
            let h = nu.expect(|l| {
                let b = basis(l);
                (b[i + 1] - mi) * (b[j + 1] - mj)
            });
            gamma[(i, j)] = g;
            gamma[(j, i)] = g;
            big_q[(i, j)] = h;
            big_q[(j, i)] = h;
        }
    }
    Ok(LiftedMoments {
        degree,
        center,
        half_width,
        mu_mean,
        q,
        big_q,
        gamma,
    })
}

/// Pseudo-inverse applied to `b`, dropping eigenvalues below
/// `PINV_THRESHOLD · λ_max`. Also returns the retained rank.
fn pinv_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let eig = super::solver::symmetric_eigen(m);
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = PINV_THRESHOLD * max;
    let coords = eig.eigenvectors.transpose() * b;
    let mut scaled = DVector::zeros(b.len());
    let mut rank = 0;
    for k in 0..b.len() {
        let l = eig.eigenvalues[k];
        if l.abs() > cut && max > 0.0 {
            scaled[k] = coords[k] / l;
            rank += 1;
        }
    }
    (&eig.eigenvectors * scaled, rank)
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftedStep {
    pub t: usize,
    pub kappa: f64,
    pub omega: f64,
    pub weights: Vec<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftedSe {
    pub degree: usize,
    pub steps: Vec<LiftedStep>,
    /// Rank deficiencies detected in the moment matrices.
    pub warnings: Vec<String>,
}

impl LiftedSe {
    pub fn omegas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.omega).collect()
    }
}

/// `κ_t = dmmse(ω_{t−1})`, `ω_t = qᵀ[Q + κ_t/(1−κ_t)·Γ]†q`, with iterate
/// weights `ω_t^{−1/2}·[(1−κ_t)Q + κ_tΓ]†q`.
pub fn lifted_se(moments: &LiftedMoments, prior: &Prior, t_max: usize) -> Result<LiftedSe> {
    let m0 = mmse(prior, 0.0)?;
    if !(m0 > 0.0 && m0 < 1.0) {
        return Err(Error::Domain {
            what: "mmse(0)",
            value: m0,
            domain: "(0, 1)",
        });
    }
    let d = moments.degree;
    let mut steps = Vec::with_capacity(t_max);
    let mut warnings = Vec::new();
    let mut kappa = m0;
    for t in 1..=t_max {
        let r = kappa / (1.0 - kappa);
        let m = &moments.big_q + &moments.gamma * r;
        let (sol, rank) = pinv_solve(&m, &moments.q);
        let omega = moments.q.dot(&sol).clamp(0.0, 1.0);
        if rank < d {
            warnings.push(format!("t = {t}: moment matrix has numerical rank {rank} < D = {d}"));
        }
        // [(1−κ)Q + κΓ]† = (1−κ)⁻¹·[Q + κ/(1−κ)·Γ]†
        let weights: Vec<f64> = if omega > 0.0 {
            sol.iter().map(|v| v / ((1.0 - kappa) * omega.sqrt())).collect()
        } else {
            vec![0.0; d]
        };
        steps.push(LiftedStep {
            t,
            kappa,
            omega,
            weights,
            rank,
        });
        if omega >= 1.0 {
            kappa = 0.0;
        } else {
            kappa = dmmse(prior, omega)?;
        }
    }
    Ok(LiftedSe {
        degree: d,
        steps,
        warnings,
    })
}

/// Runs lifted OAMP on a sampled instance; `se_omega` in the metrics holds
/// the lifted recursion `ω_t^{(D)}`.
pub fn run_lifted_oamp(
    model: &SpikedModel,
    prior: &Prior,
    ctx: &PhiContext,
    degree: usize,
    t_max: usize,
) -> Result<(RunMetrics, LiftedSe)> {
    let nu = ctx.nu_measure()?;
    let moments = lifted_moments(ctx, &nu, degree)?;
    let se = lifted_se(&moments, prior, t_max)?;
    let n = model.n();
    let (c, h) = (moments.center, moments.half_width);
    let scaled = |v: &[f64]| -> Vec<f64> {
        let mut y = model.matvec_y(v);
        par::axpby(-c / h, v, 1.0 / h, &mut y);
        y
    };
    let mut f = vec![prior.mean(); n];
    let mut steps = Vec::with_capacity(t_max);
    for (t, st) in se.steps.iter().enumerate().map(|(i, s)| (i + 1, s)) {
        // x = Σ vᵢ (Tᵢ(Ỹ) − E_μTᵢ)·f via the three-term recurrence.
        let mut x = vec![0.0; n];
        let mut prev = f.clone();
        let mut cur = scaled(&f);
        for i in 1..=degree {
            if i > 1 {
                let mut next = scaled(&cur);
                par::axpby(-1.0, &prev, 2.0, &mut next);
                prev = std::mem::replace(&mut cur, next);
            }
            let w = st.weights[i - 1];
            par::axpby(w, &cur, 1.0, &mut x);
            par::axpby(-w * moments.mu_mean[i - 1], &f, 1.0, &mut x);
        }
        if !par::sum(&x).is_finite() {
            return Err(Error::NonFinite { t, what: "lifted iterate" });
        }
        let omega = st.omega;
        let stats = ChannelStats::new(prior, omega)?;
        let est = PosteriorMean::new(prior, omega)?.apply(&x);
        let (overlap, inner, norm, mse, est_overlap) = step_metrics(&model.x_star, &x, &est);
        steps.push(StepMetrics {
            t,
            overlap,
            inner,
            norm,
            mse,
            est_overlap,
            se_omega: omega,
            se_overlap: omega.sqrt(),
            se_mse: stats.mmse,
            rho: f64::NAN,
            cg_iters: 0,
            cg_residual: 0.0,
            min_ritz: f64::NAN,
        });
        f = DmmseEstimator::new(prior, stats)?.apply(&x);
    }
    Ok((
        RunMetrics {
            theta: model.theta,
            n,
            seed: model.seed(),
            steps,
            iterates: Vec::new(),
        },
        se,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::NoiseSpectrum;

    #[test]
    fn degree_one_matches_scalar_recursion() {
        let theta = 1.5;
        let ctx = PhiContext::new(NoiseSpectrum::quadratic(), theta).unwrap();
        let nu = ctx.nu_measure().unwrap();
        let prior = Prior::two_point(0.5).unwrap();
        let mom = lifted_moments(&ctx, &nu, 1).unwrap();
        let se = lifted_se(&mom, &prior, 4).unwrap();
        // For the semicircle, E_ν[Λ] = θ and E_ν[Λ²] = 1 + θ², while μ is
        // centered with unit variance.
        let mut kappa = mmse(&prior, 0.0).unwrap();
        for st in &se.steps {
            let w = theta * theta / (1.0 + theta * theta + kappa / (1.0 - kappa));
            assert!((st.omega - w).abs() < 1e-9, "{} vs {w}", st.omega);
            kappa = dmmse(&prior, w).unwrap();
        }
    }

    #[test]
    fn pinv_drops_null_directions() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let (x, rank) = pinv_solve(&m, &b);
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
