use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::SpikedModel;
use super::solver::{conjugate_gradient, CgReport};
use super::{rng_for, Stream};
use crate::error::{Error, Result};
use crate::par;
use crate::spectral::{horner, PhiContext};

/// How `(φ_poly(Y) + ρI)⁻¹` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserBackend {
    /// Conjugate gradients with Horner evaluation of `φ_poly(Y)`.
    Cg { tol: f64, max_iter: usize },
    /// Full eigendecomposition of a dense `Y` (small `N` only).
    Eigen { limit: usize },
}

impl Default for DenoiserBackend {
    fn default() -> Self {
        Self::Cg {
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenoiserOutput {
    pub value: Vec<f64>,
    pub cg: Option<CgReport>,
}

/// Normalizing constant `c = 1/E_μ[φ/(φ+ρ)]`.
pub(crate) fn psi_constant(ctx: &PhiContext, rho: f64) -> f64 {
    1.0 / ctx.expect_mu_phi(|_, p| p / (p + rho))
}

/// `φ_poly(Y)·w` by Horner's rule.
pub(crate) fn phi_poly_apply(model: &SpikedModel, coeffs: &[f64], w: &[f64]) -> Vec<f64> {
    let d = coeffs.len() - 1;
    let mut acc: Vec<f64> = w.iter().map(|x| coeffs[d] * x).collect();
    for k in (0..d).rev() {
        let mut next = model.matvec_y(&acc);
        par::axpby(coeffs[k], w, 1.0, &mut next);
        acc = next;
    }
    acc
}

/// The top eigenpair is split off when a super-critical outlier is present.
/// There `φ_poly` may dip below zero at finite `N`, so the exact `φ` is used
/// on that direction and CG runs on the orthogonal complement.
struct Deflation<'a> {
    vector: &'a [f64],
    phi: f64,
}

fn deflation<'a>(model: &'a SpikedModel, ctx: &PhiContext) -> Result<Option<Deflation<'a>>> {
    if ctx.outlier().is_none() {
        return Ok(None);
    }
    let top = model.top_eigen()?;
    if !top.converged || top.value <= ctx.spectrum().support().1 {
        return Ok(None);
    }
    Ok(Some(Deflation {
        vector: &top.vector,
        phi: ctx.phi(top.value),
    }))
}

fn project(u: &[f64], v: &mut [f64]) {
    let c = par::dot(u, v);
    par::axpby(-c, u, 1.0, v);
}

/// `Ψ⋆(Y;ρ)·v = v − c·φ_poly(Y)(φ_poly(Y)+ρI)⁻¹v`. `ρ = ∞` gives the limit
/// `v − φ_poly(Y)v/E_μ[φ]`.
pub fn apply_matrix_denoiser(
    model: &SpikedModel,
    ctx: &PhiContext,
    rho: f64,
    v: &[f64],
    backend: DenoiserBackend,
) -> Result<DenoiserOutput> {
    if !(rho > 0.0) {
        return Err(Error::Domain {
            what: "rho",
            value: rho,
            domain: "(0, ∞]",
        });
    }
    if v.len() != model.n() {
        return Err(Error::Length {
            expected: model.n(),
            got: v.len(),
        });
    }
    let coeffs = ctx.phi_poly_coeffs()?;
    match backend {
        DenoiserBackend::Cg { tol, max_iter } => apply_cg(model, ctx, coeffs, rho, v, tol, max_iter),
        DenoiserBackend::Eigen { limit } => apply_eigen(model, ctx, coeffs, rho, v, limit),
    }
}

fn apply_cg(
    model: &SpikedModel,
    ctx: &PhiContext,
    coeffs: &[f64],
    rho: f64,
    v: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<DenoiserOutput> {
    let defl = deflation(model, ctx)?;
    if rho == f64::INFINITY {
        let e_phi = ctx.expect_mu_phi(|_, p| p);
        let mut pv = v.to_vec();
        let mut along = 0.0;
        if let Some(d) = &defl {
            along = par::dot(d.vector, v);
            project(d.vector, &mut pv);
        }
        let mut phi_v = phi_poly_apply(model, coeffs, &pv);
        if let Some(d) = &defl {
            project(d.vector, &mut phi_v);
            par::axpby(d.phi * along, d.vector, 1.0, &mut phi_v);
        }
        let mut out = v.to_vec();
        par::axpby(-1.0 / e_phi, &phi_v, 1.0, &mut out);
        return Ok(DenoiserOutput { value: out, cg: None });
    }

    // Ψv = v − c·A(A+ρI)⁻¹v with A = φ_poly(Y). The algebraically equal
    // (1 − c)v + cρ(A+ρI)⁻¹v cancels catastrophically once ρ is large.
    let c = psi_constant(ctx, rho);
    let (a_sol, report) = match &defl {
        None => {
            let (s, rep) = conjugate_gradient(
                |u| {
                    let mut a = phi_poly_apply(model, coeffs, u);
                    par::axpby(rho, u, 1.0, &mut a);
                    a
                },
                v,
                tol,
                max_iter,
            )?;
            (phi_poly_apply(model, coeffs, &s), rep)
        }
        Some(d) => {
            let mut b = v.to_vec();
            project(d.vector, &mut b);
            let (mut s, rep) = conjugate_gradient(
                |u| {
                    let mut pu = u.to_vec();
                    project(d.vector, &mut pu);
                    let mut a = phi_poly_apply(model, coeffs, &pu);
                    project(d.vector, &mut a);
                    par::axpby(rho, &pu, 1.0, &mut a);
                    a
                },
                &b,
                tol,
                max_iter,
            )?;
            project(d.vector, &mut s);
            let mut a = phi_poly_apply(model, coeffs, &s);
            project(d.vector, &mut a);
            let along = d.phi * par::dot(d.vector, v) / (d.phi + rho);
            par::axpby(along, d.vector, 1.0, &mut a);
            (a, rep)
        }
    };
    let mut out = v.to_vec();
    par::axpby(-c, &a_sol, 1.0, &mut out);
    Ok(DenoiserOutput {
        value: out,
        cg: Some(report),
    })
}

fn apply_eigen(
    model: &SpikedModel,
    ctx: &PhiContext,
    coeffs: &[f64],
    rho: f64,
    v: &[f64],
    limit: usize,
) -> Result<DenoiserOutput> {
    let eig = model.eigen(limit)?;
    let n = model.n();
    let top_idx = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let edge = ctx.spectrum().support().1;
    let deflate = ctx.outlier().is_some() && eig.eigenvalues[top_idx] > edge;
    let (c, e_phi) = if rho == f64::INFINITY {
        (0.0, ctx.expect_mu_phi(|_, p| p))
    } else {
        (psi_constant(ctx, rho), 0.0)
    };
    let psi = |i: usize, lambda: f64| -> f64 {
        let p = if deflate && i == top_idx {
            ctx.phi(lambda)
        } else {
            horner(coeffs, lambda)
        };
        if rho == f64::INFINITY {
            1.0 - p / e_phi
        } else {
            1.0 - c * p / (p + rho)
        }
    };
    let u = &eig.eigenvectors;
    let coords: Vec<f64> = par::map_indices(n, |j| par::seq::dot(u.column(j).as_slice(), v));
    let mut out = vec![0.0; n];
    for (j, &a) in coords.iter().enumerate() {
        let s = a * psi(j, eig.eigenvalues[j]);
        par::axpby(s, u.column(j).as_slice(), 1.0, &mut out);
    }
    Ok(DenoiserOutput { value: out, cg: None })
}

/// `(1/N)·tr Ψ⋆(Y;ρ)` estimated with Rademacher probes.
pub fn hutchinson_trace(
    model: &SpikedModel,
    ctx: &PhiContext,
    rho: f64,
    probes: usize,
    seed: u64,
    backend: DenoiserBackend,
) -> Result<f64> {
    let n = model.n();
    let mut rng = rng_for(seed, Stream::Probes);
    let mut total = 0.0;
    for _ in 0..probes {
        let z: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let out = apply_matrix_denoiser(model, ctx, rho, &z, backend)?;
        total += par::dot(&z, &out.value) / n as f64;
    }
    Ok(total / probes.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::NoiseMode;
    use crate::priors::Prior;
    use crate::spectral::NoiseSpectrum;

    fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        d / b.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn cg_matches_eigen_path_small() {
        let prior = Prior::two_point(0.5).unwrap();
        for (spec, theta) in [
            (NoiseSpectrum::quadratic(), 2.0),
            (NoiseSpectrum::quartic(0.0).unwrap(), 1.8),
            (NoiseSpectrum::sestic(), 0.7),
        ] {
            let ctx = PhiContext::new(spec.clone(), theta).unwrap();
            let m = SpikedModel::sample(&prior, &spec, theta, 256, 9, NoiseMode::Structured, 4096).unwrap();
            let v: Vec<f64> = (0..256).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
            for rho in [0.3, 4.0, f64::INFINITY] {
                let a = apply_matrix_denoiser(&m, &ctx, rho, &v, DenoiserBackend::default()).unwrap();
                let b = apply_matrix_denoiser(&m, &ctx, rho, &v, DenoiserBackend::Eigen { limit: 4096 }).unwrap();
                assert!(rel_diff(&a.value, &b.value) < 1e-8, "{} rho={rho}", spec.name());
                if let Some(r) = a.cg {
                    assert!(r.min_ritz >= rho * (1.0 - 1e-6), "{r:?}");
                }
            }
        }
    }

    #[test]
    fn rejects_nonpositive_rho() {
        let spec = NoiseSpectrum::quadratic();
        let ctx = PhiContext::new(spec.clone(), 1.0).unwrap();
        let m = SpikedModel::sample(&Prior::two_point(0.5).unwrap(), &spec, 1.0, 16, 0, NoiseMode::Structured, 64).unwrap();
        assert!(apply_matrix_denoiser(&m, &ctx, 0.0, &[0.0; 16], DenoiserBackend::default()).is_err());
    }
}
