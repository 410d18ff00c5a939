use std::f64::consts::PI;

use serde::Serialize;

use super::{horner, NoiseSpectrum, SpectrumKind};
use crate::error::{Error, Result};

/// Outlier eigenvalue of `Y` and the squared overlap of its eigenvector
/// with the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outlier {
    pub location: f64,
    pub weight: f64,
}

/// A spectrum paired with an SNR `θ`, with `φ` cached at the `E_μ` nodes.
#[derive(Debug, Clone)]
pub struct PhiContext {
    spectrum: NoiseSpectrum,
    theta: f64,
    theta_c: f64,
    phi_nodes: Vec<f64>,
    poly: Option<Vec<f64>>,
    outlier: Option<Outlier>,
}

impl PhiContext {
    pub fn new(spectrum: NoiseSpectrum, theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::Domain {
                what: "theta",
                value: theta,
                domain: "[0, ∞)",
            });
        }
        let poly = spectrum.trace_ensemble().map(|t| {
            // 1 − θV′ + θ²Q
            let len = t.v_prime.len().max(t.q.len());
            let mut c = vec![0.0; len];
            c[0] = 1.0;
            for (i, v) in t.v_prime.iter().enumerate() {
                c[i] -= theta * v;
            }
            for (i, q) in t.q.iter().enumerate() {
                c[i] += theta * theta * q;
            }
            while c.len() > 1 && c[c.len() - 1] == 0.0 {
                c.pop();
            }
            c
        });
        let edge = spectrum.support().1;
        let h_edge = PI * spectrum.hilbert(edge);
        let theta_c = if h_edge > 0.0 { 1.0 / h_edge } else { f64::INFINITY };
        let mut ctx = Self {
            phi_nodes: Vec::new(),
            spectrum,
            theta,
            theta_c,
            poly,
            outlier: None,
        };
        ctx.phi_nodes = ctx.spectrum.nodes().iter().map(|&x| ctx.phi(x)).collect();
        ctx.outlier = ctx.find_outlier()?;
        Ok(ctx)
    }

    pub fn spectrum(&self) -> &NoiseSpectrum {
        &self.spectrum
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Critical SNR `1/(π𝓗_μ(λ₊))`.
    pub fn theta_c(&self) -> f64 {
        self.theta_c
    }

    /// `φ(λ) = (1 − πθ𝓗_μ(λ))² + π²θ²μ(λ)²`.
    pub fn phi(&self, lambda: f64) -> f64 {
        let a = 1.0 - self.theta * PI * self.spectrum.hilbert(lambda);
        let b = self.theta * PI * self.spectrum.density(lambda);
        a * a + b * b
    }

    /// `φ` at the nodes of the `E_μ` rule.
    pub fn phi_nodes(&self) -> &[f64] {
        &self.phi_nodes
    }

    /// Coefficients of `φ_poly` in ascending powers.
    pub fn phi_poly_coeffs(&self) -> Result<&[f64]> {
        self.poly.as_deref().ok_or_else(|| self.unsupported("phi_poly"))
    }

    pub fn phi_poly(&self, lambda: f64) -> Result<f64> {
        Ok(horner(self.phi_poly_coeffs()?, lambda))
    }

    /// Constant term `C_φ` of `φ_poly`.
    pub fn c_phi(&self) -> Result<f64> {
        Ok(self.phi_poly_coeffs()?[0])
    }

    /// Coefficients of `J = C_φ − φ_poly`; the constant entry is zero.
    pub fn j_coeffs(&self) -> Result<Vec<f64>> {
        let c = self.phi_poly_coeffs()?;
        let mut j: Vec<f64> = c.iter().map(|v| -v).collect();
        j[0] = 0.0;
        Ok(j)
    }

    fn unsupported(&self, op: &'static str) -> Error {
        Error::Unsupported {
            op,
            spectrum: self.spectrum.name().to_string(),
        }
    }

    /// Outlier above the bulk, present when `θ > θ_c`.
    pub fn outlier(&self) -> Option<Outlier> {
        self.outlier
    }

    fn find_outlier(&self) -> Result<Option<Outlier>> {
        if !(self.theta > self.theta_c) {
            return Ok(None);
        }
        let (lo_edge, hi_edge) = self.spectrum.support();
        let width = hi_edge - lo_edge;
        let g = |x: f64| PI * self.theta * self.spectrum.hilbert(x) - 1.0;
        let (mut lo, mut hi) = (hi_edge, hi_edge + 10.0 * width);
        if g(hi) >= 0.0 {
            return Err(Error::SearchFailure { lo, hi });
        }
        // g > 0 at the edge since θ > θ_c, and g decreases to the right.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lc = 0.5 * (lo + hi);
        if !(lc > hi_edge) {
            return Err(Error::SearchFailure { lo: hi_edge, hi: lc });
        }
        let dh = self.spectrum.hilbert_derivative(lc);
        let weight = -1.0 / (self.theta * self.theta * PI * dh);
        Ok(Some(Outlier {
            location: lc,
            weight,
        }))
    }

    /// The signal-direction measure ν.
    pub fn nu_measure(&self) -> Result<SignalMeasure> {
        // μ/φ has a boundary layer at the edge whose width vanishes as
        // θ → θ_c, hence the edge-graded rule.
        let rule = self.spectrum.edge_graded_rule();
        let phi_nodes: Vec<f64> = rule
            .nodes
            .iter()
            .zip(&rule.density)
            .map(|(&x, &d)| {
                let a = 1.0 - self.theta * PI * self.spectrum.hilbert(x);
                let b = self.theta * PI * d;
                a * a + b * b
            })
            .collect();
        let ac: Vec<f64> = rule.weights.iter().zip(&phi_nodes).map(|(w, p)| w / p).collect();
        let nodes = rule.nodes;
        let ac_mass: f64 = ac.iter().sum();
        let atoms: Vec<Outlier> = self.outlier.into_iter().collect();
        let mass = ac_mass + atoms.iter().map(|a| a.weight).sum::<f64>();
        if !((mass - 1.0).abs() <= 1e-4) {
            return Err(Error::Consistency { mass });
        }
        Ok(SignalMeasure {
            nodes,
            ac_weights: ac,
            phi_nodes,
            ac_mass,
            atoms,
        })
    }

    /// `E_μ[f(Λ, φ(Λ))]` with `φ` taken from the node cache.
    pub fn expect_mu_phi(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.spectrum
            .nodes()
            .iter()
            .zip(self.spectrum.weights())
            .zip(&self.phi_nodes)
            .map(|((&x, &w), &p)| w * f(x, p))
            .sum()
    }

    pub fn is_trace_ensemble(&self) -> bool {
        !matches!(self.spectrum.kind(), SpectrumKind::Empirical)
    }
}

/// `ν = (μ/φ)·dλ on supp(μ) + Σ weightᵢ·δ_{locationᵢ}`.
#[derive(Debug, Clone)]
pub struct SignalMeasure {
    nodes: Vec<f64>,
    ac_weights: Vec<f64>,
    phi_nodes: Vec<f64>,
    ac_mass: f64,
    pub atoms: Vec<Outlier>,
}

impl SignalMeasure {
    pub fn ac_mass(&self) -> f64 {
        self.ac_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.ac_mass + self.atoms.iter().map(|a| a.weight).sum::<f64>()
    }

    /// `E_ν[f(Λ_ν)]`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let ac: f64 = self.nodes.iter().zip(&self.ac_weights).map(|(&x, &w)| w * f(x)).sum();
        ac + self.atoms.iter().map(|a| a.weight * f(a.location)).sum::<f64>()
    }

    /// `E_ν[f(Λ_ν, φ(Λ_ν))]`, using `φ = 0` at the atoms.
    pub fn expect_phi(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let ac: f64 = self
            .nodes
            .iter()
            .zip(&self.ac_weights)
            .zip(&self.phi_nodes)
            .map(|((&x, &w), &p)| w * f(x, p))
            .sum();
        ac + self.atoms.iter().map(|a| a.weight * f(a.location, 0.0)).sum::<f64>()
    }
}
