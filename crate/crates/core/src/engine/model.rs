use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use super::operator::{NoiseMode, NoiseOperator};
use super::solver::{symmetric_eigen, top_eigenpair, TopEigen};
use super::{rng_for, sample_noise_with_limit, Stream};
use crate::error::{Error, Result};
use crate::par;
use crate::priors::Prior;
use crate::spectral::NoiseSpectrum;

/// I.i.d. draws from the prior by inverse CDF.
pub fn sample_signal(prior: &Prior, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, Stream::Signal);
    (0..n).map(|_| prior.quantile(rng.random::<f64>())).collect()
}

/// `Y = (θ/N)·x⋆x⋆ᵀ + W`, accessed through matrix-vector products.
#[derive(Debug)]
pub struct SpikedModel {
    pub theta: f64,
    pub x_star: Vec<f64>,
    pub noise: NoiseOperator,
    top: OnceLock<TopEigen>,
    dense_eigen: OnceLock<SymmetricEigen<f64, nalgebra::Dyn>>,
    seed: u64,
}

impl Clone for SpikedModel {
    fn clone(&self) -> Self {
        Self::new(self.theta, self.x_star.clone(), self.noise.clone(), self.seed)
            .expect("lengths already validated")
    }
}

impl SpikedModel {
    pub fn new(theta: f64, x_star: Vec<f64>, noise: NoiseOperator, seed: u64) -> Result<Self> {
        if x_star.len() != noise.len() {
            return Err(Error::Length {
                expected: noise.len(),
                got: x_star.len(),
            });
        }
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::Domain {
                what: "theta",
                value: theta,
                domain: "[0, ∞)",
            });
        }
        Ok(Self {
            theta,
            x_star,
            noise,
            top: OnceLock::new(),
            dense_eigen: OnceLock::new(),
            seed,
        })
    }

    /// Samples signal and noise from independent streams of `seed`.
    pub fn sample(
        prior: &Prior,
        spectrum: &NoiseSpectrum,
        theta: f64,
        n: usize,
        seed: u64,
        mode: NoiseMode,
        dense_limit: usize,
    ) -> Result<Self> {
        let noise = sample_noise_with_limit(spectrum, n, seed, mode, dense_limit)?;
        let x = sample_signal(prior, n, seed);
        Self::new(theta, x, noise, seed)
    }

    pub fn n(&self) -> usize {
        self.x_star.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matvec_y(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.noise.matvec(v);
        let c = self.theta / self.n() as f64 * par::dot(&self.x_star, v);
        par::axpby(c, &self.x_star, 1.0, &mut out);
        out
    }

    /// Dense `Y`, built from the noise operator.
    pub fn dense_y(&self, limit: usize) -> Result<DMatrix<f64>> {
        let mut y = self.noise.to_dense(limit)?;
        let n = self.n();
        let s = self.theta / n as f64;
        for j in 0..n {
            for i in 0..n {
                y[(i, j)] += s * self.x_star[i] * self.x_star[j];
            }
        }
        Ok(y)
    }

    /// Same instance with the noise stored as a dense matrix.
    pub fn densified(&self, limit: usize) -> Result<Self> {
        Self::new(self.theta, self.x_star.clone(), self.noise.densified(limit)?, self.seed)
    }

    /// Largest eigenpair of `Y`, computed once.
    pub fn top_eigen(&self) -> Result<&TopEigen> {
        if let Some(t) = self.top.get() {
            return Ok(t);
        }
        let t = top_eigenpair(|v| self.matvec_y(v), self.n(), self.seed)?;
        Ok(self.top.get_or_init(|| t))
    }

    /// Full eigendecomposition of `Y`, computed once (dense sizes only).
    pub fn eigen(&self, limit: usize) -> Result<&SymmetricEigen<f64, nalgebra::Dyn>> {
        if let Some(e) = self.dense_eigen.get() {
            return Ok(e);
        }
        let y = self.dense_y(limit)?;
        let e = symmetric_eigen(&y);
        Ok(self.dense_eigen.get_or_init(|| e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_is_deterministic_and_normalized() {
        let p = Prior::two_point(0.5).unwrap();
        let a = sample_signal(&p, 20_000, 7);
        assert_eq!(a, sample_signal(&p, 20_000, 7));
        let m2 = a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64;
        // Var(X²) = E X⁴ − 1 = 1/ε² − 1 = 3.
        assert!((m2 - 1.0).abs() < 3.0 * (3.0f64 / 20_000.0).sqrt());
    }

    #[test]
    fn matvec_zero_and_dense_agree() {
        let p = Prior::two_point(0.5).unwrap();
        let s = NoiseSpectrum::quartic(0.0).unwrap();
        let m = SpikedModel::sample(&p, &s, 1.5, 128, 5, NoiseMode::Structured, 4096).unwrap();
        assert!(m.matvec_y(&vec![0.0; 128]).iter().all(|&x| x == 0.0));
        let d = m.densified(4096).unwrap();
        let v: Vec<f64> = (0..128).map(|i| (i as f64 * 0.21).cos()).collect();
        let (a, b) = (m.matvec_y(&v), d.matvec_y(&v));
        let scale = par::norm_sq(&a).sqrt();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 * scale);
        }
    }
}
