use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustdct::{DctPlanner, TransformType2And3};

use super::{rng_for, Stream};
use crate::error::{Error, Result};
use crate::par;
use crate::spectral::NoiseSpectrum;

/// Default memory guard for dense noise matrices.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Dense,
    Structured,
}

/// `W = O·diag(λ)·Oᵀ` with `O = S₁ F S₂ Fᵀ S₃`, where `F` is the orthonormal
/// DCT-II and the `Sᵢ` are random sign diagonals.
#[derive(Clone)]
pub struct StructuredNoise {
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    eigenvalues: Vec<f64>,
    dct: Arc<dyn TransformType2And3<f64>>,
}

impl fmt::Debug for StructuredNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructuredNoise")
            .field("n", &self.eigenvalues.len())
            .finish_non_exhaustive()
    }
}

impl StructuredNoise {
    pub fn new(s1: Vec<f64>, s2: Vec<f64>, s3: Vec<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        for s in [&s1, &s2, &s3] {
            if s.len() != n {
                return Err(Error::Length {
                    expected: n,
                    got: s.len(),
                });
            }
        }
        let dct = DctPlanner::new().plan_dct2(n);
        Ok(Self {
            s1,
            s2,
            s3,
            eigenvalues,
            dct,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// In-place `F·v`.
    pub fn dct_forward(&self, buf: &mut [f64]) {
        let n = buf.len() as f64;
        self.dct.process_dct2(buf);
        let (s0, sk) = ((1.0 / n).sqrt(), (2.0 / n).sqrt());
        buf[0] *= s0;
        for x in &mut buf[1..] {
            *x *= sk;
        }
    }

    /// In-place `Fᵀ·v`.
    pub fn dct_inverse(&self, buf: &mut [f64]) {
        let n = buf.len() as f64;
        let (s0, sk) = ((1.0 / n).sqrt(), (2.0 / n).sqrt());
        buf[0] *= 2.0 * s0;
        for x in &mut buf[1..] {
            *x *= sk;
        }
        self.dct.process_dct3(buf);
    }

    fn signs(buf: &mut [f64], s: &[f64]) {
        for (x, s) in buf.iter_mut().zip(s) {
            *x *= s;
        }
    }

    /// `O·v`.
    pub fn apply_o(&self, v: &[f64]) -> Vec<f64> {
        let mut b: Vec<f64> = v.iter().zip(&self.s3).map(|(x, s)| x * s).collect();
        self.dct_inverse(&mut b);
        Self::signs(&mut b, &self.s2);
        self.dct_forward(&mut b);
        Self::signs(&mut b, &self.s1);
        b
    }

    /// `Oᵀ·v`.
    pub fn apply_ot(&self, v: &[f64]) -> Vec<f64> {
        let mut b: Vec<f64> = v.iter().zip(&self.s1).map(|(x, s)| x * s).collect();
        self.dct_inverse(&mut b);
        Self::signs(&mut b, &self.s2);
        self.dct_forward(&mut b);
        Self::signs(&mut b, &self.s3);
        b
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut b = self.apply_ot(v);
        for (x, l) in b.iter_mut().zip(&self.eigenvalues) {
            *x *= l;
        }
        self.apply_o(&b)
    }

    /// The orthogonal factor `O` as a dense matrix.
    pub fn basis(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply_o(&e);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub enum NoiseOperator {
    Dense {
        matrix: DMatrix<f64>,
        eigenvalues: Vec<f64>,
    },
    Structured(StructuredNoise),
}

impl NoiseOperator {
    pub fn len(&self) -> usize {
        match self {
            Self::Dense { matrix, .. } => matrix.nrows(),
            Self::Structured(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        match self {
            Self::Dense { eigenvalues, .. } => eigenvalues,
            Self::Structured(s) => s.eigenvalues(),
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense { matrix, .. } => dense_matvec(matrix, v),
            Self::Structured(s) => s.matvec(v),
        }
    }

    /// Dense copy of `W`, exactly symmetrized.
    pub fn to_dense(&self, limit: usize) -> Result<DMatrix<f64>> {
        let n = self.len();
        if n > limit {
            return Err(Error::DenseTooLarge { n, limit });
        }
        match self {
            Self::Dense { matrix, .. } => Ok(matrix.clone()),
            Self::Structured(s) => {
                let o = s.basis();
                let mut scaled = o.clone();
                for (j, l) in s.eigenvalues().iter().enumerate() {
                    scaled.column_mut(j).scale_mut(*l);
                }
                let mut w = &scaled * o.transpose();
                symmetrize(&mut w);
                Ok(w)
            }
        }
    }

    /// Dense variant with the same eigenvalues and eigenbasis.
    pub fn densified(&self, limit: usize) -> Result<Self> {
        Ok(Self::Dense {
            matrix: self.to_dense(limit)?,
            eigenvalues: self.eigenvalues().to_vec(),
        })
    }
}

/// Row-parallel `M·v` for a symmetric matrix stored column-major.
pub(crate) fn dense_matvec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    // M is symmetric, so row i equals column i and is contiguous.
    par::map_indices(m.ncols(), |i| par::seq::dot(m.column(i).as_slice(), v))
}

fn symmetrize(w: &mut DMatrix<f64>) {
    let n = w.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (w[(i, j)] + w[(j, i)]);
            w[(i, j)] = avg;
            w[(j, i)] = avg;
        }
    }
}

/// Eigenvalues drawn i.i.d. from μ by inverse CDF.
pub(crate) fn sample_eigenvalues(spectrum: &NoiseSpectrum, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| spectrum.quantile(rng.random::<f64>())).collect()
}

pub fn sample_noise(spectrum: &NoiseSpectrum, n: usize, seed: u64, mode: NoiseMode) -> Result<NoiseOperator> {
    sample_noise_with_limit(spectrum, n, seed, mode, DENSE_LIMIT)
}

/// Samples a rotationally invariant noise matrix with eigenvalues i.i.d.
/// from μ. Structured mode uses sign/DCT sandwiches; dense mode uses a Haar
/// basis from the QR factorization of a Gaussian matrix.
pub fn sample_noise_with_limit(
    spectrum: &NoiseSpectrum,
    n: usize,
    seed: u64,
    mode: NoiseMode,
    dense_limit: usize,
) -> Result<NoiseOperator> {
    if n == 0 {
        return Err(Error::Length { expected: 1, got: 0 });
    }
    let mut rng = rng_for(seed, Stream::Noise);
    let eigenvalues = sample_eigenvalues(spectrum, n, &mut rng);
    match mode {
        NoiseMode::Structured => {
            let mut sign = || -> Vec<f64> {
                (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
            };
            let (s1, s2, s3) = (sign(), sign(), sign());
            Ok(NoiseOperator::Structured(StructuredNoise::new(s1, s2, s3, eigenvalues)?))
        }
        NoiseMode::Dense => {
            if n > dense_limit {
                return Err(Error::DenseTooLarge { n, limit: dense_limit });
            }
            let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let qr = g.qr();
            let (mut q, r) = (qr.q(), qr.r());
            for j in 0..n {
                if r[(j, j)] < 0.0 {
                    q.column_mut(j).neg_mut();
                }
            }
            let mut scaled = q.clone();
            for (j, l) in eigenvalues.iter().enumerate() {
                scaled.column_mut(j).scale_mut(*l);
            }
            let mut w = &scaled * q.transpose();
            symmetrize(&mut w);
            Ok(NoiseOperator::Dense {
                matrix: w,
                eigenvalues,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn explicit_dct(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |k, j| {
            let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            s * (PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64).cos()
        })
    }

    #[test]
    fn dct_matches_explicit_orthonormal_matrix() {
        for n in [1usize, 2, 7, 16, 33] {
            let op = StructuredNoise::new(vec![1.0; n], vec![1.0; n], vec![1.0; n], vec![0.0; n]).unwrap();
            let f = explicit_dct(n);
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 0.1).collect();
            let mut fwd = v.clone();
            op.dct_forward(&mut fwd);
            let mut inv = v.clone();
            op.dct_inverse(&mut inv);
            let dv = nalgebra::DVector::from_column_slice(&v);
            let ef = &f * &dv;
            let ei = f.transpose() * &dv;
            for i in 0..n {
                assert!((fwd[i] - ef[i]).abs() < 1e-12, "n={n}");
                assert!((inv[i] - ei[i]).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn structured_operator_is_symmetric_with_stored_spectrum() {
        let spec = NoiseSpectrum::quartic(0.0).unwrap();
        let NoiseOperator::Structured(op) = sample_noise(&spec, 64, 11, NoiseMode::Structured).unwrap() else {
            unreachable!()
        };
        let u: Vec<f64> = (0..64).map(|i| (i as f64).cos()).collect();
        let v: Vec<f64> = (0..64).map(|i| (0.3 * i as f64).sin()).collect();
        let lhs = par::seq::dot(&u, &op.matvec(&v));
        let rhs = par::seq::dot(&op.matvec(&u), &v);
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

        // Route a basis vector through O: W O e_i = λ_i O e_i.
        for i in [0, 17, 63] {
            let mut e = vec![0.0; 64];
            e[i] = 1.0;
            let col = op.apply_o(&e);
            let w = op.matvec(&col);
            for (a, b) in w.iter().zip(&col) {
                assert!((a - op.eigenvalues()[i] * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dense_noise_is_exactly_symmetric() {
        let spec = NoiseSpectrum::quadratic();
        let op = sample_noise(&spec, 48, 3, NoiseMode::Dense).unwrap();
        let NoiseOperator::Dense { matrix, eigenvalues } = &op else { unreachable!() };
        assert_eq!(matrix, &matrix.transpose());
        let mut ev: Vec<f64> = matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        let mut want = eigenvalues.clone();
        ev.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_limit_is_enforced() {
        let spec = NoiseSpectrum::quadratic();
        assert!(matches!(
            sample_noise_with_limit(&spec, 100, 0, NoiseMode::Dense, 64),
            Err(Error::DenseTooLarge { n: 100, limit: 64 })
        ));
    }
}
