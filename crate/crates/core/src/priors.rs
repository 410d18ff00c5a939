//! Discrete signal priors and the scalar Gaussian channel
//! `X = √ω·X⋆ + √(1−ω)·Z`.
//!
//! Channel expectations integrate over `Z` with adaptive Gauss–Kronrod on
//! `[-Z_MAX, Z_MAX]`, summing exactly over the prior atoms.

use serde::Serialize;

use crate::error::{check_omega, Error, Result};
use crate::{par, quad};

/// Half-width of the integration window for the standard normal.
/// The neglected tail mass is below 1e-32.
pub const Z_MAX: f64 = 12.0;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A finite discrete law with unit second moment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prior {
    name: String,
    atoms: Vec<(f64, f64)>,
}

impl Prior {
    /// Builds a prior from `(value, probability)` pairs. Zero-probability
    /// atoms are dropped.
    pub fn new(name: impl Into<String>, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidPrior("no atoms".into()));
        }
        if let Some(&(v, p)) = atoms
            .iter()
            .find(|(v, p)| !v.is_finite() || !p.is_finite() || *p < 0.0)
        {
            return Err(Error::InvalidPrior(format!("bad atom ({v}, {p})")));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPrior(format!("probabilities sum to {total}")));
        }
        let m2: f64 = atoms.iter().map(|(v, p)| p * v * v).sum();
        if (m2 - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidPrior(format!("second moment is {m2}, expected 1")));
        }
        let atoms: Vec<_> = atoms.into_iter().filter(|a| a.1 > 0.0).collect();
        Ok(Self {
            name: name.into(),
            atoms,
        })
    }

    /// Renormalizes arbitrary nonnegative weights to probabilities and
    /// rescales the values to unit second moment.
    pub fn normalized(name: impl Into<String>, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPrior("weights sum to zero".into()));
        }
        let m2: f64 = atoms.iter().map(|(v, p)| p * v * v).sum::<f64>() / total;
        if !(m2 > 0.0) {
            return Err(Error::InvalidPrior("all mass at zero".into()));
        }
        let s = m2.sqrt();
        let atoms = atoms.iter().map(|(v, p)| (v / s, p / total)).collect();
        Self::new(name, atoms)
    }

    /// `ε²·δ_{1/ε} + (1−ε²)·δ₀`.
    pub fn two_point(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidPrior(format!("two-point eps = {eps} not in (0, 1]")));
        }
        let p = eps * eps;
        Self::new(format!("two_point:{eps}"), vec![(1.0 / eps, p), (0.0, 1.0 - p)])
    }

    /// `(ε₁²/2)·δ_{1/ε₁} + (ε₂²/2)·δ_{1/ε₂} + (1 − ε₁²/2 − ε₂²/2)·δ₀`.
    pub fn three_point(eps1: f64, eps2: f64) -> Result<Self> {
        for e in [eps1, eps2] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidPrior(format!("three-point eps = {e} not in (0, 1]")));
            }
        }
        let (p1, p2) = (0.5 * eps1 * eps1, 0.5 * eps2 * eps2);
        Self::new(
            format!("three_point:{eps1}:{eps2}"),
            vec![(1.0 / eps1, p1), (1.0 / eps2, p2), (0.0, 1.0 - p1 - p2)],
        )
    }

    /// Parses `two_point:<eps>` or `three_point:<eps1>:<eps2>`. Numbers may
    /// be written as decimals, fractions (`1/8`) or with `sqrt(..)`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut parts = spec.trim().split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let num = |s: &str| parse_real(s).ok_or_else(|| Error::InvalidPrior(format!("bad number {s:?}")));
        let prior = match (kind, args.as_slice()) {
            ("two_point", [e]) => Self::two_point(num(e)?)?,
            ("three_point", [a, b]) => Self::three_point(num(a)?, num(b)?)?,
            _ => return Err(Error::InvalidPrior(format!("unknown prior {spec:?}"))),
        };
        Ok(prior.renamed(spec.trim()))
    }

    fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    /// Draws one value given a uniform variate in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(v, p) in &self.atoms {
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.atoms.last().map(|a| a.0).unwrap_or(0.0)
    }
}

/// Parses a real written as a decimal, `p/q`, or with `sqrt(x)` factors.
pub fn parse_real(s: &str) -> Option<f64> {
    fn atom(s: &str) -> Option<f64> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
            return atom(inner).map(f64::sqrt);
        }
        s.parse().ok()
    }
    match s.split_once('/') {
        Some((a, b)) => Some(atom(a)? / atom(b)?),
        None => atom(s),
    }
}

/// `(mean, second moment)` of the prior.
pub fn prior_moments(prior: &Prior) -> (f64, f64) {
    let m2 = prior.atoms.iter().map(|(v, p)| p * v * v).sum();
    (prior.mean(), m2)
}

/// Posterior mean `E[X⋆ | X = x]` for a fixed SNR, with the per-atom
/// log-weight coefficients precomputed.
#[derive(Debug, Clone)]
pub struct PosteriorMean {
    omega: f64,
    values: Vec<f64>,
    slope: Vec<f64>,
    offset: Vec<f64>,
    mean: f64,
}

impl PosteriorMean {
    pub fn new(prior: &Prior, omega: f64) -> Result<Self> {
        check_omega(omega)?;
        let values: Vec<f64> = prior.atoms.iter().map(|a| a.0).collect();
        let (slope, offset) = if omega > 0.0 && omega < 1.0 {
            let s = omega.sqrt() / (1.0 - omega);
            prior
                .atoms
                .iter()
                .map(|&(v, p)| (s * v, p.ln() - 0.5 * omega * v * v / (1.0 - omega)))
                .unzip()
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self {
            omega,
            values,
            slope,
            offset,
            mean: prior.mean(),
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.omega == 0.0 {
            return self.mean;
        }
        if self.omega == 1.0 {
            return x;
        }
        let mut max = f64::NEG_INFINITY;
        for (a, b) in self.slope.iter().zip(&self.offset) {
            max = max.max(a * x + b);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for ((a, b), v) in self.slope.iter().zip(&self.offset).zip(&self.values) {
            let w = (a * x + b - max).exp();
            num += v * w;
            den += w;
        }
        num / den
    }

    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        par::map(xs, |x| self.eval(x))
    }
}

/// `E[X⋆ | √ω X⋆ + √(1−ω) Z = x]`.
pub fn posterior_mean(prior: &Prior, x: f64, omega: f64) -> Result<f64> {
    Ok(PosteriorMean::new(prior, omega)?.eval(x))
}

/// Channel expectation `E[g(X⋆, Z, X)]` by adaptive quadrature over `Z`.
pub fn channel_expect(
    prior: &Prior,
    omega: f64,
    g: impl Fn(f64, f64, f64) -> f64,
) -> Result<f64> {
    check_omega(omega)?;
    let (so, sn) = (omega.sqrt(), (1.0 - omega).sqrt());
    let mut total = 0.0;
    for &(v, p) in &prior.atoms {
        let f = |z: f64| g(v, z, so * v + sn * z) * (-0.5 * z * z).exp() * INV_SQRT_2PI;
        total += p * quad::adaptive(f, -Z_MAX, Z_MAX, 1e-15, 1e-13, 4000).value;
    }
    Ok(total)
}

/// Same expectation with a fixed Gauss–Hermite rule over `Z`.
pub fn channel_expect_hermite(
    prior: &Prior,
    omega: f64,
    rule: &quad::Rule,
    g: impl Fn(f64, f64, f64) -> f64,
) -> Result<f64> {
    check_omega(omega)?;
    let (so, sn) = (omega.sqrt(), (1.0 - omega).sqrt());
    Ok(prior
        .atoms
        .iter()
        .map(|&(v, p)| p * rule.integrate(|z| g(v, z, so * v + sn * z)))
        .sum())
}

/// Minimum mean squared error of the channel at SNR `omega`.
pub fn mmse(prior: &Prior, omega: f64) -> Result<f64> {
    check_omega(omega)?;
    if omega == 1.0 {
        return Ok(0.0);
    }
    if omega == 0.0 {
        let m = prior.mean();
        return Ok((1.0 - m * m).max(0.0));
    }
    let pm = PosteriorMean::new(prior, omega)?;
    let v = channel_expect(prior, omega, |xs, _, x| {
        let e = xs - pm.eval(x);
        e * e
    })?;
    Ok(v.clamp(0.0, 1.0))
}

/// Summary of the channel at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelStats {
    pub omega: f64,
    pub mmse: f64,
    pub dmmse: f64,
    /// `√ω·mmse/(1−ω)`; zero at `ω = 1`, where it is unused.
    pub beta: f64,
    /// Set when `mmse = 0` below `ω = 1`.
    pub degenerate: bool,
}

impl ChannelStats {
    pub fn new(prior: &Prior, omega: f64) -> Result<Self> {
        let m = mmse(prior, omega)?;
        Ok(Self::from_mmse(omega, m))
    }

    /// Derives `dmmse` and `β` from a known `mmse`.
    pub fn from_mmse(omega: f64, mmse: f64) -> Self {
        if omega >= 1.0 {
            return Self {
                omega,
                mmse: 0.0,
                dmmse: 0.0,
                beta: 0.0,
                degenerate: false,
            };
        }
        if mmse <= 0.0 {
            return Self {
                omega,
                mmse: 0.0,
                dmmse: 0.0,
                beta: 0.0,
                degenerate: true,
            };
        }
        // 1/dmmse = 1/mmse − ω/(1−ω), rearranged to avoid cancellation.
        let c = 1.0 - omega;
        let dmmse = mmse * c / (c - omega * mmse);
        Self {
            omega,
            mmse,
            dmmse,
            beta: omega.sqrt() * mmse / c,
            degenerate: false,
        }
    }
}

/// DMMSE function of the channel. Returns 0 for a perfectly informative
/// prior; use [`ChannelStats`] to see the degeneracy flag.
pub fn dmmse(prior: &Prior, omega: f64) -> Result<f64> {
    Ok(ChannelStats::new(prior, omega)?.dmmse)
}

/// Divergence-free estimator `(φ(x) − βx)/(1 − β√ω)`, or `x` at `ω = 1`.
#[derive(Debug, Clone)]
pub struct DmmseEstimator {
    pm: PosteriorMean,
    beta: f64,
    scale: f64,
    identity: bool,
}

impl DmmseEstimator {
    pub fn new(prior: &Prior, stats: ChannelStats) -> Result<Self> {
        let omega = stats.omega;
        let pm = PosteriorMean::new(prior, omega)?;
        if omega == 1.0 {
            return Ok(Self {
                pm,
                beta: 0.0,
                scale: 1.0,
                identity: true,
            });
        }
        let denom = 1.0 - stats.beta * omega.sqrt();
        if denom.abs() < 1e-14 {
            return Err(Error::Degenerate(format!(
                "1 − β√ω vanishes at omega = {omega}"
            )));
        }
        Ok(Self {
            pm,
            beta: stats.beta,
            scale: 1.0 / denom,
            identity: false,
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.identity {
            x
        } else {
            (self.pm.eval(x) - self.beta * x) * self.scale
        }
    }

    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        par::map(xs, |x| self.eval(x))
    }
}

pub fn dmmse_estimator(prior: &Prior, omega: f64, x: f64) -> Result<f64> {
    let stats = ChannelStats::new(prior, omega)?;
    Ok(DmmseEstimator::new(prior, stats)?.eval(x))
}
