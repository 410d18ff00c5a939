//! Noise eigenvalue laws μ and the signal-direction measure ν.
//!
//! Three one-cut trace ensembles are built in. Each is stored in the
//! generic form
//!
//! ```text
//! μ(λ) = P(λ)·√(r² − λ²)/(2π)   on [−r, r]
//! π𝓗_μ(λ) = V′(λ)/2            on [−r, r]
//! 4Q(λ) = V′(λ)² + P(λ)²(r² − λ²)
//! ```
//!
//! so that `φ_poly = 1 − θV′ + θ²Q` for every ensemble. Piecewise-linear
//! empirical densities are also supported.

mod phi;

pub use phi::{Outlier, PhiContext, SignalMeasure};

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use crate::error::{Error, Result};
use crate::quad;

/// Number of knots in the tabulated CDF used for sampling.
pub const CDF_KNOTS: usize = 10_000;
/// Composite Gauss–Legendre layout for trace ensembles: panels × order.
pub const TRACE_PANELS: usize = 20;
pub const TRACE_ORDER: usize = 20;
/// Geometric refinements per edge in [`NoiseSpectrum::edge_graded_rule`].
const EDGE_LEVELS: usize = 16;
const EMPIRICAL_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumKind {
    Quadratic,
    Quartic { gamma: f64 },
    Sestic,
    Empirical,
}

/// Quadrature nodes, weights and the density at each node.
#[derive(Debug, Clone, Default)]
pub struct GradedRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub density: Vec<f64>,
}

/// Polynomial data of a one-cut trace ensemble. Coefficients are stored in
/// ascending powers of λ.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEnsemble {
    pub r: f64,
    pub p: Vec<f64>,
    pub v_prime: Vec<f64>,
    pub q: Vec<f64>,
}

impl TraceEnsemble {
    fn density(&self, x: f64) -> f64 {
        if x.abs() >= self.r {
            return 0.0;
        }
        horner(&self.p, x) * (self.r * self.r - x * x).sqrt() / (2.0 * PI)
    }

    /// μ-weight per unit `u` after the substitution `λ = r·sin u`.
    fn u_density(&self, u: f64) -> f64 {
        let (s, c) = u.sin_cos();
        horner(&self.p, self.r * s) * self.r * self.r * c * c / (2.0 * PI)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Empirical {
    grid: Vec<f64>,
    density: Vec<f64>,
    /// CDF at the grid knots.
    cdf: Vec<f64>,
}

impl Empirical {
    fn new(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != density.len() {
            return Err(Error::InvalidSpectrum(
                "need at least two (lambda, density) rows".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSpectrum("grid must be strictly increasing".into()));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) || grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidSpectrum("densities must be finite and nonnegative".into()));
        }
        let mut cdf = vec![0.0; grid.len()];
        for k in 1..grid.len() {
            cdf[k] = cdf[k - 1] + 0.5 * (density[k] + density[k - 1]) * (grid[k] - grid[k - 1]);
        }
        let total = cdf[grid.len() - 1];
        if !(total > 0.0) {
            return Err(Error::InvalidSpectrum("density has zero mass".into()));
        }
        Ok(Self {
            grid,
            density: density.iter().map(|d| d / total).collect(),
            cdf: cdf.iter().map(|c| c / total).collect(),
        })
    }

    fn density(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&v| v <= x).clamp(1, g.len() - 1);
        let t = (x - g[k - 1]) / (g[k] - g[k - 1]);
        self.density[k - 1] * (1.0 - t) + self.density[k] * t
    }

    /// Exact principal-value Hilbert transform of the interpolant.
    fn hilbert(&self, x: f64) -> f64 {
        let g = &self.grid;
        let d = &self.density;
        let mut acc = 0.0;
        for k in 1..g.len() {
            let (a, b) = (g[k - 1], g[k]);
            let slope = (d[k] - d[k - 1]) / (b - a);
            let line_at_x = d[k - 1] + slope * (x - a);
            // Log terms at a coincident knot cancel between neighbours.
            let la = if x == a { 0.0 } else { (x - a).abs().ln() };
            let lb = if x == b { 0.0 } else { (x - b).abs().ln() };
            acc += line_at_x * (la - lb) - slope * (b - a);
        }
        acc / PI
    }

    fn cdf_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return 0.0;
        }
        if x >= g[g.len() - 1] {
            return 1.0;
        }
        let k = g.partition_point(|&v| v <= x).clamp(1, g.len() - 1);
        let h = x - g[k - 1];
        let slope = (self.density[k] - self.density[k - 1]) / (g[k] - g[k - 1]);
        self.cdf[k - 1] + self.density[k - 1] * h + 0.5 * slope * h * h
    }

    fn quantile(&self, u: f64) -> f64 {
        let g = &self.grid;
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, g.len() - 1);
        let (a, b) = (g[k - 1], g[k]);
        let da = self.density[k - 1];
        let slope = (self.density[k] - da) / (b - a);
        let m = (u - self.cdf[k - 1]).max(0.0);
        // Solve da·h + slope·h²/2 = m for h ∈ [0, b − a].
        let h = if slope.abs() < 1e-300 {
            if da > 0.0 { m / da } else { 0.0 }
        } else {
            let disc = (da * da + 2.0 * slope * m).max(0.0);
            2.0 * m / (da + disc.sqrt())
        };
        (a + h).clamp(a, b)
    }

    fn intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start: Option<f64> = None;
        for k in 1..self.grid.len() {
            let positive = self.density[k - 1] > 0.0 || self.density[k] > 0.0;
            match (positive, start) {
                (true, None) => start = Some(self.grid[k - 1]),
                (false, Some(s)) => {
                    out.push((s, self.grid[k - 1]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.grid[self.grid.len() - 1]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Trace(TraceEnsemble),
    Empirical(Empirical),
}

/// A compactly supported noise eigenvalue law together with the
/// quadrature rule used for every `E_μ[·]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrum {
    kind: SpectrumKind,
    name: String,
    repr: Repr,
    support: (f64, f64),
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// CDF knots `(u or λ, F)` for trace ensembles, in `u`-space.
    cdf_table: Vec<(f64, f64)>,
}

impl NoiseSpectrum {
    /// Semicircle law on `[−2, 2]`.
    pub fn quadratic() -> Self {
        Self::from_trace(
            SpectrumKind::Quadratic,
            "quadratic".into(),
            TraceEnsemble {
                r: 2.0,
                p: vec![1.0],
                v_prime: vec![0.0, 1.0],
                q: vec![1.0],
            },
        )
    }

    /// Unit-variance ensemble with potential `V(λ) = γλ²/2 + κλ⁴/4`.
    pub fn quartic(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Domain {
                what: "gamma",
                value: gamma,
                domain: "[0, 1]",
            });
        }
        let kappa = quartic_kappa(gamma);
        let a2 = quartic_a2(gamma, kappa);
        let c = gamma + 2.0 * a2 * kappa;
        Ok(Self::from_trace(
            SpectrumKind::Quartic { gamma },
            format!("quartic:{gamma}"),
            TraceEnsemble {
                r: 2.0 * a2.sqrt(),
                p: vec![c, 0.0, kappa],
                v_prime: vec![0.0, gamma, 0.0, kappa],
                q: vec![a2 * c * c, 0.0, kappa],
            },
        ))
    }

    /// Unit-variance ensemble with the purely sestic potential `V = ξλ⁶/6`.
    pub fn sestic() -> Self {
        let xi = SESTIC_XI;
        let b2 = SESTIC_B2;
        Self::from_trace(
            SpectrumKind::Sestic,
            "sestic".into(),
            TraceEnsemble {
                r: 2.0 * b2.sqrt(),
                p: vec![6.0 * b2 * b2 * xi, 0.0, 2.0 * b2 * xi, 0.0, xi],
                v_prime: vec![0.0, 0.0, 0.0, 0.0, 0.0, xi],
                q: vec![27.0 / 50.0, 0.0, xi, 0.0, xi],
            },
        )
    }

    /// Piecewise-linear density through `(grid[k], density[k])`,
    /// renormalized to unit mass.
    pub fn empirical(name: impl Into<String>, grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        let emp = Empirical::new(grid, density)?;
        let g = &emp.grid;
        let support = (g[0], g[g.len() - 1]);
        let base = quad::gauss_legendre(EMPIRICAL_ORDER);
        let mut nodes = Vec::with_capacity(g.len() * EMPIRICAL_ORDER);
        let mut weights = Vec::with_capacity(g.len() * EMPIRICAL_ORDER);
        for k in 1..g.len() {
            let (a, b) = (g[k - 1], g[k]);
            if emp.density[k - 1] == 0.0 && emp.density[k] == 0.0 {
                continue;
            }
            for (&x, &w) in base.nodes.iter().zip(&base.weights) {
                let t = 0.5 * (x + 1.0);
                let lam = a + t * (b - a);
                let dens = emp.density[k - 1] * (1.0 - t) + emp.density[k] * t;
                nodes.push(lam);
                weights.push(0.5 * (b - a) * w * dens);
            }
        }
        Ok(Self {
            kind: SpectrumKind::Empirical,
            name: name.into(),
            repr: Repr::Empirical(emp),
            support,
            nodes,
            weights,
            cdf_table: Vec::new(),
        })
    }

    /// Reads a two-column `lambda,density` CSV. Blank lines, `#` comments
    /// and a non-numeric header row are skipped.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut grid = Vec::new();
        let mut density = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split([',', ' ', '\t']).filter(|s| !s.is_empty()).collect();
            let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
            match parsed.as_deref() {
                Some([x, d]) => {
                    grid.push(*x);
                    density.push(*d);
                }
                None if grid.is_empty() => continue,
                _ => {
                    return Err(Error::InvalidSpectrum(format!(
                        "{}:{}: expected two numeric columns",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Self::empirical(format!("empirical:{}", path.display()), grid, density)
    }

    /// Parses `quadratic`, `quartic:<gamma>`, `sestic` or `empirical:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (kind, arg) = match spec.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (spec, None),
        };
        match (kind, arg) {
            ("quadratic", None) => Ok(Self::quadratic()),
            ("sestic", None) => Ok(Self::sestic()),
            ("quartic", Some(g)) => {
                let gamma = crate::priors::parse_real(g)
                    .ok_or_else(|| Error::InvalidSpectrum(format!("bad gamma {g:?}")))?;
                let mut s = Self::quartic(gamma)?;
                s.name = spec.to_string();
                Ok(s)
            }
            ("empirical", Some(p)) => {
                let mut s = Self::from_csv(p)?;
                s.name = spec.to_string();
                Ok(s)
            }
            _ => Err(Error::InvalidSpectrum(format!("unknown spectrum {spec:?}"))),
        }
    }

    fn from_trace(kind: SpectrumKind, name: String, te: TraceEnsemble) -> Self {
        let rule = quad::composite_legendre(-FRAC_PI_2, FRAC_PI_2, TRACE_PANELS, TRACE_ORDER);
        let nodes = rule.nodes.iter().map(|&u| te.r * u.sin()).collect();
        let weights = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&u, &w)| w * te.u_density(u))
            .collect();

        // Cumulative mass on a uniform u-grid, three Gauss points per cell.
        let g3 = quad::gauss_legendre(3);
        let du = PI / (CDF_KNOTS - 1) as f64;
        let mut table = Vec::with_capacity(CDF_KNOTS);
        let mut acc = 0.0;
        table.push((-FRAC_PI_2, 0.0));
        for k in 1..CDF_KNOTS {
            let lo = -FRAC_PI_2 + (k - 1) as f64 * du;
            acc += 0.5 * du * g3.integrate(|x| te.u_density(lo + 0.5 * du * (x + 1.0)));
            table.push((lo + du, acc));
        }
        for entry in &mut table {
            entry.1 /= acc;
        }

        Self {
            kind,
            name,
            support: (-te.r, te.r),
            repr: Repr::Trace(te),
            nodes,
            weights,
            cdf_table: table,
        }
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Convex hull `[λ₋, λ₊]` of the support.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn width(&self) -> f64 {
        self.support.1 - self.support.0
    }

    /// Maximal intervals on which the density is positive.
    pub fn support_intervals(&self) -> Vec<(f64, f64)> {
        match &self.repr {
            Repr::Trace(_) => vec![self.support],
            Repr::Empirical(e) => e.intervals(),
        }
    }

    pub fn trace_ensemble(&self) -> Option<&TraceEnsemble> {
        match &self.repr {
            Repr::Trace(t) => Some(t),
            Repr::Empirical(_) => None,
        }
    }

    /// `κ` and `a²` of the quartic ensemble.
    pub fn quartic_params(&self) -> Option<(f64, f64, f64)> {
        match self.kind {
            SpectrumKind::Quartic { gamma } => {
                let kappa = quartic_kappa(gamma);
                Some((gamma, kappa, quartic_a2(gamma, kappa)))
            }
            _ => None,
        }
    }

    pub fn density(&self, lambda: f64) -> f64 {
        match &self.repr {
            Repr::Trace(t) => t.density(lambda),
            Repr::Empirical(e) => e.density(lambda),
        }
    }

    /// Hilbert transform `𝓗_μ(λ) = (1/π)·PV∫ μ(t)/(λ − t) dt`.
    pub fn hilbert(&self, lambda: f64) -> f64 {
        match &self.repr {
            Repr::Trace(t) => {
                if lambda.abs() <= t.r {
                    0.5 * horner(&t.v_prime, lambda) / PI
                } else {
                    let f = |u: f64| t.u_density(u) / (lambda - t.r * u.sin());
                    quad::adaptive(f, -FRAC_PI_2, FRAC_PI_2, 1e-16, 1e-14, 4000).value / PI
                }
            }
            Repr::Empirical(e) => e.hilbert(lambda),
        }
    }

    /// `𝓗′(λ)` for `λ` outside the support.
    pub fn hilbert_derivative(&self, lambda: f64) -> f64 {
        match &self.repr {
            Repr::Trace(t) if lambda.abs() > t.r => {
                let f = |u: f64| {
                    let d = lambda - t.r * u.sin();
                    t.u_density(u) / (d * d)
                };
                -quad::adaptive(f, -FRAC_PI_2, FRAC_PI_2, 1e-16, 1e-14, 4000).value / PI
            }
            _ => {
                let h = 1e-6 * self.width();
                (self.hilbert(lambda + h) - self.hilbert(lambda - h)) / (2.0 * h)
            }
        }
    }

    /// The `E_μ` rule with extra refinement at both edges. Only trace
    /// ensembles are refined; their density is taken from `cos u`, which
    /// stays accurate where `λ = r·sin u` has already rounded to the edge.
    pub fn edge_graded_rule(&self) -> GradedRule {
        match &self.repr {
            Repr::Trace(t) => {
                let rule = quad::graded_legendre(-FRAC_PI_2, FRAC_PI_2, TRACE_PANELS, TRACE_ORDER, EDGE_LEVELS);
                let mut out = GradedRule::default();
                for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let x = t.r * u.sin();
                    let dens = horner(&t.p, x) * t.r * u.cos().abs() / (2.0 * PI);
                    out.nodes.push(x);
                    out.weights.push(w * dens * t.r * u.cos().abs());
                    out.density.push(dens);
                }
                out
            }
            Repr::Empirical(_) => GradedRule {
                nodes: self.nodes.clone(),
                weights: self.weights.clone(),
                density: self.nodes.iter().map(|&x| self.density(x)).collect(),
            },
        }
    }

    /// Quadrature nodes of the `E_μ` rule.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E_μ[f(Λ)]`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn moment(&self, k: i32) -> f64 {
        self.expect(|x| x.powi(k))
    }

    /// Distribution function of μ.
    pub fn cdf(&self, lambda: f64) -> f64 {
        match &self.repr {
            Repr::Trace(t) => {
                if lambda <= -t.r {
                    return 0.0;
                }
                if lambda >= t.r {
                    return 1.0;
                }
                let u = (lambda / t.r).asin();
                let tab = &self.cdf_table;
                let k = tab.partition_point(|e| e.0 <= u).clamp(1, tab.len() - 1);
                let (u0, f0) = tab[k - 1];
                let (u1, f1) = tab[k];
                f0 + (f1 - f0) * (u - u0) / (u1 - u0)
            }
            Repr::Empirical(e) => e.cdf_at(lambda),
        }
    }

    /// Inverse CDF for `u ∈ [0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match &self.repr {
            Repr::Trace(t) => {
                let tab = &self.cdf_table;
                let k = tab.partition_point(|e| e.1 <= p).clamp(1, tab.len() - 1);
                let (u0, f0) = tab[k - 1];
                let (u1, f1) = tab[k];
                let u = if f1 > f0 { u0 + (u1 - u0) * (p - f0) / (f1 - f0) } else { u0 };
                t.r * u.clamp(-FRAC_PI_2, FRAC_PI_2).sin()
            }
            Repr::Empirical(e) => e.quantile(p),
        }
    }
}

pub const SESTIC_XI: f64 = 27.0 / 80.0;
pub const SESTIC_B2: f64 = 2.0 / 3.0;

/// `κ(γ) = (8 − 9γ + √(64 − 144γ + 108γ² − 27γ³))/27`.
pub fn quartic_kappa(gamma: f64) -> f64 {
    let disc = 64.0 - 144.0 * gamma + 108.0 * gamma * gamma - 27.0 * gamma.powi(3);
    (8.0 - 9.0 * gamma + disc.max(0.0).sqrt()) / 27.0
}

/// Half-width squared over four, `a² = (√(γ² + 12κ) − γ)/(6κ)`.
pub fn quartic_a2(gamma: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 1.0 / gamma;
    }
    ((gamma * gamma + 12.0 * kappa).sqrt() - gamma) / (6.0 * kappa)
}

pub(crate) fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}
