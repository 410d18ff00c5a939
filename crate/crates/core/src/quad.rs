//! Quadrature rules: fixed Gauss–Legendre and Gauss–Hermite rules plus a
//! globally adaptive Gauss–Kronrod integrator.

use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// A fixed quadrature rule given as parallel node/weight arrays.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels of
/// `order` points each.
pub fn composite_legendre(a: f64, b: f64, panels: usize, order: usize) -> Rule {
    let base = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (&x, &w) in base.nodes.iter().zip(&base.weights) {
            nodes.push(lo + 0.5 * h * (x + 1.0));
            weights.push(0.5 * h * w);
        }
    }
    Rule { nodes, weights }
}

/// Composite Gauss–Legendre rule whose two end panels are refined
/// geometrically (ratio 1/4, `levels` times) toward `a` and `b`.
pub fn graded_legendre(a: f64, b: f64, panels: usize, order: usize, levels: usize) -> Rule {
    let h = (b - a) / panels as f64;
    let mut cuts = Vec::with_capacity(panels + 2 * levels + 1);
    cuts.push(a);
    for k in (1..=levels).rev() {
        cuts.push(a + h * 0.25f64.powi(k as i32));
    }
    for p in 1..panels {
        cuts.push(a + p as f64 * h);
    }
    for k in 1..=levels {
        cuts.push(b - h * 0.25f64.powi(k as i32));
    }
    cuts.push(b);
    let base = gauss_legendre(order);
    let mut nodes = Vec::with_capacity((cuts.len() - 1) * order);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for win in cuts.windows(2) {
        let (lo, w) = (win[0], win[1] - win[0]);
        for (&x, &q) in base.nodes.iter().zip(&base.weights) {
            nodes.push(lo + 0.5 * w * (x + 1.0));
            weights.push(0.5 * w * q);
        }
    }
    Rule { nodes, weights }
}

/// `n`-point Gauss–Hermite rule for the standard normal weight, i.e.
/// `E[f(Z)] ≈ Σ wᵢ f(zᵢ)` with `Z ~ N(0, 1)`.
///
/// Nodes start from the eigenvalues of the Jacobi matrix and are then
/// polished by Newton steps on the orthonormal Hermite recurrence, which
/// also yields the weights.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1);
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(f64::total_cmp);

    // Physicists' convention (weight e^{-x²}) with orthonormal polynomials.
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for g in guesses {
        let mut z = g / std::f64::consts::SQRT_2;
        // The recurrence grows like e^{z²} at the outer nodes, so it is
        // rescaled on the fly and the scale is carried as a logarithm.
        let mut pp = 1.0;
        let mut log_scale = 0.0;
        for _ in 0..20 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            log_scale = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                if p1.abs() > 1e150 {
                    p1 *= 1e-150;
                    p2 *= 1e-150;
                    log_scale += 150.0 * std::f64::consts::LN_10;
                }
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes.push(z * std::f64::consts::SQRT_2);
        let log_w = std::f64::consts::LN_2 - 2.0 * (pp.abs().ln() + log_scale) - 0.5 * PI.ln();
        weights.push(log_w.exp());
    }
    Rule { nodes, weights }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol·|I|)` or `max_panels` is hit.
pub fn adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Integral {
    let mut heap = BinaryHeap::new();
    let (value, err) = kronrod15(&f, a, b);
    let mut total = value;
    let mut total_err = err;
    heap.push(Panel { a, b, value, err });
    while total_err > abs_tol.max(rel_tol * total.abs()) && heap.len() < max_panels {
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = kronrod15(&f, p.a, mid);
        let (v2, e2) = kronrod15(&f, mid, p.b);
        total += v1 + v2 - p.value;
        total_err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: mid, value: v1, err: e1 });
        heap.push(Panel { a: mid, b: p.b, value: v2, err: e2 });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.err));
    Integral {
        value,
        error,
        panels: heap.len(),
    }
}
