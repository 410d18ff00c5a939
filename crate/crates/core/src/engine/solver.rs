use nalgebra::{DMatrix, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{rng_for, Stream};
use crate::error::{Error, Result};
use crate::par;

const LANCZOS_STEPS: usize = 60;
const LANCZOS_RESTARTS: usize = 30;
const LANCZOS_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
    /// Smallest Ritz value of the Krylov tridiagonal built by the solve.
    pub min_ritz: f64,
}

/// Conjugate gradients for a symmetric positive-definite operator, stopping
/// at relative residual `tol`. Returns a solver error carrying the achieved
/// residual when `max_iter` is exhausted.
pub fn conjugate_gradient(
    op: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgReport)> {
    let n = b.len();
    let b_norm = par::norm_sq(b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                residual: 0.0,
                min_ritz: f64::NAN,
            },
        ));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = par::norm_sq(&r);
    // Lanczos tridiagonal recovered from the CG coefficients.
    let mut diag: Vec<f64> = Vec::new();
    let mut off: Vec<f64> = Vec::new();
    let (mut alpha_prev, mut beta_prev) = (0.0f64, 0.0f64);
    let mut residual = 1.0;
    for k in 0..max_iter {
        let ap = op(&p);
        let pap = par::dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                iterations: k,
                residual,
            });
        }
        let alpha = rr / pap;
        par::axpby(alpha, &p, 1.0, &mut x);
        par::axpby(-alpha, &ap, 1.0, &mut r);
        let rr_new = par::norm_sq(&r);
        let beta = rr_new / rr;
        diag.push(1.0 / alpha + if k > 0 { beta_prev / alpha_prev } else { 0.0 });
        off.push(beta.sqrt() / alpha);
        residual = rr_new.sqrt() / b_norm;
        if residual < tol {
            off.pop();
            return Ok((
                x,
                CgReport {
                    iterations: k + 1,
                    residual,
                    min_ritz: tridiagonal_min_eigenvalue(&diag, &off),
                },
            ));
        }
        par::axpby(1.0, &r, beta, &mut p);
        rr = rr_new;
        alpha_prev = alpha;
        beta_prev = beta;
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual,
    })
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by Sturm-sequence
/// bisection.
pub(crate) fn tridiagonal_min_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    if n == 0 {
        return f64::NAN;
    }
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = off.get(i).map_or(0.0, |v| v.abs()) + if i > 0 { off[i - 1].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    // Number of eigenvalues strictly below x.
    let count = |x: f64| -> usize {
        let mut c = 0;
        let mut d = 1.0;
        for i in 0..n {
            let e2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { e2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                c += 1;
            }
        }
        c
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Symmetric eigendecomposition with Jacobi refinement.
///
/// The QR-based decomposition can return eigenvectors rotated within tight
/// clusters of eigenvalues. Sweeping Jacobi rotations over the nearly
/// diagonal `UᵀAU` restores residuals at the rounding level.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    let mut eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let u = &mut eig.eigenvectors;
    let mut b = u.transpose() * (a * &*u);
    let scale = b.diagonal().amax().max(f64::MIN_POSITIVE);
    for _ in 0..20 {
        let mut rotated = false;
        for q in 1..n {
            for p in 0..q {
                let apq = b[(p, q)];
                if apq.abs() <= 1e-15 * scale {
                    continue;
                }
                rotated = true;
                let tau = (b[(q, q)] - b[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (b[(k, p)], b[(k, q)]);
                    b[(k, p)] = c * x - s * y;
                    b[(k, q)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (b[(p, k)], b[(q, k)]);
                    b[(p, k)] = c * x - s * y;
                    b[(q, k)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (u[(k, p)], u[(k, q)]);
                    u[(k, p)] = c * x - s * y;
                    u[(k, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    for i in 0..n {
        eig.eigenvalues[i] = b[(i, i)];
    }
    eig
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopEigen {
    pub value: f64,
    #[serde(skip)]
    pub vector: Vec<f64>,
    /// `‖Av − λv‖` for the returned unit vector.
    pub residual: f64,
    pub converged: bool,
}

/// Largest eigenpair by restarted Lanczos with full reorthogonalization.
pub fn top_eigenpair(op: impl Fn(&[f64]) -> Vec<f64>, n: usize, seed: u64) -> Result<TopEigen> {
    if n == 0 {
        return Err(Error::Length { expected: 1, got: 0 });
    }
    let mut rng = rng_for(seed, Stream::Lanczos);
    let mut start: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let steps = LANCZOS_STEPS.min(n);
    let mut best = TopEigen {
        value: f64::NAN,
        vector: Vec::new(),
        residual: f64::INFINITY,
        converged: false,
    };
    for _ in 0..LANCZOS_RESTARTS {
        let s = par::norm_sq(&start).sqrt();
        let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / s).collect()];
        let mut alphas = Vec::with_capacity(steps);
        let mut betas: Vec<f64> = Vec::with_capacity(steps);
        for j in 0..steps {
            let mut w = op(&basis[j]);
            let a = par::dot(&basis[j], &w);
            alphas.push(a);
            // Two passes of classical Gram-Schmidt against the whole basis.
            for _ in 0..2 {
                for q in &basis {
                    let c = par::dot(q, &w);
                    par::axpby(-c, q, 1.0, &mut w);
                }
            }
            let b = par::norm_sq(&w).sqrt();
            if j + 1 == steps || b <= 1e-13 * a.abs().max(1.0) {
                break;
            }
            betas.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let m = alphas.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty tridiagonal");
        let mut y = vec![0.0; n];
        for (i, q) in basis.iter().take(m).enumerate() {
            par::axpby(eig.eigenvectors[(i, k)], q, 1.0, &mut y);
        }
        let ny = par::norm_sq(&y).sqrt();
        y.iter_mut().for_each(|x| *x /= ny);
        let ay = op(&y);
        let rq = par::dot(&y, &ay);
        let res: f64 = par::zip_map(&ay, &y, |a, b| a - rq * b).iter().map(|x| x * x).sum::<f64>().sqrt();
        let converged = res <= LANCZOS_TOL * rq.abs().max(1.0);
        best = TopEigen {
            value: rq,
            vector: y,
            residual: res,
            converged,
        };
        if converged || m < steps {
            best.converged = converged || res <= 1e-9 * rq.abs().max(1.0);
            break;
        }
        start = best.vector.clone();
    }
    Ok(best)
}
