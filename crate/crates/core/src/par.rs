//! Vector kernels with a data-parallel backend.
//!
//! With the `parallel` feature the top-level functions run on rayon;
//! without it they forward to [`seq`]. Reductions always split into fixed
//! chunks and combine the partial sums in order, so results are bitwise
//! identical across thread counts and between the two backends.

/// Chunk length used for reductions and element-wise maps.
pub const CHUNK: usize = 4096;

/// Sequential reference kernels, always available.
pub mod seq {
    use super::CHUNK;

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.chunks(CHUNK)
            .zip(b.chunks(CHUNK))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
            .sum()
    }

    pub fn norm_sq(a: &[f64]) -> f64 {
        dot(a, a)
    }

    pub fn sum(a: &[f64]) -> f64 {
        a.chunks(CHUNK).map(|x| x.iter().sum::<f64>()).sum()
    }

    pub fn map<F>(a: &[f64], f: F) -> Vec<f64>
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        a.iter().map(|&x| f(x)).collect()
    }

    pub fn zip_map<F>(a: &[f64], b: &[f64], f: F) -> Vec<f64>
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    }

    /// `y ← a·x + b·y`
    pub fn axpby(a: f64, x: &[f64], b: f64, y: &mut [f64]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = a * xi + b * *yi;
        }
    }

    pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

#[cfg(feature = "parallel")]
mod imp {
    use super::CHUNK;
    use rayon::prelude::*;

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        if a.len() <= CHUNK {
            return super::seq::dot(a, b);
        }
        let parts: Vec<f64> = a
            .par_chunks(CHUNK)
            .zip(b.par_chunks(CHUNK))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
            .collect();
        parts.iter().sum()
    }

    pub fn norm_sq(a: &[f64]) -> f64 {
        dot(a, a)
    }

    pub fn sum(a: &[f64]) -> f64 {
        if a.len() <= CHUNK {
            return super::seq::sum(a);
        }
        let parts: Vec<f64> = a.par_chunks(CHUNK).map(|x| x.iter().sum::<f64>()).collect();
        parts.iter().sum()
    }

    pub fn map<F>(a: &[f64], f: F) -> Vec<f64>
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        if a.len() <= CHUNK {
            return super::seq::map(a, f);
        }
        a.par_iter().with_min_len(CHUNK / 4).map(|&x| f(x)).collect()
    }

    pub fn zip_map<F>(a: &[f64], b: &[f64], f: F) -> Vec<f64>
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        if a.len() <= CHUNK {
            return super::seq::zip_map(a, b, f);
        }
        a.par_iter()
            .zip(b.par_iter())
            .with_min_len(CHUNK / 4)
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    pub fn axpby(a: f64, x: &[f64], b: f64, y: &mut [f64]) {
        if y.len() <= CHUNK {
            return super::seq::axpby(a, x, b, y);
        }
        y.par_chunks_mut(CHUNK)
            .zip(x.par_chunks(CHUNK))
            .for_each(|(yc, xc)| super::seq::axpby(a, xc, b, yc));
    }

    pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub use super::seq::*;
}

pub use imp::{axpby, dot, map, map_indices, norm_sq, sum, zip_map};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree_bitwise() {
        let n = 3 * CHUNK + 17;
        let a: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 333.0 - 1.2).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 104729) % 997) as f64 / 97.0).collect();
        assert_eq!(dot(&a, &b).to_bits(), seq::dot(&a, &b).to_bits());
        assert_eq!(sum(&a).to_bits(), seq::sum(&a).to_bits());
        assert_eq!(map(&a, |x| x.tanh()), seq::map(&a, |x| x.tanh()));
        let mut y1 = b.clone();
        let mut y2 = b.clone();
        axpby(0.3, &a, -1.1, &mut y1);
        seq::axpby(0.3, &a, -1.1, &mut y2);
        assert_eq!(y1, y2);
        assert_eq!(map_indices(100, |i| i * i), seq::map_indices(100, |i| i * i));
    }
}
