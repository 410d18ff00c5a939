//! High-dimensional simulation of the spiked model: noise operators,
//! sampled instances, the matrix denoiser and the OAMP, PCA and lifted OAMP
//! runs.

mod denoiser;
mod lifted;
mod model;
mod oamp;
mod operator;
mod solver;

pub use denoiser::{apply_matrix_denoiser, hutchinson_trace, DenoiserBackend, DenoiserOutput};
pub use lifted::{lifted_moments, lifted_se, run_lifted_oamp, LiftedMoments, LiftedSe, LiftedStep, MAX_DEGREE};
pub use model::{sample_signal, SpikedModel};
pub use oamp::{empirical_w2_check, run_oamp, run_pca, OampOptions, PcaResult, RunMetrics, StepMetrics, W2Entry, W2Report};
pub use operator::{sample_noise, sample_noise_with_limit, NoiseMode, NoiseOperator, StructuredNoise, DENSE_LIMIT};
pub use solver::{conjugate_gradient, symmetric_eigen, top_eigenpair, CgReport, TopEigen};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Signal = 0,
    Noise = 1,
    Probes = 2,
    Lanczos = 3,
    Power = 4,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
