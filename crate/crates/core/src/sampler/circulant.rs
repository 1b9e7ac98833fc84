//! Exact sampling of stationary Gaussian sequences by circulant embedding.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Eigenvalues below `-NEGATIVE_TOLERANCE · max` are an embedding failure;
/// those above are clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-8;

const MAX_DOUBLINGS: u32 = 4;

/// Prepared sampler for `N(0, C)` with Toeplitz `C_{jk} = cov(|j − k|)`.
pub struct CirculantSampler {
    len: usize,
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("len", &self.len)
            .field("embedding", &self.scale.len())
            .finish()
    }
}

/// Scratch buffers for one worker.
#[derive(Debug, Default)]
pub struct CirculantScratch {
    buffer: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl CirculantSampler {
    /// Builds the embedding for `len` points; `cov(k)` must be defined for
    /// every nonnegative lag since the embedding may be padded.
    pub fn new(len: usize, cov: impl Fn(usize) -> f64) -> Result<Self> {
        if len == 0 {
            return Err(Error::domain("circulant sampler needs at least one point"));
        }
        let mut size = (2 * (len.max(2) - 1)).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let mut attempt = 0;
        loop {
            let half = size / 2;
            let mut row: Vec<Complex64> = (0..size)
                .map(|k| {
                    let lag = if k <= half { k } else { size - k };
                    Complex64::new(cov(lag), 0.0)
                })
                .collect();
            let fft = planner.plan_fft_forward(size);
            fft.process(&mut row);
            let max = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
            let min = row.iter().map(|c| c.re).fold(f64::MAX, f64::min);
            if min >= -NEGATIVE_TOLERANCE * max {
                if min < 0.0 {
                    log::warn!("clamping circulant eigenvalue {min:e} (max {max:e}) to zero, size {size}");
                }
                let scale = row.iter().map(|c| (c.re.max(0.0) / size as f64).sqrt()).collect();
                return Ok(Self { len, scale, fft });
            }
            attempt += 1;
            if attempt > MAX_DOUBLINGS {
                return Err(Error::EmbeddingFailure {
                    min_eigen: min,
                    max_eigen: max,
                });
            }
            size *= 2;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn embedding_size(&self) -> usize {
        self.scale.len()
    }

    /// Writes one draw into `out[..len]`.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut CirculantScratch) {
        let size = self.scale.len();
        scratch.buffer.resize(size, Complex64::default());
        scratch
            .work
            .resize(self.fft.get_inplace_scratch_len(), Complex64::default());
        for (b, &s) in scratch.buffer.iter_mut().zip(&self.scale) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *b = Complex64::new(s * re, s * im);
        }
        self.fft.process_with_scratch(&mut scratch.buffer, &mut scratch.work);
        for (o, b) in out[..self.len].iter_mut().zip(&scratch.buffer) {
            *o = b.re;
        }
    }
}

/// Autocovariance of unit-step fractional Gaussian noise with `Var = 1`.
pub fn fgn_autocov(kappa: f64, lag: usize) -> f64 {
    let k = lag as f64;
    0.5 * ((k + 1.0).powf(kappa) - 2.0 * k.powf(kappa) + (k - 1.0).abs().powf(kappa))
}
