//! Gaussian kernels and same-length 1D convolution.
//!
//! A kernel of size `2K+1` holds normalized weights
//! `v[m] = exp(-(m-K)^2 / (2 sigma^2)) / sum_i exp(-(i-K)^2 / (2 sigma^2))`
//! (0-based `m`). Convolution reads out-of-range samples as zero and keeps
//! the output the same length as the input, so a smoothed perturbation can
//! be added back to a signal sample-for-sample.
//!
//! As `sigma` grows the kernel tends to a plain moving average; as it
//! shrinks the kernel collapses to an identity.

use crate::error::{Error, Result};

/// Normalized, symmetric discrete Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    half_width: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    /// Build a kernel of odd `size` and standard deviation `sigma`.
    pub fn new(size: usize, sigma: f64) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "kernel size must be odd and positive, got {size}"
            )));
        }
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel sigma must be a positive finite number, got {sigma}"
            )));
        }
        let half_width = (size - 1) / 2;
        let center = half_width as f64;
        let mut weights: Vec<f64> = (0..size)
            .map(|m| {
                let d = m as f64 - center;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        Ok(GaussianKernel {
            half_width,
            sigma,
            weights,
        })
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A fixed set of kernels whose smoothed outputs are averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    kernels: Vec<GaussianKernel>,
}

/// Kernel sizes of the default bank.
pub const DEFAULT_BANK_SIZES: [usize; 5] = [5, 7, 11, 15, 19];
/// Standard deviations of the default bank, paired with [`DEFAULT_BANK_SIZES`].
pub const DEFAULT_BANK_SIGMAS: [f64; 5] = [1.0, 3.0, 5.0, 7.0, 10.0];

impl KernelBank {
    /// Build a bank from paired size and sigma lists.
    pub fn from_lists(sizes: &[usize], sigmas: &[f64]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidInput("kernel bank must not be empty".into()));
        }
        if sizes.len() != sigmas.len() {
            return Err(Error::InvalidInput(format!(
                "kernel bank needs matching lists, got {} sizes and {} sigmas",
                sizes.len(),
                sigmas.len()
            )));
        }
        let kernels = sizes
            .iter()
            .zip(sigmas)
            .map(|(&s, &sg)| GaussianKernel::new(s, sg))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelBank { kernels })
    }

    /// Bank holding a single kernel.
    pub fn single(kernel: GaussianKernel) -> Self {
        KernelBank {
            kernels: vec![kernel],
        }
    }

    pub fn kernels(&self) -> &[GaussianKernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

impl Default for KernelBank {
    /// The five-kernel bank used by the smooth attack.
    fn default() -> Self {
        KernelBank::from_lists(&DEFAULT_BANK_SIZES, &DEFAULT_BANK_SIGMAS)
            .expect("default bank lists are valid")
    }
}

/// Same-length convolution with zero padding:
/// `out[n] = sum_m a[n - m + K] * v[m]`, out-of-range reads as 0.
pub fn convolve_same(a: &[f64], kernel: &GaussianKernel) -> Vec<f64> {
    correlate_same(a, kernel.weights(), kernel.half_width())
}

/// Adjoint of [`convolve_same`]: convolution with the index-reversed kernel.
/// For the symmetric Gaussians built here it coincides with `convolve_same`,
/// but gradient code routes through this so the math stays adjoint-correct
/// for any kernel.
pub fn convolve_same_adjoint(a: &[f64], kernel: &GaussianKernel) -> Vec<f64> {
    let flipped: Vec<f64> = kernel.weights().iter().rev().copied().collect();
    correlate_same(a, &flipped, kernel.half_width())
}

fn correlate_same(a: &[f64], weights: &[f64], half_width: usize) -> Vec<f64> {
    let n = a.len();
    let k = half_width as isize;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (m, &w) in weights.iter().enumerate() {
            let idx = i as isize - m as isize + k;
            if idx >= 0 && (idx as usize) < n {
                acc += a[idx as usize] * w;
            }
        }
        *o = acc;
    }
    out
}

/// Average of the per-kernel smoothings of `theta`.
pub fn bank_smooth(theta: &[f64], bank: &KernelBank) -> Vec<f64> {
    bank_apply(theta, bank, convolve_same)
}

/// Adjoint of [`bank_smooth`]; used to pull gradients back through it.
pub fn bank_smooth_adjoint(grad: &[f64], bank: &KernelBank) -> Vec<f64> {
    bank_apply(grad, bank, convolve_same_adjoint)
}

fn bank_apply(
    a: &[f64],
    bank: &KernelBank,
    op: fn(&[f64], &GaussianKernel) -> Vec<f64>,
) -> Vec<f64> {
    let mut acc = vec![0.0; a.len()];
    for kernel in bank.kernels() {
        let smoothed = op(a, kernel);
        for (dst, s) in acc.iter_mut().zip(&smoothed) {
            *dst += s;
        }
    }
    let m = bank.len() as f64;
    for v in &mut acc {
        *v /= m;
    }
    acc
}
