//! Procedures showing that adversarial examples are not isolated points:
//! Gaussian resampling around a known adversarial example, concatenation of
//! intersecting variants, and uniform sampling from the band they span.
//!
//! Every generated variant keeps its perturbation inside the epsilon ball:
//! the perturbation is smoothed by the kernel bank and clipped around zero
//! before being added back to the original signal.

use serde::{Deserialize, Serialize};

use crate::attacks::clip_inf;
use crate::data::{RhythmClass, Signal};
use crate::error::{Error, Result};
use crate::kernels::{bank_smooth, KernelBank};
use crate::nn::Model;
use crate::rng::Rng;

/// Gaussian noise used for resampling. The default follows N(0, 25) read
/// in the variance convention (standard deviation 5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub variance: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { variance: 25.0 }
    }
}

impl NoiseSpec {
    pub fn new(variance: f64) -> Result<Self> {
        if variance <= 0.0 || !variance.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        Ok(NoiseSpec { variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Per-timestep envelope of a population of signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(skip, default)]
    pub n: usize,
}

impl Band {
    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn contains(&self, samples: &[f64]) -> bool {
        samples.len() == self.len()
            && samples
                .iter()
                .enumerate()
                .all(|(t, v)| self.min[t] <= *v && *v <= self.max[t])
    }

    pub fn width(&self, t: usize) -> f64 {
        self.max[t] - self.min[t]
    }
}

/// New variant of `x_adv`: add white Gaussian noise to the adversarial
/// perturbation, smooth it with the bank, clip it around zero and add it
/// back to `x`.
pub fn resample_gaussian(
    x: &Signal,
    x_adv: &Signal,
    noise: &NoiseSpec,
    bank: &KernelBank,
    epsilon: f64,
    rng: &mut Rng,
) -> Result<Signal> {
    if x.len() != x_adv.len() {
        return Err(Error::InvalidInput(format!(
            "signal lengths differ: {} vs {}",
            x.len(),
            x_adv.len()
        )));
    }
    let sd = noise.std_dev();
    let noisy: Vec<f64> = x_adv
        .samples()
        .iter()
        .zip(x.samples())
        .map(|(a, o)| a + rng.normal(0.0, sd) - o)
        .collect();
    perturb_smoothed(x, &noisy, bank, epsilon)
}

fn perturb_smoothed(x: &Signal, raw: &[f64], bank: &KernelBank, epsilon: f64) -> Result<Signal> {
    let smoothed = bank_smooth(raw, bank);
    let zeros = vec![0.0; raw.len()];
    let clipped = clip_inf(&smoothed, &zeros, epsilon)?;
    let samples: Vec<f64> = x
        .samples()
        .iter()
        .zip(&clipped)
        .map(|(o, p)| o + p)
        .collect();
    Signal::new(samples, x.sample_rate_hz())
}

/// Elementwise envelope over at least two equal-length signals.
pub fn build_band(samples: &[Signal]) -> Result<Band> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "band needs at least 2 signals, got {}",
            samples.len()
        )));
    }
    let len = samples[0].len();
    if samples.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidInput(
            "band inputs must share a length".into(),
        ));
    }
    let mut min = samples[0].samples().to_vec();
    let mut max = min.clone();
    for s in &samples[1..] {
        for (t, v) in s.samples().iter().enumerate() {
            min[t] = min[t].min(*v);
            max[t] = max[t].max(*v);
        }
    }
    Ok(Band {
        min,
        max,
        n: samples.len(),
    })
}

/// Timesteps where the two signals cross: the difference is exactly zero,
/// or changes sign between `t` and `t + 1`.
pub fn find_intersections(x1: &Signal, x2: &Signal) -> Result<Vec<usize>> {
    if x1.len() != x2.len() {
        return Err(Error::InvalidInput(format!(
            "signal lengths differ: {} vs {}",
            x1.len(),
            x2.len()
        )));
    }
    let d: Vec<f64> = x1
        .samples()
        .iter()
        .zip(x2.samples())
        .map(|(a, b)| a - b)
        .collect();
    let mut out = Vec::new();
    for t in 0..d.len() {
        if d[t] == 0.0 || (t + 1 < d.len() && d[t] * d[t + 1] < 0.0) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Hybrid signal: the first `t` samples of `x1` followed by the rest of
/// `x2`. Requires `1 <= t < len`.
pub fn concatenate_at(x1: &Signal, x2: &Signal, t: usize) -> Result<Signal> {
    if x1.len() != x2.len() {
        return Err(Error::InvalidInput(format!(
            "signal lengths differ: {} vs {}",
            x1.len(),
            x2.len()
        )));
    }
    if t == 0 || t >= x1.len() {
        return Err(Error::InvalidInput(format!(
            "split point {t} outside 1..{}",
            x1.len()
        )));
    }
    let mut samples = x1.samples()[..t].to_vec();
    samples.extend_from_slice(&x2.samples()[t..]);
    Signal::new(samples, x1.sample_rate_hz())
}

/// Draw `a[t] ~ U(min[t], max[t])` per timestep, then smooth and clip the
/// implied perturbation around zero. A zero-width band is a point mass.
pub fn sample_uniform_band(
    x: &Signal,
    band: &Band,
    bank: &KernelBank,
    epsilon: f64,
    rng: &mut Rng,
) -> Result<Signal> {
    if band.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "band length {} does not match signal length {}",
            band.len(),
            x.len()
        )));
    }
    let drawn = draw_from_band(band, rng);
    let raw: Vec<f64> = drawn.iter().zip(x.samples()).map(|(a, o)| a - o).collect();
    perturb_smoothed(x, &raw, bank, epsilon)
}

/// The raw per-timestep uniform draw (pre-smoothing); exposed so tests can
/// assert it stays inside the band.
pub fn draw_from_band(band: &Band, rng: &mut Rng) -> Vec<f64> {
    (0..band.len())
        .map(|t| rng.uniform(band.min[t], band.max[t]))
        .collect()
}

/// Upper bound on concatenated hybrids examined per experiment.
pub const MAX_CONCAT_PAIRS: usize = 100;

/// Report of one existence experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub n: usize,
    pub frac_gaussian_adversarial: f64,
    pub frac_uniform_adversarial: f64,
    /// None when no intersecting pair was found.
    pub frac_concat_adversarial: Option<f64>,
    pub band: Band,
    pub seed: u64,
}

/// Run the three procedures around one adversarial example.
///
/// `n` Gaussian resamples are drawn and checked against the model, their
/// band is built, `n` uniform band draws are checked, and up to
/// [`MAX_CONCAT_PAIRS`] hybrids from intersecting resample pairs are
/// checked. A variant counts as adversarial when the model's prediction
/// differs from the true label `y`.
#[allow(clippy::too_many_arguments)]
pub fn existence_experiment(
    model: &Model,
    x: &Signal,
    y: RhythmClass,
    x_adv: &Signal,
    n: usize,
    bank: &KernelBank,
    epsilon: f64,
    seed: u64,
) -> Result<ExistenceReport> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "existence experiment needs n >= 2, got {n}"
        )));
    }
    let noise = NoiseSpec::default();

    let mut resamples = Vec::with_capacity(n);
    let mut gaussian_adversarial = 0usize;
    for i in 0..n {
        let mut rng = Rng::derive(seed, &format!("gaussian/{i}"));
        let variant = resample_gaussian(x, x_adv, &noise, bank, epsilon, &mut rng)?;
        if model.predict(&variant)?.class != y {
            gaussian_adversarial += 1;
        }
        resamples.push(variant);
    }

    let band = build_band(&resamples)?;

    let mut uniform_adversarial = 0usize;
    for i in 0..n {
        let mut rng = Rng::derive(seed, &format!("uniform/{i}"));
        let variant = sample_uniform_band(x, &band, bank, epsilon, &mut rng)?;
        if model.predict(&variant)?.class != y {
            uniform_adversarial += 1;
        }
    }

    let mut hybrids = 0usize;
    let mut concat_adversarial = 0usize;
    'pairs: for i in 0..resamples.len() {
        for j in (i + 1)..resamples.len() {
            let crossings = find_intersections(&resamples[i], &resamples[j])?;
            let Some(t) = pick_crossing(&crossings, x.len()) else {
                continue;
            };
            let hybrid = concatenate_at(&resamples[i], &resamples[j], t)?;
            if model.predict(&hybrid)?.class != y {
                concat_adversarial += 1;
            }
            hybrids += 1;
            if hybrids >= MAX_CONCAT_PAIRS {
                break 'pairs;
            }
        }
    }

    Ok(ExistenceReport {
        n,
        frac_gaussian_adversarial: gaussian_adversarial as f64 / n as f64,
        frac_uniform_adversarial: uniform_adversarial as f64 / n as f64,
        frac_concat_adversarial: (hybrids > 0).then(|| concat_adversarial as f64 / hybrids as f64),
        band,
        seed,
    })
}

/// Split point for a hybrid: the crossing closest to the middle of the
/// signal, so the halves genuinely mix. Crossing index `t` marks the left
/// endpoint; the split keeps samples `0..=t` from the first signal.
fn pick_crossing(crossings: &[usize], len: usize) -> Option<usize> {
    let mid = len / 2;
    crossings
        .iter()
        .min_by_key(|&&t| ((t as i64 - mid as i64).abs(), t))
        .map(|&t| (t + 1).min(len - 1))
}

pub fn save_report(path: &std::path::Path, report: &ExistenceReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Validation(format!("serialization failed: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_report(path: &std::path::Path) -> Result<ExistenceReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })
}
