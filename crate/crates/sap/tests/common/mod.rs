//! Shared helpers for the integration suites: a finite-difference gradient
//! oracle (independent of the backprop path: it only evaluates losses) and
//! generators for random small architectures.

#![allow(dead_code)]

use sap::data::RhythmClass;
use sap::nn::{Layer, Model, ModelParams, ModelSpec};
use sap::rng::Rng;

pub const FD_STEP: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-4;

/// Relative error with a floor so dead (exactly zero) coordinates compare
/// cleanly.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-7);
    (a - b).abs() / denom
}

#[derive(Debug, Default)]
pub struct FdTally {
    pub checked: usize,
    pub passed: usize,
    pub excluded: usize,
}

impl FdTally {
    pub fn absorb(&mut self, other: &FdTally) {
        self.checked += other.checked;
        self.passed += other.passed;
        self.excluded += other.excluded;
    }

    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            return 1.0;
        }
        self.passed as f64 / self.checked as f64
    }
}

/// Central finite differences on the input gradient. Coordinates whose
/// +-h perturbation changes any ReLU sign or max-pool argmax are
/// kink-adjacent and excluded.
pub fn check_input_gradient(model: &Model, x: &[f64], y: RhythmClass, coords: &[usize]) -> FdTally {
    let (_, analytic) = model.grad_input_prepared(x, y).expect("gradient");
    let base_pattern = model.activation_pattern(x).expect("pattern");
    let mut tally = FdTally::default();
    for &i in coords {
        let mut plus = x.to_vec();
        plus[i] += FD_STEP;
        let mut minus = x.to_vec();
        minus[i] -= FD_STEP;
        let p_plus = model.activation_pattern(&plus).expect("pattern");
        let p_minus = model.activation_pattern(&minus).expect("pattern");
        if p_plus != base_pattern || p_minus != base_pattern {
            tally.excluded += 1;
            continue;
        }
        let fd = (model.loss_prepared(&plus, y).unwrap() - model.loss_prepared(&minus, y).unwrap())
            / (2.0 * FD_STEP);
        tally.checked += 1;
        if rel_err(analytic[i], fd) < FD_REL_TOL {
            tally.passed += 1;
        }
    }
    tally
}

/// Addresses of every scalar parameter of a model.
pub fn param_coords(model: &Model) -> Vec<(usize, bool, usize)> {
    let mut coords = Vec::new();
    for (li, entry) in model.params().layers.iter().enumerate() {
        if let Some(p) = entry {
            for wi in 0..p.weight.len() {
                coords.push((li, true, wi));
            }
            for bi in 0..p.bias.len() {
                coords.push((li, false, bi));
            }
        }
    }
    coords
}

fn nudged(model: &Model, coord: (usize, bool, usize), delta: f64) -> Model {
    let (li, is_weight, idx) = coord;
    let mut params = model.params().clone();
    let entry = params.layers[li].as_mut().expect("parameterized layer");
    let tensor = if is_weight {
        &mut entry.weight
    } else {
        &mut entry.bias
    };
    tensor.data_mut()[idx] += delta;
    Model::new(model.spec().clone(), params).expect("same shapes")
}

/// Central finite differences on parameter gradients, with the same
/// kink-exclusion rule applied through the perturbed models.
pub fn check_param_gradient(
    model: &Model,
    x: &[f64],
    y: RhythmClass,
    coords: &[(usize, bool, usize)],
) -> FdTally {
    let (_, grads) = model.grad_params_prepared(x, y).expect("gradient");
    let base_pattern = model.activation_pattern(x).expect("pattern");
    let mut tally = FdTally::default();
    for &coord in coords {
        let plus = nudged(model, coord, FD_STEP);
        let minus = nudged(model, coord, -FD_STEP);
        if plus.activation_pattern(x).unwrap() != base_pattern
            || minus.activation_pattern(x).unwrap() != base_pattern
        {
            tally.excluded += 1;
            continue;
        }
        let fd = (plus.loss_prepared(x, y).unwrap() - minus.loss_prepared(x, y).unwrap())
            / (2.0 * FD_STEP);
        let (li, is_weight, idx) = coord;
        let entry = grads.layers[li].as_ref().expect("parameterized layer");
        let analytic = if is_weight {
            entry.weight.data()[idx]
        } else {
            entry.bias.data()[idx]
        };
        tally.checked += 1;
        if rel_err(analytic, fd) < FD_REL_TOL {
            tally.passed += 1;
        }
    }
    tally
}

/// Random architecture from the full layer vocabulary, retried until the
/// shape chain checks out.
pub fn random_tiny_spec(rng: &mut Rng) -> ModelSpec {
    loop {
        let input_length = 24 + rng.below(17); // 24..=40
        let mut layers = Vec::new();
        for _ in 0..(1 + rng.below(2)) {
            layers.push(Layer::Conv1d {
                out_channels: 1 + rng.below(3),
                kernel_size: [3, 5][rng.below(2)],
                stride: 1 + rng.below(2),
            });
            layers.push(Layer::Relu);
            if rng.below(3) == 0 {
                layers.push(Layer::MaxPool {
                    width: 2 + rng.below(2),
                });
            }
        }
        if rng.below(2) == 0 {
            layers.push(Layer::GlobalAveragePool);
        }
        layers.push(Layer::Dense { out_features: 4 });
        let spec = ModelSpec {
            layers,
            input_length,
            n_classes: 4,
            input_scale: 0.02,
        };
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

/// Random model (random tiny spec + seeded init) and a random raw input.
pub fn random_model_and_input(seed: u64) -> (Model, Vec<f64>, RhythmClass) {
    let mut rng = Rng::derive(seed, "fd-model");
    let spec = random_tiny_spec(&mut rng);
    let len = spec.input_length;
    let params = ModelParams::init(&spec, rng.next_u64()).expect("init");
    let model = Model::new(spec, params).expect("valid");
    let x: Vec<f64> = (0..len).map(|_| rng.uniform(-60.0, 60.0)).collect();
    let y = RhythmClass::from_index(rng.below(4)).expect("class index");
    (model, x, y)
}

/// Spread-out coordinate sample without replacement.
pub fn sample_coords(n_total: usize, n_wanted: usize, rng: &mut Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n_total).collect();
    rng.shuffle(&mut all);
    all.truncate(n_wanted.min(n_total));
    all
}
