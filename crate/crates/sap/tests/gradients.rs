//! Finite-difference checks of the analytic gradients, plus the gradient
//! edge cases (saturated minima, dead channels, batch linearity).

mod common;

use common::*;
use sap::data::RhythmClass;
use sap::nn::{Layer, Model, ModelParams, ModelSpec};
use sap::rng::Rng;

#[test]
fn input_gradient_matches_finite_differences() {
    let (model, x, y) = random_model_and_input(101);
    let mut rng = Rng::derive(101, "coords");
    let coords = sample_coords(x.len(), 20, &mut rng);
    let tally = check_input_gradient(&model, &x, y, &coords);
    assert!(tally.checked >= 10, "too many excluded: {tally:?}");
    assert_eq!(tally.passed, tally.checked, "{tally:?}");
}

#[test]
fn param_gradient_matches_finite_differences() {
    let (model, x, y) = random_model_and_input(202);
    let mut rng = Rng::derive(202, "coords");
    let all = param_coords(&model);
    let picks = sample_coords(all.len(), 30, &mut rng);
    let coords: Vec<_> = picks.into_iter().map(|i| all[i]).collect();
    let tally = check_param_gradient(&model, &x, y, &coords);
    assert!(tally.checked >= 15, "too many excluded: {tally:?}");
    assert_eq!(tally.passed, tally.checked, "{tally:?}");
}

#[test]
fn gradient_vanishes_at_saturated_minimum() {
    // linear model whose true-class logit dominates by a wide margin:
    // softmax - onehot underflows, so the input gradient is essentially 0
    let n = 24;
    let spec = ModelSpec {
        layers: vec![Layer::Dense { out_features: 4 }],
        input_length: n,
        n_classes: 4,
        input_scale: 1.0,
    };
    let mut params = ModelParams::zeros_like(&spec).unwrap();
    {
        let dense = params.layers[0].as_mut().unwrap();
        for i in 0..n {
            dense.weight.data_mut()[i] = 0.01; // class 0 reads the input a little
        }
        dense.bias.data_mut()[0] = 60.0;
    }
    let model = Model::new(spec, params).unwrap();
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let (loss, grad) = model.grad_input_prepared(&x, RhythmClass::Normal).unwrap();
    assert!(loss < 1e-20);
    let max = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max < 1e-12, "gradient magnitude {max}");
}

#[test]
fn gradients_scale_linearly_with_summed_loss() {
    // the gradient of L counted twice is exactly twice the gradient:
    // check through the batch machinery (sum = 2 * mean over duplicates)
    let (model, x, y) = random_model_and_input(303);
    let (_, single) = model.grad_params_prepared(&x, y).unwrap();
    let (_, mean_of_two) = model.batch_gradients(&[(&x, y), (&x, y)]).unwrap();
    for (a, b) in single.layers.iter().zip(&mean_of_two.layers) {
        if let (Some(a), Some(b)) = (a.as_ref(), b.as_ref()) {
            for (va, vb) in a.weight.data().iter().zip(b.weight.data()) {
                // mean over two identical examples equals the single gradient,
                // so the implied sum is exactly its double
                assert_eq!(*va, *vb);
                let doubled = 2.0 * va;
                assert_eq!(doubled, va + vb);
            }
        }
    }
}

#[test]
fn excluded_coordinates_are_a_minority() {
    // the kink exclusion must not hollow the check out
    let mut total = FdTally::default();
    for seed in 0..5u64 {
        let (model, x, y) = random_model_and_input(400 + seed);
        let mut rng = Rng::derive(400 + seed, "coords");
        let coords = sample_coords(x.len(), 20, &mut rng);
        total.absorb(&check_input_gradient(&model, &x, y, &coords));
    }
    assert!(
        total.excluded * 3 < (total.checked + total.excluded),
        "{total:?}"
    );
}
