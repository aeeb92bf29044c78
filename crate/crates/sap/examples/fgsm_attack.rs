//! Single-step FGSM attack on one test example, sweeping the attack level.
//!
//! ```bash
//! cargo run --release --example fgsm_attack
//! ```

use sap::attacks::fgsm;
use sap::{data, nn};

fn main() -> sap::Result<()> {
    let dataset = data::generate_synthetic(50, 512, 3)?;
    let (train_set, test_set) = data::split(&dataset, 0.1, 0)?;
    let model = nn::train(
        nn::ModelSpec::default_cnn(512),
        &train_set,
        &nn::TrainConfig::default(),
    )?;

    let ex = &test_set.examples()[0];
    println!("attacking {} (true class {})\n", ex.id, ex.label.label());
    println!(
        "{:>8}  {:<8} {:>10}  success",
        "epsilon", "class", "confidence"
    );
    for epsilon in [0.0, 1.0, 2.0, 5.0, 10.0, 20.0] {
        let r = fgsm(&model, &ex.signal, ex.label, epsilon)?;
        println!(
            "{:>8.1}  {:<8} {:>9.1}%  {}",
            epsilon,
            r.pred_after.class.label(),
            r.pred_after.confidence * 100.0,
            r.success
        );
    }
    Ok(())
}
