//! Generate a synthetic dataset, train the default classifier and report
//! test-set metrics.
//!
//! ```bash
//! cargo run --release --example train_classifier
//! ```

use sap::{data, eval, nn};

fn main() -> sap::Result<()> {
    let start = std::time::Instant::now();

    let dataset = data::generate_synthetic(50, 512, 3)?;
    let (train_set, test_set) = data::split(&dataset, 0.1, 0)?;
    println!(
        "dataset: {} examples ({} train / {} test)",
        dataset.len(),
        train_set.len(),
        test_set.len()
    );

    let spec = nn::ModelSpec::default_cnn(512);
    let cfg = nn::TrainConfig::default();
    let model = nn::train(spec, &train_set, &cfg)?;
    println!("trained {} epochs in {:.1?}", cfg.epochs, start.elapsed());

    let cm = eval::confusion(&model, &test_set)?;
    let report = eval::MetricsReport::from_confusion(cm);
    print!("{}", report.to_table());

    let out = std::env::temp_dir().join("sap-train-example.sapw");
    model.save(&out)?;
    println!("weights saved to {}", out.display());
    Ok(())
}
