//! Train the toy classifier, then attack every test example with PGD
//! (epsilon 10, alpha 1, 20 steps) and report the success rate.
//!
//! ```bash
//! cargo run --release --example pgd_attack
//! ```

use sap::attacks::{attack_campaign, AttackConfig, AttackMethod};
use sap::{data, nn};

fn main() -> sap::Result<()> {
    let dataset = data::generate_synthetic(50, 512, 3)?;
    let (train_set, test_set) = data::split(&dataset, 0.1, 0)?;
    let model = nn::train(
        nn::ModelSpec::default_cnn(512),
        &train_set,
        &nn::TrainConfig::default(),
    )?;

    let start = std::time::Instant::now();
    let campaign = attack_campaign(
        &model,
        &test_set,
        AttackMethod::Pgd,
        &AttackConfig::pgd_default(),
        None,
    )?;
    println!(
        "attacked {} examples in {:.1?}",
        test_set.len(),
        start.elapsed()
    );

    for r in &campaign.results {
        println!(
            "{:<12} {:>6} -> {:<6} success {:<5} max dev {:>6.2}  curvature {:>7.3}",
            r.id,
            r.pred_before.class.label(),
            r.pred_after.class.label(),
            r.success,
            r.linf_norm,
            r.max_second_diff,
        );
    }
    let s = &campaign.summary;
    match s.success_rate {
        Some(rate) => println!(
            "\nflipped {}/{} eligible ({:.1}%)",
            s.n_success,
            s.n_eligible,
            rate * 100.0
        ),
        None => println!("\nno eligible examples"),
    }
    println!(
        "median perturbation curvature {:.3}",
        s.smoothness_stats.max_second_diff.median
    );
    Ok(())
}
