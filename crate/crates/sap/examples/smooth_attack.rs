//! Compare PGD and SAP on the same test examples: success rates and how
//! smooth the perturbations are (max absolute second difference).
//!
//! ```bash
//! cargo run --release --example smooth_attack
//! ```

use sap::attacks::{attack_campaign, AttackConfig, AttackMethod};
use sap::kernels::KernelBank;
use sap::{data, nn};

fn main() -> sap::Result<()> {
    let dataset = data::generate_synthetic(50, 512, 3)?;
    let (train_set, test_set) = data::split(&dataset, 0.1, 0)?;
    let model = nn::train(
        nn::ModelSpec::default_cnn(512),
        &train_set,
        &nn::TrainConfig::default(),
    )?;
    let bank = KernelBank::default();

    let pgd = attack_campaign(
        &model,
        &test_set,
        AttackMethod::Pgd,
        &AttackConfig::pgd_default(),
        None,
    )?;
    let sap = attack_campaign(
        &model,
        &test_set,
        AttackMethod::Sap,
        &AttackConfig::sap_default(),
        Some(&bank),
    )?;

    for (name, campaign) in [("pgd", &pgd), ("sap", &sap)] {
        let s = &campaign.summary;
        let rate = s
            .success_rate
            .map(|r| format!("{:.1}%", r * 100.0))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "{name}: {}/{} flipped ({rate}); perturbation curvature median {:.3}, p75 {:.3}",
            s.n_success,
            s.n_eligible,
            s.smoothness_stats.max_second_diff.median,
            s.smoothness_stats.max_second_diff.p75,
        );
    }

    // per-example smoothness contrast on the shared examples
    let mut smoother = 0usize;
    let mut total = 0usize;
    for (p, s) in pgd.results.iter().zip(&sap.results) {
        assert_eq!(p.id, s.id);
        total += 1;
        if s.max_second_diff < p.max_second_diff {
            smoother += 1;
        }
    }
    println!("sap perturbation is smoother than pgd on {smoother}/{total} examples");
    Ok(())
}
