//! Show that adversarial examples are not isolated points: resample around
//! one with Gaussian noise, build the band the variants span, then check
//! that uniform draws from the band and concatenations of intersecting
//! variants keep fooling the classifier.
//!
//! ```bash
//! cargo run --release --example adversarial_band
//! ```

use sap::attacks::{campaign_goal, sap, AttackConfig};
use sap::existence::existence_experiment;
use sap::kernels::KernelBank;
use sap::{data, nn};

fn main() -> sap::Result<()> {
    let n = 1000;
    let epsilon = 10.0;
    let dataset = data::generate_synthetic(50, 512, 3)?;
    let (train_set, test_set) = data::split(&dataset, 0.1, 0)?;
    let model = nn::train(
        nn::ModelSpec::default_cnn(512),
        &train_set,
        &nn::TrainConfig::default(),
    )?;
    let bank = KernelBank::default();

    println!("{n} gaussian resamples + {n} uniform band draws per example\n");
    let mut done = 0;
    for ex in test_set.examples() {
        if done >= 5 {
            break;
        }
        if model.predict(&ex.signal)?.class != ex.label {
            continue;
        }
        let cfg = AttackConfig::sap_default().with_goal(campaign_goal(ex.label));
        let attack = sap(&model, &ex.signal, ex.label, &cfg, &bank)?;
        if !attack.result.success {
            continue;
        }
        let report = existence_experiment(
            &model,
            &attack.result.original,
            ex.label,
            &attack.result.adversarial,
            n,
            &bank,
            epsilon,
            41,
        )?;
        let band_width: f64 = (0..report.band.len())
            .map(|t| report.band.width(t))
            .fold(0.0, f64::max);
        println!(
            "{:<12} gaussian {:.3}  uniform {:.3}  concat {}  band width max {:.2}",
            ex.id,
            report.frac_gaussian_adversarial,
            report.frac_uniform_adversarial,
            report
                .frac_concat_adversarial
                .map(|f| format!("{f:.3}"))
                .unwrap_or_else(|| "  n/a".into()),
            band_width,
        );
        done += 1;
    }
    Ok(())
}
