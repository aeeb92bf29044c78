//! Render one attacked example as a three-panel SVG (original,
//! perturbation at the same vertical scale, adversarial) plus the band of
//! resampled variants around it.
//!
//! ```bash
//! cargo run --release --example plot_attack
//! ```

use sap::attacks::{campaign_goal, sap, AttackConfig};
use sap::existence::existence_experiment;
use sap::kernels::KernelBank;
use sap::{data, nn, plot};

fn main() -> sap::Result<()> {
    let dataset = data::generate_synthetic(50, 512, 3)?;
    let (train_set, test_set) = data::split(&dataset, 0.1, 0)?;
    let model = nn::train(
        nn::ModelSpec::default_cnn(512),
        &train_set,
        &nn::TrainConfig::default(),
    )?;
    let bank = KernelBank::default();

    let ex = test_set
        .examples()
        .iter()
        .find(|ex| {
            model
                .predict(&ex.signal)
                .map(|p| p.class == ex.label)
                .unwrap_or(false)
        })
        .expect("some test example is classified correctly");
    let cfg = AttackConfig::sap_default().with_goal(campaign_goal(ex.label));
    let mut attack = sap(&model, &ex.signal, ex.label, &cfg, &bank)?;
    attack.result.id = ex.id.clone();

    let out = std::env::temp_dir().join("sap-plots");
    std::fs::create_dir_all(&out)?;

    let attack_path = out.join(format!("attack-{}.svg", ex.id));
    std::fs::write(&attack_path, plot::attack_svg(&attack.result))?;
    println!("wrote {}", attack_path.display());

    let report = existence_experiment(
        &model,
        &attack.result.original,
        ex.label,
        &attack.result.adversarial,
        200,
        &bank,
        cfg.epsilon,
        7,
    )?;
    let caption = format!("band of {} resampled variants around {}", report.n, ex.id);
    let band_path = out.join(format!("band-{}.svg", ex.id));
    std::fs::write(
        &band_path,
        plot::band_svg(&attack.result.original, &report.band, &caption),
    )?;
    println!("wrote {}", band_path.display());
    Ok(())
}
