//! Smooth adversarial perturbations against a small single-lead rhythm
//! classifier.
//!
//! The crate trains a compact 1D convolutional network on ECG-like spike
//! trains and attacks it three ways: single-step FGSM, iterated PGD inside
//! an infinity-norm ball, and SAP, which optimizes a perturbation through a
//! bank of Gaussian smoothing kernels so the result stays free of square
//! wave artifacts. A set of resampling procedures then shows that the
//! adversarial examples found this way are not isolated: noised, smoothed
//! and recombined variants form a whole band of signals that keep fooling
//! the classifier.
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run --release --example train_classifier
//! cargo run --release --example fgsm_attack
//! cargo run --release --example pgd_attack
//! cargo run --release --example smooth_attack
//! cargo run --release --example adversarial_band
//! cargo run --release --example plot_attack
//! ```
//!
//! The same functionality is scriptable through the `sap` binary
//! (`gen-data`, `train`, `eval`, `attack`, `band`, `plot`).

pub mod attacks;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod existence;
pub mod kernels;
pub mod nn;
pub mod plot;
pub mod rng;

pub use attacks::{
    attack_campaign, fgsm, pgd, sap, AttackConfig, AttackGoal, AttackMethod, AttackResult,
};
pub use data::{
    generate_synthetic, load_dataset, save_dataset, split, Dataset, RhythmClass, Signal,
};
pub use error::{Error, Result};
pub use eval::{confusion, f1_scores, smoothness_stats, success_rate, MetricsReport};
pub use existence::{build_band, existence_experiment, Band, ExistenceReport};
pub use kernels::{bank_smooth, convolve_same, GaussianKernel, KernelBank};
pub use nn::{train, Model, ModelSpec, Prediction, TrainConfig};
