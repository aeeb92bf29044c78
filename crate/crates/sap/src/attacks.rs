//! White-box attacks against the classifier: FGSM, PGD and SAP.
//!
//! FGSM takes one signed-gradient step of size epsilon. PGD iterates
//! smaller signed steps, projecting back into the infinity-norm ball around
//! the original signal after each one. SAP optimizes a perturbation
//! parameter `theta` instead of the signal itself: the adversarial example
//! is `x + bank_smooth(theta)`, updates ascend the loss through the
//! smoothing (its adjoint pulls the input gradient back to theta-space) and
//! the clip is around zero rather than around `x`.
//!
//! `sign(0)` is defined as 0 everywhere.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RhythmClass, Signal};
use crate::error::{Error, Result};
use crate::eval;
use crate::kernels::{bank_smooth, bank_smooth_adjoint, KernelBank};
use crate::nn::{Model, Prediction};

/// What the attack tries to make the model say.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum AttackGoal {
    /// Any label other than the true one.
    Untargeted,
    /// A specific label.
    TargetClass(RhythmClass),
}

/// Attack budget and schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Infinity-norm budget, in raw signal units.
    pub epsilon: f64,
    /// Step size per iteration.
    pub alpha: f64,
    /// Number of iterations.
    pub steps: usize,
    pub goal: AttackGoal,
}

/// Iterations of the PGD run that seeds the SAP perturbation.
pub const SAP_INIT_STEPS: usize = 20;

impl AttackConfig {
    /// PGD defaults: epsilon 10, alpha 1, 20 steps, untargeted.
    pub fn pgd_default() -> Self {
        AttackConfig {
            epsilon: 10.0,
            alpha: 1.0,
            steps: 20,
            goal: AttackGoal::Untargeted,
        }
    }

    /// SAP defaults: same budget, 40 theta iterations.
    pub fn sap_default() -> Self {
        AttackConfig {
            steps: 40,
            ..AttackConfig::pgd_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.alpha <= 0.0 || self.alpha.is_nan() || self.alpha > self.epsilon {
            return Err(Error::InvalidInput(format!(
                "alpha must satisfy 0 < alpha <= epsilon, got alpha {} epsilon {}",
                self.alpha, self.epsilon
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_goal(self, goal: AttackGoal) -> Self {
        AttackConfig { goal, ..self }
    }
}

/// The attack methods offered by the campaign runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Pgd,
    Sap,
}

impl AttackMethod {
    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Pgd => "pgd",
            AttackMethod::Sap => "sap",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "fgsm" => Some(AttackMethod::Fgsm),
            "pgd" => Some(AttackMethod::Pgd),
            "sap" => Some(AttackMethod::Sap),
            _ => None,
        }
    }
}

/// One attacked example with verdicts on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub id: String,
    pub label: RhythmClass,
    pub method: AttackMethod,
    pub goal: AttackGoal,
    pub original: Signal,
    pub adversarial: Signal,
    pub perturbation: Vec<f64>,
    pub pred_before: Prediction,
    pub pred_after: Prediction,
    pub success: bool,
    pub linf_norm: f64,
    pub max_second_diff: f64,
}

/// Max absolute discrete curvature `|p[t+1] - 2 p[t] + p[t-1]|`.
pub fn max_second_difference(p: &[f64]) -> f64 {
    p.windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs())
        .fold(0.0, f64::max)
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamp each element of `value` into `[center - epsilon, center + epsilon]`.
pub fn clip_inf(value: &[f64], center: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if value.len() != center.len() {
        return Err(Error::InvalidInput(format!(
            "clip length mismatch: value {} vs center {}",
            value.len(),
            center.len()
        )));
    }
    Ok(value
        .iter()
        .zip(center)
        .map(|(v, c)| v.clamp(c - epsilon, c + epsilon))
        .collect())
}

/// Gradient of the attack objective (to be ascended) at `at`: the
/// true-class loss for untargeted attacks, the negated target-class loss
/// otherwise.
fn goal_gradient(
    model: &Model,
    at: &[f64],
    label: RhythmClass,
    goal: AttackGoal,
) -> Result<Vec<f64>> {
    match goal {
        AttackGoal::Untargeted => {
            let (_, grad) = model.grad_input_prepared(at, label)?;
            Ok(grad)
        }
        AttackGoal::TargetClass(target) => {
            let (_, mut grad) = model.grad_input_prepared(at, target)?;
            grad.iter_mut().for_each(|g| *g = -*g);
            Ok(grad)
        }
    }
}

/// Signed step serving the goal: `sign(goal_gradient)`.
fn goal_step(model: &Model, at: &[f64], label: RhythmClass, goal: AttackGoal) -> Result<Vec<f64>> {
    let grad = goal_gradient(model, at, label, goal)?;
    Ok(grad.iter().map(|g| sign(*g)).collect())
}

fn success_for(goal: AttackGoal, label: RhythmClass, after: &Prediction) -> bool {
    match goal {
        AttackGoal::Untargeted => after.class != label,
        AttackGoal::TargetClass(target) => after.class == target,
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &Model,
    method: AttackMethod,
    goal: AttackGoal,
    label: RhythmClass,
    original: Vec<f64>,
    adversarial: Vec<f64>,
    sample_rate_hz: f64,
    pred_before: Prediction,
) -> Result<AttackResult> {
    let pred_after = model.predict_prepared(&adversarial)?;
    let perturbation: Vec<f64> = adversarial
        .iter()
        .zip(&original)
        .map(|(a, o)| a - o)
        .collect();
    Ok(AttackResult {
        id: String::new(),
        label,
        method,
        goal,
        linf_norm: linf(&adversarial, &original),
        max_second_diff: max_second_difference(&perturbation),
        success: success_for(goal, label, &pred_after),
        original: Signal::new(original, sample_rate_hz)?,
        adversarial: Signal::new(adversarial, sample_rate_hz)?,
        perturbation,
        pred_before,
        pred_after,
    })
}

/// Single-step signed-gradient attack: `x + epsilon * sign(grad_x L)`.
/// `epsilon = 0` returns the input unchanged.
pub fn fgsm(model: &Model, x: &Signal, y: RhythmClass, epsilon: f64) -> Result<AttackResult> {
    if epsilon < 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    let original = model.prepare_input(x.samples());
    let pred_before = model.predict_prepared(&original)?;
    let step = goal_step(model, &original, y, AttackGoal::Untargeted)?;
    let adversarial: Vec<f64> = original
        .iter()
        .zip(&step)
        .map(|(o, s)| o + epsilon * s)
        .collect();
    finish(
        model,
        AttackMethod::Fgsm,
        AttackGoal::Untargeted,
        y,
        original,
        adversarial,
        x.sample_rate_hz(),
        pred_before,
    )
}

/// The sequence of PGD iterates, starting at the unperturbed input.
pub fn pgd_trajectory(
    model: &Model,
    x: &Signal,
    y: RhythmClass,
    cfg: &AttackConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let original = model.prepare_input(x.samples());
    let mut iterates = Vec::with_capacity(cfg.steps + 1);
    let mut current = original.clone();
    iterates.push(current.clone());
    for _ in 0..cfg.steps {
        let step = goal_step(model, &current, y, cfg.goal)?;
        let moved: Vec<f64> = current
            .iter()
            .zip(&step)
            .map(|(c, s)| c + cfg.alpha * s)
            .collect();
        current = clip_inf(&moved, &original, cfg.epsilon)?;
        iterates.push(current.clone());
    }
    Ok(iterates)
}

/// Iterated signed-gradient attack projected into the epsilon ball.
pub fn pgd(model: &Model, x: &Signal, y: RhythmClass, cfg: &AttackConfig) -> Result<AttackResult> {
    let iterates = pgd_trajectory(model, x, y, cfg)?;
    let original = iterates[0].clone();
    let adversarial = iterates.last().expect("at least the start").clone();
    let pred_before = model.predict_prepared(&original)?;
    finish(
        model,
        AttackMethod::Pgd,
        cfg.goal,
        y,
        original,
        adversarial,
        x.sample_rate_hz(),
        pred_before,
    )
}

/// The sequence of smoothed adversarial signals visited by SAP, including
/// the iterates of the PGD run that seeds theta.
pub fn sap_trajectory(
    model: &Model,
    x: &Signal,
    y: RhythmClass,
    cfg: &AttackConfig,
    bank: &KernelBank,
    init_steps: usize,
) -> Result<SapTrace> {
    cfg.validate()?;
    if bank.is_empty() {
        return Err(Error::InvalidInput("kernel bank must not be empty".into()));
    }
    let original = model.prepare_input(x.samples());
    let zeros = vec![0.0; original.len()];

    let mut adversarial_iterates = Vec::with_capacity(init_steps + cfg.steps + 1);
    let mut theta = if init_steps > 0 {
        let init_cfg = AttackConfig {
            steps: init_steps,
            ..*cfg
        };
        let seed_iterates = pgd_trajectory(model, x, y, &init_cfg)?;
        for it in &seed_iterates {
            adversarial_iterates.push(it.clone());
        }
        let last = seed_iterates.last().expect("non-empty");
        last.iter().zip(&original).map(|(a, o)| a - o).collect()
    } else {
        adversarial_iterates.push(original.clone());
        zeros.clone()
    };

    for _ in 0..cfg.steps {
        let smoothed = bank_smooth(&theta, bank);
        let candidate: Vec<f64> = original.iter().zip(&smoothed).map(|(o, s)| o + s).collect();
        // d(objective)/d(theta): pull the input gradient back through the
        // smoothing, then take the sign
        let grad_x = goal_gradient(model, &candidate, y, cfg.goal)?;
        let grad_theta = bank_smooth_adjoint(&grad_x, bank);
        let moved: Vec<f64> = theta
            .iter()
            .zip(&grad_theta)
            .map(|(t, g)| t + cfg.alpha * sign(*g))
            .collect();
        theta = clip_inf(&moved, &zeros, cfg.epsilon)?;
        let smoothed = bank_smooth(&theta, bank);
        adversarial_iterates.push(original.iter().zip(&smoothed).map(|(o, s)| o + s).collect());
    }
    Ok(SapTrace {
        original,
        theta,
        adversarial_iterates,
    })
}

/// Outcome of a SAP optimization run.
#[derive(Debug, Clone)]
pub struct SapTrace {
    pub original: Vec<f64>,
    /// Final perturbation parameter (pre-smoothing).
    pub theta: Vec<f64>,
    /// Smoothed adversarial signal after each step, seed run included.
    pub adversarial_iterates: Vec<Vec<f64>>,
}

/// Smooth adversarial perturbation attack. `theta` is seeded with a
/// [`SAP_INIT_STEPS`]-step PGD perturbation, then optimized through the
/// kernel bank with the clip taken around zero.
pub fn sap(
    model: &Model,
    x: &Signal,
    y: RhythmClass,
    cfg: &AttackConfig,
    bank: &KernelBank,
) -> Result<SapAttack> {
    sap_with_init(model, x, y, cfg, bank, SAP_INIT_STEPS)
}

/// SAP with an explicit seed-run length (0 starts theta at zero).
pub fn sap_with_init(
    model: &Model,
    x: &Signal,
    y: RhythmClass,
    cfg: &AttackConfig,
    bank: &KernelBank,
    init_steps: usize,
) -> Result<SapAttack> {
    let trace = sap_trajectory(model, x, y, cfg, bank, init_steps)?;
    let pred_before = model.predict_prepared(&trace.original)?;
    let adversarial = trace
        .adversarial_iterates
        .last()
        .expect("at least the start")
        .clone();
    let result = finish(
        model,
        AttackMethod::Sap,
        cfg.goal,
        y,
        trace.original.clone(),
        adversarial,
        x.sample_rate_hz(),
        pred_before,
    )?;
    Ok(SapAttack {
        result,
        theta: trace.theta,
    })
}

/// An [`AttackResult`] plus the theta that generated it; the adversarial
/// signal always equals `original + bank_smooth(theta)`.
#[derive(Debug, Clone)]
pub struct SapAttack {
    pub result: AttackResult,
    pub theta: Vec<f64>,
}

/// Per-class attack policy of the campaign: AF is pushed to look Normal,
/// everything else is attacked untargeted.
pub fn campaign_goal(label: RhythmClass) -> AttackGoal {
    match label {
        RhythmClass::Af => AttackGoal::TargetClass(RhythmClass::Normal),
        _ => AttackGoal::Untargeted,
    }
}

/// Summary block of a campaign report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub method: AttackMethod,
    pub config: AttackConfig,
    pub n_eligible: usize,
    pub n_success: usize,
    pub success_rate: Option<f64>,
    pub smoothness_stats: eval::SmoothnessStats,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<CampaignFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignFailure {
    pub id: String,
    pub error: String,
}

/// Attack results plus their summary.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub results: Vec<AttackResult>,
    pub summary: CampaignSummary,
}

/// Attack every example of `dataset` with one method. Only examples the
/// model classifies correctly before the attack count toward the success
/// rate; per-example failures are recorded, not fatal.
pub fn attack_campaign(
    model: &Model,
    dataset: &Dataset,
    method: AttackMethod,
    cfg: &AttackConfig,
    bank: Option<&KernelBank>,
) -> Result<Campaign> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    cfg.validate()?;
    let default_bank;
    let bank = match (method, bank) {
        (AttackMethod::Sap, Some(b)) => Some(b),
        (AttackMethod::Sap, None) => {
            default_bank = KernelBank::default();
            Some(&default_bank)
        }
        _ => bank,
    };
    let mut results = Vec::with_capacity(dataset.len());
    let mut failures = Vec::new();
    for ex in dataset.examples() {
        let goal = campaign_goal(ex.label);
        let per_example = cfg.with_goal(goal);
        let outcome = match method {
            AttackMethod::Fgsm => {
                // single full-size projected step; equals plain FGSM for
                // untargeted goals and extends it to targeted ones
                let one_step = AttackConfig {
                    alpha: per_example.epsilon,
                    steps: 1,
                    ..per_example
                };
                pgd(model, &ex.signal, ex.label, &one_step).map(|mut r| {
                    r.method = AttackMethod::Fgsm;
                    r
                })
            }
            AttackMethod::Pgd => pgd(model, &ex.signal, ex.label, &per_example),
            AttackMethod::Sap => sap(
                model,
                &ex.signal,
                ex.label,
                &per_example,
                bank.expect("sap bank defaulted above"),
            )
            .map(|s| s.result),
        };
        match outcome {
            Ok(mut result) => {
                result.id = ex.id.clone();
                results.push(result);
            }
            Err(e) => failures.push(CampaignFailure {
                id: ex.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let rate = eval::success_rate(&results);
    let summary = CampaignSummary {
        method,
        config: *cfg,
        n_eligible: rate.n_eligible,
        n_success: rate.n_success,
        success_rate: rate.rate,
        smoothness_stats: eval::smoothness_stats(&results),
        failures,
    };
    Ok(Campaign { results, summary })
}

/// Write a campaign as JSONL records followed by nothing; the summary goes
/// in its own file next to it.
pub fn save_campaign_records(path: &std::path::Path, results: &[AttackResult]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in results {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Validation(format!("serialization failed: {e}")))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read campaign records back (for plotting).
pub fn load_campaign_records(path: &std::path::Path) -> Result<Vec<AttackResult>> {
    use std::io::BufRead;
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AttackResult = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::kernels::GaussianKernel;
    use crate::nn::{Layer, Model, ModelParams, ModelSpec, TrainConfig};
    use proptest::prelude::*;

    fn toy_model() -> Model {
        let data = generate_synthetic(6, 96, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 8,
            learning_rate: 0.1,
            seed: 5,
        };
        let spec = ModelSpec::conv_stack(96, &[4, 8], 5, 2);
        crate::nn::train(spec, &data, &cfg).unwrap()
    }

    fn delta_bank() -> KernelBank {
        KernelBank::single(GaussianKernel::new(5, 1e-6).unwrap())
    }

    #[test]
    fn clip_clamps_and_is_idempotent() {
        let clipped = clip_inf(&[2.0, -3.0, 0.5], &[0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(clipped, vec![1.0, -1.0, 0.5]);
        let again = clip_inf(&clipped, &[0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(clipped, again);

        let inside = clip_inf(&[0.2, -0.4], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(inside, vec![0.2, -0.4]);

        assert!(clip_inf(&[1.0], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn fgsm_zero_epsilon_is_identity() {
        let model = toy_model();
        let data = generate_synthetic(1, 96, 77).unwrap();
        let ex = &data.examples()[0];
        let r = fgsm(&model, &ex.signal, ex.label, 0.0).unwrap();
        assert_eq!(r.original, r.adversarial);
        assert_eq!(r.linf_norm, 0.0);
        assert_eq!(r.success, r.pred_before.class != ex.label);
    }

    #[test]
    fn fgsm_matches_linear_model_closed_form() {
        // dense-only model: logits = W x + b, so
        // grad_x L = W^T (softmax(logits) - onehot(y))
        let n = 16;
        let spec = ModelSpec {
            layers: vec![Layer::Dense { out_features: 4 }],
            input_length: n,
            n_classes: 4,
            input_scale: 1.0,
        };
        let mut params = ModelParams::zeros_like(&spec).unwrap();
        let w: Vec<f64> = (0..4 * n)
            .map(|i| ((i * 37 % 13) as f64 - 6.0) / 10.0)
            .collect();
        params.layers[0]
            .as_mut()
            .unwrap()
            .weight
            .data_mut()
            .copy_from_slice(&w);
        let model = Model::new(spec, params).unwrap();

        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).sin()).collect();
        let signal = Signal::new(x.clone(), 300.0).unwrap();
        let y = RhythmClass::Other;

        // closed form, written out independently of the backprop path
        let mut logits = [0.0; 4];
        for (o, l) in logits.iter_mut().enumerate() {
            *l = (0..n).map(|i| w[o * n + i] * x[i]).sum();
        }
        let probs = crate::nn::softmax(&logits);
        let mut grad = vec![0.0; n];
        for (i, g) in grad.iter_mut().enumerate() {
            for o in 0..4 {
                let coeff = probs[o] - if o == y.index() { 1.0 } else { 0.0 };
                *g += coeff * w[o * n + i];
            }
        }

        let eps = 0.5;
        let r = fgsm(&model, &signal, y, eps).unwrap();
        for (p, g) in r.perturbation.iter().zip(&grad) {
            let expected = eps * super::sign(*g);
            assert!((p - expected).abs() < 1e-12, "{p} vs {expected}");
        }
    }

    #[test]
    fn pgd_single_full_step_equals_fgsm() {
        let model = toy_model();
        let data = generate_synthetic(2, 96, 31).unwrap();
        for ex in data.examples() {
            let eps = 4.0;
            let f = fgsm(&model, &ex.signal, ex.label, eps).unwrap();
            let cfg = AttackConfig {
                epsilon: eps,
                alpha: eps,
                steps: 1,
                goal: AttackGoal::Untargeted,
            };
            let p = pgd(&model, &ex.signal, ex.label, &cfg).unwrap();
            for (a, b) in f.adversarial.samples().iter().zip(p.adversarial.samples()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pgd_respects_the_ball() {
        let model = toy_model();
        let data = generate_synthetic(3, 96, 13).unwrap();
        let cfg = AttackConfig {
            epsilon: 6.0,
            alpha: 1.0,
            steps: 15,
            goal: AttackGoal::Untargeted,
        };
        for ex in data.examples() {
            let r = pgd(&model, &ex.signal, ex.label, &cfg).unwrap();
            assert!(r.linf_norm <= cfg.epsilon + 1e-9, "{}", r.linf_norm);
        }
    }

    #[test]
    fn pgd_multi_step_loss_not_below_single_step() {
        // statistical, not pointwise: over the fixture set, 20-step PGD
        // should essentially never end with a lower loss than 1-step
        let model = toy_model();
        let data = generate_synthetic(10, 96, 99).unwrap();
        let single = AttackConfig {
            epsilon: 6.0,
            alpha: 6.0,
            steps: 1,
            goal: AttackGoal::Untargeted,
        };
        let multi = AttackConfig {
            epsilon: 6.0,
            alpha: 1.0,
            steps: 20,
            goal: AttackGoal::Untargeted,
        };
        let mut ok = 0usize;
        let mut total = 0usize;
        for ex in data.examples() {
            let prepared_single = pgd(&model, &ex.signal, ex.label, &single).unwrap();
            let prepared_multi = pgd(&model, &ex.signal, ex.label, &multi).unwrap();
            let l1 = model
                .loss_prepared(prepared_single.adversarial.samples(), ex.label)
                .unwrap();
            let lt = model
                .loss_prepared(prepared_multi.adversarial.samples(), ex.label)
                .unwrap();
            total += 1;
            if lt >= l1 - 1e-9 {
                ok += 1;
            }
        }
        assert!(
            ok as f64 >= 0.95 * total as f64,
            "multi-step beat single-step on only {ok}/{total}"
        );
    }

    #[test]
    fn sap_with_delta_bank_tracks_pgd() {
        let model = toy_model();
        let data = generate_synthetic(1, 96, 41).unwrap();
        let ex = &data.examples()[0];
        let cfg = AttackConfig {
            epsilon: 5.0,
            alpha: 1.0,
            steps: 6,
            goal: AttackGoal::Untargeted,
        };
        let init = 4usize;
        let trace =
            sap_trajectory(&model, &ex.signal, ex.label, &cfg, &delta_bank(), init).unwrap();
        let pgd_cfg = AttackConfig {
            steps: init + cfg.steps,
            ..cfg
        };
        let pgd_iterates = pgd_trajectory(&model, &ex.signal, ex.label, &pgd_cfg).unwrap();
        assert_eq!(trace.adversarial_iterates.len(), pgd_iterates.len());
        for (a, b) in trace.adversarial_iterates.iter().zip(&pgd_iterates) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sap_theta_stays_in_ball_and_reconstructs() {
        let model = toy_model();
        let data = generate_synthetic(2, 96, 55).unwrap();
        let bank = KernelBank::default();
        let cfg = AttackConfig::sap_default().with_goal(AttackGoal::Untargeted);
        for ex in data.examples() {
            let attack = sap(&model, &ex.signal, ex.label, &cfg, &bank).unwrap();
            let theta_norm = attack.theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(theta_norm <= cfg.epsilon + 1e-9);
            // bitwise reconstruction from stored theta
            let rebuilt: Vec<f64> = attack
                .result
                .original
                .samples()
                .iter()
                .zip(bank_smooth(&attack.theta, &bank))
                .map(|(o, s)| o + s)
                .collect();
            assert_eq!(rebuilt, attack.result.adversarial.samples());
        }
    }

    #[test]
    fn sap_gradient_matches_finite_differences_through_smoothing() {
        let model = toy_model();
        let data = generate_synthetic(1, 96, 23).unwrap();
        let ex = &data.examples()[0];
        let bank = KernelBank::default();
        let original = model.prepare_input(ex.signal.samples());
        let theta: Vec<f64> = (0..original.len())
            .map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.8)
            .collect();

        // analytic: adjoint-smoothed input gradient at x + S(theta)
        let smoothed = bank_smooth(&theta, &bank);
        let candidate: Vec<f64> = original.iter().zip(&smoothed).map(|(o, s)| o + s).collect();
        let (_, gx) = model.grad_input_prepared(&candidate, ex.label).unwrap();
        let analytic = bank_smooth_adjoint(&gx, &bank);

        let loss_of = |th: &[f64]| {
            let s = bank_smooth(th, &bank);
            let cand: Vec<f64> = original.iter().zip(&s).map(|(o, v)| o + v).collect();
            model.loss_prepared(&cand, ex.label).unwrap()
        };
        let h = 1e-3;
        let mut checked = 0;
        for i in (0..original.len()).step_by(original.len() / 20) {
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-8);
            let rel = (fd - analytic[i]).abs() / denom;
            if rel < 1e-4 {
                checked += 1;
            }
        }
        assert!(checked >= 18, "only {checked}/20 coordinates matched");
    }

    #[test]
    fn campaign_counts_and_policy() {
        let model = toy_model();
        let data = generate_synthetic(2, 96, 3).unwrap();
        let campaign = attack_campaign(
            &model,
            &data,
            AttackMethod::Pgd,
            &AttackConfig::pgd_default(),
            None,
        )
        .unwrap();
        assert_eq!(campaign.results.len(), data.len());
        for r in &campaign.results {
            let expected_goal = campaign_goal(r.label);
            assert_eq!(r.goal, expected_goal);
            assert!(r.linf_norm <= 10.0 + 1e-9);
        }
        let eligible = campaign
            .results
            .iter()
            .filter(|r| r.pred_before.class == r.label)
            .count();
        assert_eq!(campaign.summary.n_eligible, eligible);
        if eligible == 0 {
            assert!(campaign.summary.success_rate.is_none());
        }
    }

    #[test]
    fn campaign_success_rate_on_single_flip() {
        let model = toy_model();
        let data = generate_synthetic(5, 96, 8).unwrap();
        let campaign = attack_campaign(
            &model,
            &data,
            AttackMethod::Pgd,
            &AttackConfig::pgd_default(),
            None,
        )
        .unwrap();
        // recount by hand
        let mut eligible = 0;
        let mut success = 0;
        for r in &campaign.results {
            if r.pred_before.class == r.label {
                eligible += 1;
                if r.success {
                    success += 1;
                }
            }
        }
        assert_eq!(campaign.summary.n_eligible, eligible);
        assert_eq!(campaign.summary.n_success, success);
        if eligible > 0 {
            let rate = campaign.summary.success_rate.unwrap();
            assert!((rate - success as f64 / eligible as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn campaign_is_deterministic() {
        let model = toy_model();
        let data = generate_synthetic(2, 96, 3).unwrap();
        let a = attack_campaign(
            &model,
            &data,
            AttackMethod::Sap,
            &AttackConfig::sap_default(),
            None,
        )
        .unwrap();
        let b = attack_campaign(
            &model,
            &data,
            AttackMethod::Sap,
            &AttackConfig::sap_default(),
            None,
        )
        .unwrap();
        assert_eq!(a.results, b.results);
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
    }

    #[test]
    fn fgsm_raises_loss_for_small_epsilon() {
        // first-order property: a small signed-gradient step should not
        // lower the loss on the vast majority of examples
        let model = toy_model();
        let data = generate_synthetic(5, 96, 61).unwrap();
        let mut raised = 0usize;
        for ex in data.examples() {
            let r = fgsm(&model, &ex.signal, ex.label, 0.5).unwrap();
            let before = model.loss_prepared(r.original.samples(), ex.label).unwrap();
            let after = model
                .loss_prepared(r.adversarial.samples(), ex.label)
                .unwrap();
            if after >= before - 1e-12 {
                raised += 1;
            }
        }
        assert!(
            raised as f64 >= 0.9 * data.len() as f64,
            "loss rose on only {raised}/{}",
            data.len()
        );
    }

    #[test]
    fn campaign_with_hopeless_model_reports_na() {
        // zero parameters: every logit is 0 and ties resolve to Normal, so a
        // dataset without Normal examples has no eligible attacks
        let spec = ModelSpec::conv_stack(96, &[2], 5, 2);
        let params = ModelParams::zeros_like(&spec).unwrap();
        let model = Model::new(spec, params).unwrap();
        let all = generate_synthetic(2, 96, 1).unwrap();
        let rest: Vec<_> = all
            .examples()
            .iter()
            .filter(|e| e.label != RhythmClass::Normal)
            .cloned()
            .collect();
        let data = crate::data::Dataset::new(rest, 0).unwrap();
        let campaign = attack_campaign(
            &model,
            &data,
            AttackMethod::Pgd,
            &AttackConfig::pgd_default(),
            None,
        )
        .unwrap();
        assert_eq!(campaign.summary.n_eligible, 0);
        assert_eq!(campaign.summary.success_rate, None);
        let sr = crate::eval::success_rate(&campaign.results);
        assert_eq!(sr.rate, None);
    }

    #[test]
    fn second_difference_of_step_is_height() {
        let mut p = vec![0.0; 10];
        for v in &mut p[5..] {
            *v = 3.0;
        }
        assert_eq!(max_second_difference(&p), 3.0);
        let ramp: Vec<f64> = (0..10).map(|i| 0.7 * i as f64).collect();
        assert!(max_second_difference(&ramp) < 1e-12);
    }

    proptest! {
        #[test]
        fn clip_projects_into_ball(seed in 0u64..500, eps in 0.1f64..5.0) {
            let mut rng = crate::rng::Rng::new(seed);
            let center: Vec<f64> = (0..32).map(|_| rng.uniform(-10.0, 10.0)).collect();
            let value: Vec<f64> = (0..32).map(|_| rng.uniform(-20.0, 20.0)).collect();
            let clipped = clip_inf(&value, &center, eps).unwrap();
            for (c, v) in center.iter().zip(&clipped) {
                prop_assert!((v - c).abs() <= eps + 1e-12);
            }
            let again = clip_inf(&clipped, &center, eps).unwrap();
            prop_assert_eq!(clipped, again);
        }

        #[test]
        fn sign_zero_is_zero(v in -5.0f64..5.0) {
            prop_assert_eq!(super::sign(0.0), 0.0);
            prop_assert_eq!(super::sign(v).abs(), if v == 0.0 { 0.0 } else { 1.0 });
        }
    }
}
