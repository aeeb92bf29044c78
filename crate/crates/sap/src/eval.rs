//! Classification and attack metrics.

use serde::{Deserialize, Serialize};

use crate::attacks::AttackResult;
use crate::data::{Dataset, RhythmClass};
use crate::error::Result;
use crate::nn::Model;

/// 4x4 counts; rows are true classes, columns predictions, both in
/// [`RhythmClass::ALL`] order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, truth: RhythmClass, predicted: RhythmClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: RhythmClass, predicted: RhythmClass) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }

    pub fn row_sum(&self, truth: RhythmClass) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn col_sum(&self, predicted: RhythmClass) -> u64 {
        (0..4).map(|r| self.counts[r][predicted.index()]).sum()
    }
}

/// Evaluate the model over a dataset.
pub fn confusion(model: &Model, data: &Dataset) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new();
    for ex in data.examples() {
        let pred = model.predict(&ex.signal)?;
        cm.record(ex.label, pred.class);
    }
    Ok(cm)
}

/// Per-class F1 plus the mean over the rhythm classes (Normal, AF, Other).
/// A class absent from both truth and prediction scores 0 and is flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: [f64; 4],
    pub degenerate: [bool; 4],
    pub mean_rhythm_classes: f64,
}

pub fn f1_scores(cm: &ConfusionMatrix) -> F1Report {
    let mut per_class = [0.0; 4];
    let mut degenerate = [false; 4];
    for class in RhythmClass::ALL {
        let i = class.index();
        let tp = cm.get(class, class) as f64;
        let truth = cm.row_sum(class) as f64;
        let predicted = cm.col_sum(class) as f64;
        if truth == 0.0 && predicted == 0.0 {
            degenerate[i] = true;
            continue;
        }
        if tp == 0.0 {
            continue; // precision or recall is 0, so F1 is 0
        }
        let precision = tp / predicted;
        let recall = tp / truth;
        per_class[i] = 2.0 * precision * recall / (precision + recall);
    }
    let mean_rhythm_classes = (per_class[RhythmClass::Normal.index()]
        + per_class[RhythmClass::Af.index()]
        + per_class[RhythmClass::Other.index()])
        / 3.0;
    F1Report {
        per_class,
        degenerate,
        mean_rhythm_classes,
    }
}

/// Attack success over the eligible examples (those the model classified
/// correctly before the attack). `rate` is None when nothing was eligible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub n_eligible: usize,
    pub n_success: usize,
    pub rate: Option<f64>,
}

pub fn success_rate(results: &[AttackResult]) -> SuccessRate {
    let mut n_eligible = 0usize;
    let mut n_success = 0usize;
    for r in results {
        if r.pred_before.class == r.label {
            n_eligible += 1;
            if r.success {
                n_success += 1;
            }
        }
    }
    SuccessRate {
        n_eligible,
        n_success,
        rate: (n_eligible > 0).then(|| n_success as f64 / n_eligible as f64),
    }
}

/// Five-number summary over a set of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

impl Percentiles {
    /// Linear interpolation between closest ranks; empty input gives zeros.
    pub fn of(values: &[f64]) -> Percentiles {
        if values.is_empty() {
            return Percentiles {
                min: 0.0,
                p25: 0.0,
                median: 0.0,
                p75: 0.0,
                max: 0.0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite stats"));
        let at = |q: f64| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        };
        Percentiles {
            min: sorted[0],
            p25: at(0.25),
            median: at(0.5),
            p75: at(0.75),
            max: *sorted.last().expect("non-empty"),
        }
    }
}

/// Perturbation smoothness: max absolute second difference and total
/// variation, summarized across a result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessStats {
    pub n: usize,
    pub max_second_diff: Percentiles,
    pub total_variation: Percentiles,
}

pub fn smoothness_stats(results: &[AttackResult]) -> SmoothnessStats {
    let second: Vec<f64> = results.iter().map(|r| r.max_second_diff).collect();
    let tv: Vec<f64> = results
        .iter()
        .map(|r| {
            r.perturbation
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .sum::<f64>()
        })
        .collect();
    SmoothnessStats {
        n: results.len(),
        max_second_diff: Percentiles::of(&second),
        total_variation: Percentiles::of(&tv),
    }
}

/// Everything the eval command reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub f1: F1Report,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_success: Option<SuccessRate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<SmoothnessStats>,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Self {
        MetricsReport {
            accuracy: cm.accuracy(),
            f1: f1_scores(&cm),
            confusion: cm,
            attack_success: None,
            smoothness: None,
        }
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("              predicted\n");
        out.push_str("true        ");
        for class in RhythmClass::ALL {
            out.push_str(&format!("{:>8}", class.label()));
        }
        out.push('\n');
        for truth in RhythmClass::ALL {
            out.push_str(&format!("{:<12}", truth.label()));
            for pred in RhythmClass::ALL {
                out.push_str(&format!("{:>8}", self.confusion.get(truth, pred)));
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&format!("accuracy     {:.4}\n", self.accuracy));
        for class in RhythmClass::ALL {
            let i = class.index();
            let flag = if self.f1.degenerate[i] {
                "  (absent)"
            } else {
                ""
            };
            out.push_str(&format!(
                "F1 {:<9} {:.4}{flag}\n",
                class.label(),
                self.f1.per_class[i]
            ));
        }
        out.push_str(&format!(
            "F1 mean      {:.4}  (Normal/AF/Other)\n",
            self.f1.mean_rhythm_classes
        ));
        if let Some(sr) = &self.attack_success {
            match sr.rate {
                Some(rate) => out.push_str(&format!(
                    "attack       {}/{} flipped ({:.1}%)\n",
                    sr.n_success,
                    sr.n_eligible,
                    rate * 100.0
                )),
                None => out.push_str("attack       n/a (0 eligible)\n"),
            }
        }
        out
    }
}
