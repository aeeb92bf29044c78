//! Datasets of labeled single-lead signals: synthetic generation, JSONL
//! load/save and stratified splitting.
//!
//! The synthetic generator is a desk-scale stand-in for real recordings.
//! Each class gets a distinct, learnable morphology:
//!
//! * `Normal` - regular spike train, fixed inter-beat interval
//! * `AF`     - spike train with irregular (and on average shorter) intervals
//! * `Other`  - regular train with alternating strong/weak beat amplitudes
//! * `Noise`  - white noise, no beats
//!
//! Amplitudes are raw ADC-like units (beats around a thousand), so an attack
//! budget of `epsilon = 10` is a small fraction of a beat.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Minimum number of samples a signal may hold.
pub const MIN_SIGNAL_LEN: usize = 16;

/// A finite 1D voltage series with its sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.len() < MIN_SIGNAL_LEN {
            return Err(Error::Validation(format!(
                "signal too short: {} samples (minimum {MIN_SIGNAL_LEN})",
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite sample at index {pos}"
            )));
        }
        if sample_rate_hz <= 0.0 || !sample_rate_hz.is_finite() {
            return Err(Error::Validation(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Signal {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The four rhythm classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RhythmClass {
    Normal,
    #[serde(rename = "AF")]
    Af,
    Other,
    Noise,
}

impl RhythmClass {
    pub const ALL: [RhythmClass; 4] = [
        RhythmClass::Normal,
        RhythmClass::Af,
        RhythmClass::Other,
        RhythmClass::Noise,
    ];

    pub fn index(self) -> usize {
        match self {
            RhythmClass::Normal => 0,
            RhythmClass::Af => 1,
            RhythmClass::Other => 2,
            RhythmClass::Noise => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<RhythmClass> {
        RhythmClass::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            RhythmClass::Normal => "Normal",
            RhythmClass::Af => "AF",
            RhythmClass::Other => "Other",
            RhythmClass::Noise => "Noise",
        }
    }

    pub fn from_label(s: &str) -> Option<RhythmClass> {
        match s {
            "Normal" => Some(RhythmClass::Normal),
            "AF" => Some(RhythmClass::Af),
            "Other" => Some(RhythmClass::Other),
            "Noise" => Some(RhythmClass::Noise),
            _ => None,
        }
    }
}

impl fmt::Display for RhythmClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One labeled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub label: RhythmClass,
    pub signal: Signal,
}

/// A collection of labeled examples with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    split_seed: u64,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, split_seed: u64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Validation("empty dataset".into()));
        }
        let mut seen = BTreeSet::new();
        for ex in &examples {
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id {:?}", ex.id)));
            }
        }
        Ok(Dataset {
            examples,
            split_seed,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
    }

    pub fn class_count(&self, class: RhythmClass) -> usize {
        self.examples.iter().filter(|e| e.label == class).count()
    }

    pub fn find(&self, id: &str) -> Option<&LabeledExample> {
        self.examples.iter().find(|e| e.id == id)
    }
}

/// Sample rate of generated signals.
pub const SYNTH_SAMPLE_RATE_HZ: f64 = 300.0;

// Beat morphology of the generator. A beat is a narrow Gaussian bump; class
// identity comes from interval regularity and amplitude patterns. Beats are
// around 100 raw units, so the usual attack budget of 10 is a tenth of an
// R peak.
const BEAT_AMPLITUDE: f64 = 50.0;
const BEAT_WIDTH: f64 = 2.0;
const BEAT_SUPPORT: i64 = 8;
const BASELINE_NOISE_SD: f64 = 0.8;
const NORMAL_INTERVAL: usize = 75;
const AF_INTERVAL_LO: f64 = 38.0;
const AF_INTERVAL_HI: f64 = 68.0;
const OTHER_WEAK_AMPLITUDE: f64 = 21.0;
const NOISE_SD: f64 = 6.0;

fn add_beat(samples: &mut [f64], center: f64, amplitude: f64) {
    let lo = (center as i64 - BEAT_SUPPORT).max(0);
    let hi = ((center as i64) + BEAT_SUPPORT).min(samples.len() as i64 - 1);
    for t in lo..=hi {
        let d = t as f64 - center;
        samples[t as usize] += amplitude * (-d * d / (2.0 * BEAT_WIDTH * BEAT_WIDTH)).exp();
    }
}

fn synth_signal(class: RhythmClass, length: usize, rng: &mut Rng) -> Signal {
    let mut samples = vec![0.0; length];
    match class {
        RhythmClass::Normal => {
            let mut t = rng.uniform(0.0, NORMAL_INTERVAL as f64);
            while t < length as f64 {
                let amp = BEAT_AMPLITUDE * rng.uniform(0.95, 1.05);
                add_beat(&mut samples, t, amp);
                t += NORMAL_INTERVAL as f64;
            }
            for s in &mut samples {
                *s += rng.normal(0.0, BASELINE_NOISE_SD);
            }
        }
        RhythmClass::Af => {
            let mut t = rng.uniform(0.0, AF_INTERVAL_HI);
            while t < length as f64 {
                let amp = BEAT_AMPLITUDE * rng.uniform(0.95, 1.05);
                add_beat(&mut samples, t, amp);
                t += rng.uniform(AF_INTERVAL_LO, AF_INTERVAL_HI);
            }
            for s in &mut samples {
                *s += rng.normal(0.0, BASELINE_NOISE_SD);
            }
        }
        RhythmClass::Other => {
            let mut t = rng.uniform(0.0, NORMAL_INTERVAL as f64);
            let mut strong = true;
            while t < length as f64 {
                let base = if strong {
                    BEAT_AMPLITUDE
                } else {
                    OTHER_WEAK_AMPLITUDE
                };
                add_beat(&mut samples, t, base * rng.uniform(0.95, 1.05));
                strong = !strong;
                t += NORMAL_INTERVAL as f64;
            }
            for s in &mut samples {
                *s += rng.normal(0.0, BASELINE_NOISE_SD);
            }
        }
        RhythmClass::Noise => {
            for s in &mut samples {
                *s = rng.normal(0.0, NOISE_SD);
            }
        }
    }
    Signal::new(samples, SYNTH_SAMPLE_RATE_HZ).expect("generated signal is valid")
}

/// Generate `n_per_class` examples of each class, `length` samples each.
/// Pure function of its arguments.
pub fn generate_synthetic(n_per_class: usize, length: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidInput("n_per_class must be positive".into()));
    }
    if length < 64 {
        return Err(Error::InvalidInput(format!(
            "length must be at least 64, got {length}"
        )));
    }
    let mut examples = Vec::with_capacity(4 * n_per_class);
    for class in RhythmClass::ALL {
        for i in 0..n_per_class {
            let tag = format!("gen/{}/{}", class.label(), i);
            let mut rng = Rng::derive(seed, &tag);
            let signal = synth_signal(class, length, &mut rng);
            examples.push(LabeledExample {
                id: format!("{}-{:04}", class.label().to_ascii_lowercase(), i),
                label: class,
                signal,
            });
        }
    }
    Dataset::new(examples, seed)
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    label: String,
    fs: f64,
    samples: Vec<f64>,
}

/// Write a dataset as JSONL: one record per line,
/// `{"id": ..., "label": ..., "fs": ..., "samples": [...]}`.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for ex in dataset.examples() {
        let record = JsonRecord {
            id: ex.id.clone(),
            label: ex.label.label().to_string(),
            fs: ex.signal.sample_rate_hz(),
            samples: ex.signal.samples().to_vec(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Validation(format!("serialization failed: {e}")))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Load a JSONL dataset. Malformed lines report their line number; unknown
/// labels and non-finite samples are validation errors.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let label = RhythmClass::from_label(&record.label).ok_or_else(|| {
            Error::Validation(format!("line {lineno}: unknown label {:?}", record.label))
        })?;
        let signal = Signal::new(record.samples, record.fs)
            .map_err(|e| Error::Validation(format!("line {lineno}: {e}")))?;
        examples.push(LabeledExample {
            id: record.id,
            label,
            signal,
        });
    }
    if examples.is_empty() {
        return Err(Error::Validation("empty dataset".into()));
    }
    Dataset::new(examples, 0)
}

/// Stratified train/test split. Per class, `round(test_fraction * n)`
/// examples go to the test set; selection is shuffled under `seed`.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in RhythmClass::ALL {
        let members: Vec<&LabeledExample> = dataset
            .examples()
            .iter()
            .filter(|e| e.label == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "cannot stratify: class {} has only 1 example",
                class.label()
            )));
        }
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..members.len()).collect();
        let mut rng = Rng::derive(seed, &format!("split/{}", class.label()));
        rng.shuffle(&mut order);
        for (rank, &idx) in order.iter().enumerate() {
            if rank < n_test {
                test.push(members[idx].clone());
            } else {
                train.push(members[idx].clone());
            }
        }
    }
    // keep input order within each output for reproducible files
    let index_of = |id: &str| {
        dataset
            .examples()
            .iter()
            .position(|e| e.id == id)
            .expect("id came from dataset")
    };
    train.sort_by_key(|e| index_of(&e.id));
    test.sort_by_key(|e| index_of(&e.id));
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput(format!(
            "split produced an empty side (test_fraction {test_fraction})"
        )));
    }
    Ok((Dataset::new(train, seed)?, Dataset::new(test, seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(1, 64, 7).unwrap();
        let b = generate_synthetic(1, 64, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generation_counts_per_class() {
        let d = generate_synthetic(10, 256, 1).unwrap();
        assert_eq!(d.len(), 40);
        for class in RhythmClass::ALL {
            assert_eq!(d.class_count(class), 10);
        }
    }

    #[test]
    fn generation_rejects_bad_args() {
        assert!(generate_synthetic(0, 128, 1).is_err());
        assert!(generate_synthetic(1, 32, 1).is_err());
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_synthetic(1, 64, 1).unwrap();
        let b = generate_synthetic(1, 64, 2).unwrap();
        assert_ne!(a.examples()[0].signal, b.examples()[0].signal);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = std::env::temp_dir().join("sap-data-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.jsonl");
        let d = generate_synthetic(2, 64, 3).unwrap();
        save_dataset(&path, &d).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(d.examples(), loaded.examples());
    }

    #[test]
    fn loader_rejects_unknown_label() {
        let dir = std::env::temp_dir().join("sap-data-badlabel");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        let samples: Vec<String> = (0..16).map(|i| format!("{i}.0")).collect();
        std::fs::write(
            &path,
            format!(
                "{{\"id\":\"a\",\"label\":\"XX\",\"fs\":300,\"samples\":[{}]}}\n",
                samples.join(",")
            ),
        )
        .unwrap();
        match load_dataset(&path) {
            Err(Error::Validation(msg)) => assert!(msg.contains("XX"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_malformed_line_with_line_number() {
        let dir = std::env::temp_dir().join("sap-data-malformed");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        let good = "{\"id\":\"a\",\"label\":\"Normal\",\"fs\":300,\"samples\":[0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]}";
        std::fs::write(&path, format!("{good}\n{{not json\n")).unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_empty_file() {
        let dir = std::env::temp_dir().join("sap-data-empty");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        match load_dataset(&path) {
            Err(Error::Validation(msg)) => assert!(msg.contains("empty dataset"), "{msg}"),
            other => panic!("expected empty-dataset error, got {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_non_finite_samples() {
        let dir = std::env::temp_dir().join("sap-data-nonfinite");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("inf.jsonl");
        // an exponent far beyond f64 range must not sneak in as infinity
        let mut samples: Vec<String> = (0..16).map(|i| format!("{i}.0")).collect();
        samples[5] = "1e999".to_string();
        std::fs::write(
            &path,
            format!(
                "{{\"id\":\"a\",\"label\":\"Normal\",\"fs\":300,\"samples\":[{}]}}\n",
                samples.join(",")
            ),
        )
        .unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            Err(Error::Validation(msg)) => assert!(msg.contains("line 1"), "{msg}"),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_short_signal() {
        let dir = std::env::temp_dir().join("sap-data-short");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("short.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"label\":\"Normal\",\"fs\":300,\"samples\":[1,2,3]}\n",
        )
        .unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn split_ten_per_class_fraction_tenth() {
        let d = generate_synthetic(10, 128, 1).unwrap();
        let (train, test) = split(&d, 0.1, 5).unwrap();
        assert_eq!(train.len(), 36);
        assert_eq!(test.len(), 4);
        for class in RhythmClass::ALL {
            assert_eq!(test.class_count(class), 1);
        }
    }

    #[test]
    fn split_half_of_two_per_class() {
        let d = generate_synthetic(2, 64, 2).unwrap();
        let (train, test) = split(&d, 0.5, 1).unwrap();
        for class in RhythmClass::ALL {
            assert_eq!(train.class_count(class), 1);
            assert_eq!(test.class_count(class), 1);
        }
    }

    #[test]
    fn split_is_deterministic() {
        let d = generate_synthetic(8, 64, 4).unwrap();
        let (tr1, te1) = split(&d, 0.25, 11).unwrap();
        let (tr2, te2) = split(&d, 0.25, 11).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let mut examples = generate_synthetic(2, 64, 1).unwrap().examples().to_vec();
        examples.retain(|e| !(e.label == RhythmClass::Noise && e.id.ends_with("0001")));
        let d = Dataset::new(examples, 0).unwrap();
        assert!(matches!(split(&d, 0.5, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn signal_rejects_non_finite() {
        let mut samples = vec![0.0; 16];
        samples[3] = f64::NAN;
        assert!(Signal::new(samples, 300.0).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_ids(n in 2usize..12, frac in 0.1f64..0.9, seed in 0u64..100) {
            let d = generate_synthetic(n, 64, seed).unwrap();
            prop_assume!((frac * n as f64).round() as usize >= 1);
            prop_assume!(((frac * n as f64).round() as usize) < n);
            let (train, test) = split(&d, frac, seed).unwrap();
            let train_ids: BTreeSet<_> = train.examples().iter().map(|e| e.id.clone()).collect();
            let test_ids: BTreeSet<_> = test.examples().iter().map(|e| e.id.clone()).collect();
            prop_assert!(train_ids.is_disjoint(&test_ids));
            let all: BTreeSet<_> = d.examples().iter().map(|e| e.id.clone()).collect();
            let union: BTreeSet<_> = train_ids.union(&test_ids).cloned().collect();
            prop_assert_eq!(all, union);
        }
    }
}
