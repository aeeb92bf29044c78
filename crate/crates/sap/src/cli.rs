//! Command-line entry points. The binary in `src/main.rs` is a thin shim
//! over [`run`], so integration tests can drive the full pipeline in
//! process.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Flag values
//! override config-file values; every command writes the configuration it
//! actually ran with next to its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::attacks::{self, AttackConfig, AttackMethod};
use crate::config::{render_section, RunConfig};
use crate::data::{self, Dataset};
use crate::error::Error;
use crate::eval;
use crate::existence;
use crate::kernels::KernelBank;
use crate::nn::{self, Model, ModelSpec, TrainConfig};
use crate::plot;

const USAGE: &str = "\
sap - train a small single-lead rhythm classifier and craft smooth adversarial examples

USAGE:
    sap <COMMAND> [OPTIONS]

COMMANDS:
    gen-data   generate a synthetic labeled dataset (JSONL)
    train      train the classifier and save weights
    eval       evaluate a trained model (confusion matrix, accuracy, F1)
    attack     run an attack campaign (fgsm | pgd | sap)
    band       resample around adversarial examples and report the band
    plot       render attack results or band reports as SVG
    help       print this text

COMMON OPTIONS (all commands):
    --config PATH   key/value config file with per-command sections
    --seed N        global seed (default 0)
    --out DIR       output directory (required)

gen-data: --n-per-class N (50)  --length N (512)
train:    --data PATH  --epochs N (50)  --batch-size N (16)
          --learning-rate X (0.12)  --test-fraction X (0.1)
eval:     --data PATH  --weights PATH  --split test|train|all (test)
          --test-fraction X (0.1)
attack:   --data PATH  --weights PATH  --method fgsm|pgd|sap
          --epsilon X (10)  --alpha X (1)  --steps N (20; sap 40)
          --split test|train|all (test)  --test-fraction X (0.1)
          --kernel-sizes LIST (5,7,11,15,19)  --kernel-sigmas LIST (1,3,5,7,10)
band:     flags of attack, plus --n N (1000)  --count N (1)
plot:     --campaign PATH [--limit N]   or   --band PATH --data PATH --id ID

Exit codes: 0 success, 1 runtime failure, 2 usage error.";

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

/// Run one command. Returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    let Some(command) = args.first() else {
        return Err(CliError::Usage("missing command".into()));
    };
    let rest = &args[1..];
    match command.as_str() {
        "gen-data" => cmd_gen_data(rest),
        "train" => cmd_train(rest),
        "eval" => cmd_eval(rest),
        "attack" => cmd_attack(rest),
        "band" => cmd_band(rest),
        "plot" => cmd_plot(rest),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!("unknown command {other:?}"))),
    }
}

/// Flag/config resolution with a record of every value actually used.
struct Resolver {
    command: &'static str,
    flags: BTreeMap<String, String>,
    consumed: std::collections::BTreeSet<String>,
    config: RunConfig,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    fn new(command: &'static str, args: &[String]) -> Result<Self, CliError> {
        let mut flags = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(name) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!("unexpected argument {arg:?}")));
            };
            let (key, value) = if let Some((k, v)) = name.split_once('=') {
                (k.to_string(), v.to_string())
            } else {
                let Some(value) = args.get(i + 1) else {
                    return Err(CliError::Usage(format!("flag --{name} needs a value")));
                };
                i += 1;
                (name.to_string(), value.clone())
            };
            flags.insert(key, value);
            i += 1;
        }
        let config = match flags.get("config") {
            Some(path) => RunConfig::from_file(Path::new(path)).map_err(CliError::Runtime)?,
            None => RunConfig::default(),
        };
        let mut consumed = std::collections::BTreeSet::new();
        consumed.insert("config".to_string());
        Ok(Resolver {
            command,
            flags,
            consumed,
            config,
            resolved: BTreeMap::new(),
        })
    }

    fn lookup(&mut self, key: &str) -> Option<String> {
        self.consumed.insert(key.to_string());
        let value = self
            .flags
            .get(key)
            .cloned()
            .or_else(|| self.config.get(self.command, key).map(str::to_string));
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.clone());
        }
        value
    }

    fn str_default(&mut self, key: &str, default: &str) -> String {
        match self.lookup(key) {
            Some(v) => v,
            None => {
                self.resolved.insert(key.to_string(), default.to_string());
                default.to_string()
            }
        }
    }

    fn str_required(&mut self, key: &str) -> Result<String, CliError> {
        self.lookup(key)
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{key}")))
    }

    fn parse<T>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T: std::str::FromStr + std::fmt::Display,
    {
        match self.lookup(key) {
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("flag --{key}: cannot parse {v:?}"))),
            None => {
                self.resolved.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    fn seed(&mut self) -> Result<u64, CliError> {
        self.parse("seed", 0u64)
    }

    fn out_dir(&mut self) -> Result<PathBuf, CliError> {
        let out = self.str_required("out")?;
        let dir = PathBuf::from(out);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.into()))?;
        Ok(dir)
    }

    /// Reject flags the command never asked about (likely typos).
    fn reject_unknown(&self) -> Result<(), CliError> {
        for key in self.flags.keys() {
            if !self.consumed.contains(key) {
                return Err(CliError::Usage(format!(
                    "unknown flag --{key} for {}",
                    self.command
                )));
            }
        }
        Ok(())
    }

    fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        let text = render_section(self.command, &self.resolved);
        std::fs::write(dir.join(format!("{}.resolved.toml", self.command)), text)
            .map_err(|e| CliError::Runtime(e.into()))?;
        Ok(())
    }
}

fn parse_usize_list(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("flag --{flag}: bad entry {s:?}")))
        })
        .collect()
}

fn parse_f64_list(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("flag --{flag}: bad entry {s:?}")))
        })
        .collect()
}

fn select_split(
    dataset: &Dataset,
    which: &str,
    test_fraction: f64,
    seed: u64,
) -> Result<Dataset, CliError> {
    match which {
        "all" => Ok(dataset.clone()),
        "train" | "test" => {
            let (train, test) = data::split(dataset, test_fraction, seed)?;
            Ok(if which == "train" { train } else { test })
        }
        other => Err(CliError::Usage(format!(
            "flag --split: expected test|train|all, got {other:?}"
        ))),
    }
}

fn bank_from(r: &mut Resolver) -> Result<KernelBank, CliError> {
    let sizes = r.str_default("kernel-sizes", "5,7,11,15,19");
    let sigmas = r.str_default("kernel-sigmas", "1,3,5,7,10");
    let sizes = parse_usize_list(&sizes, "kernel-sizes")?;
    let sigmas = parse_f64_list(&sigmas, "kernel-sigmas")?;
    Ok(KernelBank::from_lists(&sizes, &sigmas)?)
}

fn cmd_gen_data(args: &[String]) -> Result<(), CliError> {
    let mut r = Resolver::new("gen-data", args)?;
    let n_per_class: usize = r.parse("n-per-class", 50usize)?;
    let length: usize = r.parse("length", 512usize)?;
    let seed = r.seed()?;
    let out = r.out_dir()?;
    r.reject_unknown()?;

    let dataset = data::generate_synthetic(n_per_class, length, seed)?;
    let path = out.join("dataset.jsonl");
    data::save_dataset(&path, &dataset)?;
    r.write_resolved(&out)?;
    println!(
        "wrote {} examples ({} per class, length {}) to {}",
        dataset.len(),
        n_per_class,
        length,
        path.display()
    );
    Ok(())
}

fn cmd_train(args: &[String]) -> Result<(), CliError> {
    let mut r = Resolver::new("train", args)?;
    let data_path = r.str_required("data")?;
    let epochs: usize = r.parse("epochs", 50usize)?;
    let batch_size: usize = r.parse("batch-size", 16usize)?;
    let learning_rate: f64 = r.parse("learning-rate", TrainConfig::default().learning_rate)?;
    let test_fraction: f64 = r.parse("test-fraction", 0.1f64)?;
    let seed = r.seed()?;
    let out = r.out_dir()?;
    r.reject_unknown()?;

    let dataset = data::load_dataset(Path::new(&data_path))?;
    let (train_set, test_set) = data::split(&dataset, test_fraction, seed)?;
    let window = dataset.examples()[0].signal.len();
    let spec = ModelSpec::default_cnn(window);
    let cfg = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        seed,
    };
    let model = nn::train(spec, &train_set, &cfg)?;
    let acc = nn::accuracy(&model, &test_set)?;
    let path = out.join("model.sapw");
    model.save(&path)?;
    r.write_resolved(&out)?;
    println!(
        "trained on {} examples, test accuracy {:.4} over {}; saved {}",
        train_set.len(),
        acc,
        test_set.len(),
        path.display()
    );
    Ok(())
}

fn cmd_eval(args: &[String]) -> Result<(), CliError> {
    let mut r = Resolver::new("eval", args)?;
    let data_path = r.str_required("data")?;
    let weights = r.str_required("weights")?;
    let which = r.str_default("split", "test");
    let test_fraction: f64 = r.parse("test-fraction", 0.1f64)?;
    let seed = r.seed()?;
    let out = r.out_dir()?;
    r.reject_unknown()?;

    let dataset = data::load_dataset(Path::new(&data_path))?;
    let subset = select_split(&dataset, &which, test_fraction, seed)?;
    let model = Model::load(Path::new(&weights))?;
    let cm = eval::confusion(&model, &subset)?;
    let report = eval::MetricsReport::from_confusion(cm);
    let path = out.join("metrics.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Validation(format!("serialization failed: {e}")))?;
    std::fs::write(&path, json + "\n").map_err(Error::from)?;
    r.write_resolved(&out)?;
    print!("{}", report.to_table());
    println!(
        "evaluated {} ({} examples); wrote {}",
        which,
        subset.len(),
        path.display()
    );
    Ok(())
}

struct AttackArgs {
    dataset: Dataset,
    model: Model,
    method: AttackMethod,
    cfg: AttackConfig,
    bank: KernelBank,
    seed: u64,
}

fn attack_args(r: &mut Resolver) -> Result<AttackArgs, CliError> {
    let data_path = r.str_required("data")?;
    let weights = r.str_required("weights")?;
    let method_name = r.str_required("method")?;
    let method = AttackMethod::from_name(&method_name)
        .ok_or_else(|| CliError::Usage(format!("flag --method: unknown method {method_name:?}")))?;
    let epsilon: f64 = r.parse("epsilon", 10.0f64)?;
    let alpha: f64 = r.parse("alpha", 1.0f64)?;
    let default_steps = if method == AttackMethod::Sap { 40 } else { 20 };
    let steps: usize = r.parse("steps", default_steps)?;
    let bank = bank_from(r)?;
    let which = r.str_default("split", "test");
    let test_fraction: f64 = r.parse("test-fraction", 0.1f64)?;
    let seed = r.seed()?;

    let dataset = data::load_dataset(Path::new(&data_path))?;
    let subset = select_split(&dataset, &which, test_fraction, seed)?;
    let model = Model::load(Path::new(&weights))?;
    let cfg = AttackConfig {
        epsilon,
        alpha,
        steps,
        goal: attacks::AttackGoal::Untargeted,
    };
    Ok(AttackArgs {
        dataset: subset,
        model,
        method,
        cfg,
        bank,
        seed,
    })
}

fn cmd_attack(args: &[String]) -> Result<(), CliError> {
    let mut r = Resolver::new("attack", args)?;
    let a = attack_args(&mut r)?;
    let out = r.out_dir()?;
    r.reject_unknown()?;

    let campaign = attacks::attack_campaign(&a.model, &a.dataset, a.method, &a.cfg, Some(&a.bank))?;
    let records = out.join("campaign.jsonl");
    attacks::save_campaign_records(&records, &campaign.results)?;
    let summary_path = out.join("campaign-summary.json");
    let json = serde_json::to_string_pretty(&campaign.summary)
        .map_err(|e| Error::Validation(format!("serialization failed: {e}")))?;
    std::fs::write(&summary_path, json + "\n").map_err(Error::from)?;
    r.write_resolved(&out)?;
    match campaign.summary.success_rate {
        Some(rate) => println!(
            "{}: flipped {}/{} eligible ({:.1}%); wrote {}",
            a.method.name(),
            campaign.summary.n_success,
            campaign.summary.n_eligible,
            rate * 100.0,
            records.display()
        ),
        None => println!(
            "{}: no eligible examples (model was wrong on all); wrote {}",
            a.method.name(),
            records.display()
        ),
    }
    Ok(())
}

fn cmd_band(args: &[String]) -> Result<(), CliError> {
    let mut r = Resolver::new("band", args)?;
    let a = attack_args(&mut r)?;
    let n: usize = r.parse("n", 1000usize)?;
    let count: usize = r.parse("count", 1usize)?;
    let out = r.out_dir()?;
    r.reject_unknown()?;

    let mut written = 0usize;
    for ex in a.dataset.examples() {
        if written >= count {
            break;
        }
        if a.model.predict(&ex.signal)?.class != ex.label {
            continue;
        }
        let goal = attacks::campaign_goal(ex.label);
        let cfg = a.cfg.with_goal(goal);
        let result = match a.method {
            AttackMethod::Sap => {
                attacks::sap(&a.model, &ex.signal, ex.label, &cfg, &a.bank)?.result
            }
            AttackMethod::Pgd => attacks::pgd(&a.model, &ex.signal, ex.label, &cfg)?,
            AttackMethod::Fgsm => attacks::fgsm(&a.model, &ex.signal, ex.label, cfg.epsilon)?,
        };
        if !result.success {
            continue;
        }
        let report_seed = crate::rng::stream_seed(a.seed, &format!("band/{}", ex.id));
        let report = existence::existence_experiment(
            &a.model,
            &result.original,
            ex.label,
            &result.adversarial,
            n,
            &a.bank,
            cfg.epsilon,
            report_seed,
        )?;
        let path = out.join(format!("band-{}.json", ex.id));
        existence::save_report(&path, &report)?;
        println!(
            "{}: gaussian {:.3}, uniform {:.3}, concat {}, wrote {}",
            ex.id,
            report.frac_gaussian_adversarial,
            report.frac_uniform_adversarial,
            report
                .frac_concat_adversarial
                .map(|f| format!("{f:.3}"))
                .unwrap_or_else(|| "n/a".into()),
            path.display()
        );
        written += 1;
    }
    r.write_resolved(&out)?;
    if written == 0 {
        return Err(CliError::Runtime(Error::Validation(
            "no successful adversarial example to resample around".into(),
        )));
    }
    println!("wrote {written} band report(s) to {}", out.display());
    Ok(())
}

fn cmd_plot(args: &[String]) -> Result<(), CliError> {
    let mut r = Resolver::new("plot", args)?;
    let campaign = r.lookup("campaign");
    let band = r.lookup("band");
    match (campaign, band) {
        (Some(campaign_path), None) => {
            let limit: usize = r.parse("limit", usize::MAX)?;
            let out = r.out_dir()?;
            r.reject_unknown()?;
            let records = attacks::load_campaign_records(Path::new(&campaign_path))?;
            let mut written = 0usize;
            for (i, record) in records.iter().take(limit).enumerate() {
                let stem = if record.id.is_empty() {
                    format!("{i:04}")
                } else {
                    record.id.clone()
                };
                let svg = plot::attack_svg(record);
                std::fs::write(out.join(format!("attack-{stem}.svg")), svg).map_err(Error::from)?;
                written += 1;
            }
            r.write_resolved(&out)?;
            println!("wrote {written} attack plot(s) to {}", out.display());
            Ok(())
        }
        (None, Some(band_path)) => {
            let data_path = r.str_required("data")?;
            let id = r.str_required("id")?;
            let out = r.out_dir()?;
            r.reject_unknown()?;
            let report = existence::load_report(Path::new(&band_path))?;
            let dataset = data::load_dataset(Path::new(&data_path))?;
            let example = dataset.find(&id).ok_or_else(|| {
                Error::Validation(format!("id {id:?} not present in {data_path}"))
            })?;
            let caption = format!("band around {id} (n={})", report.n);
            let svg = plot::band_svg(&example.signal, &report.band, &caption);
            let path = out.join(format!("band-{id}.svg"));
            std::fs::write(&path, svg).map_err(Error::from)?;
            r.write_resolved(&out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        _ => Err(CliError::Usage(
            "plot needs exactly one of --campaign PATH or --band PATH".into(),
        )),
    }
}
