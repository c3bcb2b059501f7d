//! `key = value` experiment configuration.
//!
//! A config file and the command-line flags both reduce to a list of
//! key/value pairs; flags are applied after the file, so they win.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use pfedbred::data::PartitionScheme;
use pfedbred::fl::{RunConfig, StrategyKind, METHOD_NAMES};
use pfedbred::mirror::MIRROR_NAMES;
use pfedbred::model::MODEL_NAMES;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Idx { images: PathBuf, labels: PathBuf },
    Csv(PathBuf),
    Synth { classes: usize, dims: usize, per_class: usize, separation: f64 },
}

impl DatasetSource {
    fn key(&self) -> &'static str {
        match self {
            DatasetSource::Idx { .. } => "dataset_idx",
            DatasetSource::Csv(_) => "dataset_csv",
            DatasetSource::Synth { .. } => "synth",
        }
    }

    fn value(&self) -> String {
        match self {
            DatasetSource::Idx { images, labels } => format!("{},{}", images.display(), labels.display()),
            DatasetSource::Csv(p) => p.display().to_string(),
            DatasetSource::Synth { classes, dims, per_class, separation } => {
                format!("{classes},{dims},{per_class},{separation}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    pub partition: PartitionScheme,
    pub train_fraction: f64,
    pub rebalance: bool,
    pub method: String,
    pub model: String,
    pub hidden: usize,
    pub mirror: String,
    pub run: RunConfig,
    pub repeats: usize,
    pub global_deviation: bool,
    pub output_dir: PathBuf,
}

/// Every key accepted in a config file (flags use the same names with `-`
/// for `_`).
pub const KEYS: &[&str] = &[
    "dataset_idx", "dataset_csv", "synth", "partition", "train_fraction", "rebalance", "method", "strategy", "model",
    "hidden", "mirror", "T", "R", "K", "S", "N", "lambda", "alpha_m", "alpha", "eta", "eta_alpha", "eta_tilde_alpha",
    "eta_tilde", "beta", "batch", "seed", "repeats", "ft", "am", "global_deviation", "out",
];

const DATASET_KEYS: [&str; 3] = ["dataset_idx", "dataset_csv", "synth"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

/// Splits config text into entries. Blank lines and `#` comments are
/// skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<Entry>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")))?;
        out.push(Entry {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::config(key, format!("invalid value `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_dataset(key: &str, value: &str) -> Result<DatasetSource, CliError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match (key, parts.as_slice()) {
        ("dataset_idx", [images, labels]) => Ok(DatasetSource::Idx {
            images: images.into(),
            labels: labels.into(),
        }),
        ("dataset_csv", [path]) if !path.is_empty() => Ok(DatasetSource::Csv(path.into())),
        ("synth", [c, d, npc, sep]) => Ok(DatasetSource::Synth {
            classes: parse(key, c)?,
            dims: parse(key, d)?,
            per_class: parse(key, npc)?,
            separation: parse(key, sep)?,
        }),
        ("dataset_idx", _) => Err(CliError::config(key, "expected IMAGES,LABELS")),
        ("synth", _) => Err(CliError::config(key, "expected C,D,NPC,SEP")),
        _ => Err(CliError::config(key, "expected a path")),
    }
}

fn check_name(key: &str, value: &str, known: &[&str]) -> Result<String, CliError> {
    if known.contains(&value) {
        Ok(value.to_string())
    } else {
        Err(CliError::config(key, format!("unknown `{value}` (known: {})", known.join(", "))))
    }
}

/// Builds a validated spec from config-file entries followed by flag
/// entries. Defaults fill every unset key.
pub fn resolve(file: &[Entry], flags: &[Entry]) -> Result<ExperimentSpec, CliError> {
    let mut dataset = None;
    for layer in [file, flags] {
        let sources: Vec<&Entry> = layer.iter().filter(|e| DATASET_KEYS.contains(&e.key.as_str())).collect();
        if let [first, second, ..] = sources.as_slice() {
            return Err(CliError::config(
                second.key.clone(),
                format!("conflicts with dataset source `{}`", first.key),
            ));
        }
        if let Some(e) = sources.first() {
            dataset = Some(parse_dataset(&e.key, &e.value)?);
        }
    }
    let dataset = dataset.ok_or_else(|| CliError::config("dataset", "one of dataset_idx, dataset_csv or synth is required"))?;

    let mut spec = ExperimentSpec {
        dataset,
        partition: PartitionScheme::LabelShard { classes_per_client: 3 },
        train_fraction: 0.75,
        rebalance: false,
        method: "pfedbred".into(),
        model: "mclr".into(),
        hidden: 100,
        mirror: "squared_norm".into(),
        run: RunConfig::default(),
        repeats: 1,
        global_deviation: true,
        output_dir: "runs".into(),
    };
    let mut beta_set = false;
    for e in file.iter().chain(flags) {
        let (key, v) = (e.key.as_str(), e.value.as_str());
        let run = &mut spec.run;
        match key {
            k if DATASET_KEYS.contains(&k) => {}
            "partition" => spec.partition = v.parse().map_err(|err: pfedbred::Error| CliError::config(key, err.to_string()))?,
            "train_fraction" => spec.train_fraction = parse(key, v)?,
            "rebalance" => spec.rebalance = parse_bool(key, v)?,
            "method" => spec.method = check_name(key, v, &METHOD_NAMES)?,
            "strategy" => run.strategy = v.parse().map_err(|_| CliError::config(key, format!("unknown strategy `{v}`")))?,
            "model" => spec.model = check_name(key, v, MODEL_NAMES)?,
            "hidden" => spec.hidden = parse(key, v)?,
            "mirror" => spec.mirror = check_name(key, v, MIRROR_NAMES)?,
            "T" => run.rounds = parse(key, v)?,
            "R" => run.local_epochs = parse(key, v)?,
            "K" => run.prox_steps = parse(key, v)?,
            "S" => run.clients_per_round = parse(key, v)?,
            "N" => run.num_clients = parse(key, v)?,
            "lambda" => run.lambda = parse(key, v)?,
            "alpha_m" => run.alpha_m = parse(key, v)?,
            "alpha" => run.alpha = parse(key, v)?,
            "eta" => run.strategy_params.eta = parse(key, v)?,
            "eta_alpha" => run.strategy_params.eta_alpha = parse(key, v)?,
            "eta_tilde_alpha" => run.strategy_params.eta_tilde_alpha = Some(parse(key, v)?),
            "eta_tilde" => run.strategy_params.eta_tilde = Some(parse(key, v)?),
            "beta" => {
                run.beta = parse(key, v)?;
                beta_set = true;
            }
            "batch" => run.batch_size = parse(key, v)?,
            "seed" => run.seed = parse(key, v)?,
            "repeats" => spec.repeats = parse(key, v)?,
            "ft" => run.tricks.ft = parse_bool(key, v)?,
            "am" => run.tricks.am = parse_bool(key, v)?,
            "global_deviation" => spec.global_deviation = parse_bool(key, v)?,
            "out" => spec.output_dir = v.into(),
            _ => return Err(CliError::config(key, "unknown key")),
        }
    }
    if spec.run.tricks.am && !beta_set {
        spec.run.beta = 2.0;
    }
    validate(&spec)?;
    Ok(spec)
}

fn validate(spec: &ExperimentSpec) -> Result<(), CliError> {
    spec.run.validate()?;
    if spec.repeats == 0 {
        return Err(CliError::config("repeats", "must be at least 1"));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(CliError::config("train_fraction", "must lie strictly between 0 and 1"));
    }
    if spec.model == "dnn" && spec.hidden == 0 {
        return Err(CliError::config("hidden", "must be at least 1"));
    }
    if let DatasetSource::Synth { classes, dims, per_class, separation } = spec.dataset {
        if classes == 0 || per_class == 0 || dims < classes || !separation.is_finite() {
            return Err(CliError::config("synth", "needs C ≥ 1, D ≥ C, NPC ≥ 1 and a finite separation"));
        }
    }
    Ok(())
}

/// Writes a spec as config text that [`resolve`] maps back to the same spec.
pub fn to_config_text(spec: &ExperimentSpec) -> String {
    let run = &spec.run;
    let sp = &run.strategy_params;
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put(spec.dataset.key(), spec.dataset.value());
    put("partition", spec.partition.to_string());
    put("train_fraction", spec.train_fraction.to_string());
    put("rebalance", spec.rebalance.to_string());
    put("method", spec.method.clone());
    put("strategy", run.strategy.to_string());
    put("model", spec.model.clone());
    put("hidden", spec.hidden.to_string());
    put("mirror", spec.mirror.clone());
    put("T", run.rounds.to_string());
    put("R", run.local_epochs.to_string());
    put("K", run.prox_steps.to_string());
    put("S", run.clients_per_round.to_string());
    put("N", run.num_clients.to_string());
    put("lambda", run.lambda.to_string());
    put("alpha_m", run.alpha_m.to_string());
    put("alpha", run.alpha.to_string());
    put("eta", sp.eta.to_string());
    put("eta_alpha", sp.eta_alpha.to_string());
    if let Some(v) = sp.eta_tilde_alpha {
        put("eta_tilde_alpha", v.to_string());
    }
    if let Some(v) = sp.eta_tilde {
        put("eta_tilde", v.to_string());
    }
    put("beta", run.beta.to_string());
    put("batch", run.batch_size.to_string());
    put("seed", run.seed.to_string());
    put("repeats", spec.repeats.to_string());
    put("ft", run.tricks.ft.to_string());
    put("am", run.tricks.am.to_string());
    put("global_deviation", spec.global_deviation.to_string());
    put("out", spec.output_dir.display().to_string());
    s
}

impl std::fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&to_config_text(self))
    }
}

/// Strategy label used in outputs; `None` for methods without one.
pub fn strategy_label(spec: &ExperimentSpec) -> Option<StrategyKind> {
    (spec.method == "pfedbred").then_some(spec.run.strategy)
}
