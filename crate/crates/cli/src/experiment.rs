use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use pfedbred::data::{
    load_csv, load_idx, partition_dirichlet, partition_label_shard, synth_gaussian_mixture, Dataset, DirichletOptions,
    Partition, PartitionScheme,
};
use pfedbred::fl::{method_by_name, run, FlProblem, RunHistory};
use pfedbred::metrics::RoundMetrics;
use pfedbred::model::model_by_name;

use crate::config::{strategy_label, to_config_text, DatasetSource, ExperimentSpec};
use crate::CliError;

/// One line of the metrics stream.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsRecord<'a> {
    pub round: usize,
    pub repeat: usize,
    pub seed: u64,
    pub method: &'a str,
    pub strategy: Option<&'a str>,
    pub global_acc_globaltest: f64,
    pub personalized_acc_localtest: f64,
    pub mean_local_loss: f64,
    pub gce: Option<f64>,
    pub per_class_deviation_global: &'a [f64],
    pub per_class_deviation_local: &'a [f64],
}

impl<'a> MetricsRecord<'a> {
    fn new(m: &'a RoundMetrics, repeat: usize, seed: u64, method: &'a str, strategy: Option<&'a str>) -> Self {
        Self {
            round: m.round,
            repeat,
            seed,
            method,
            strategy,
            global_acc_globaltest: m.global_acc_globaltest,
            personalized_acc_localtest: m.personalized_acc_localtest,
            mean_local_loss: m.mean_local_loss,
            gce: m.gce,
            per_class_deviation_global: &m.per_class_deviation_global,
            per_class_deviation_local: &m.per_class_deviation_local,
        }
    }
}

pub fn load_dataset(source: &DatasetSource, seed: u64) -> Result<Dataset, CliError> {
    Ok(match source {
        DatasetSource::Idx { images, labels } => load_idx(images, labels)?,
        DatasetSource::Csv(path) => load_csv(path)?,
        DatasetSource::Synth { classes, dims, per_class, separation } => {
            synth_gaussian_mixture(*classes, *dims, *per_class, *separation, seed)?
        }
    })
}

fn make_partition(spec: &ExperimentSpec, ds: &Dataset) -> Result<Partition, CliError> {
    let n = spec.run.num_clients;
    let seed = spec.run.seed;
    Ok(match spec.partition {
        PartitionScheme::LabelShard { classes_per_client } => {
            partition_label_shard(ds, n, classes_per_client, spec.train_fraction, seed)?
        }
        PartitionScheme::Dirichlet { alpha } => {
            let opts = DirichletOptions { rebalance: spec.rebalance, ..Default::default() };
            partition_dirichlet(ds, n, alpha, spec.train_fraction, seed, &opts)?
        }
    })
}

/// Runs every repeat in memory. Data and partition use the base seed;
/// repeat `r` trains with seed `seed + r`.
pub fn run_spec(spec: &ExperimentSpec) -> Result<Vec<RunHistory>, CliError> {
    let ds = load_dataset(&spec.dataset, spec.run.seed)?;
    let partition = make_partition(spec, &ds)?;
    let model = model_by_name(&spec.model, ds.dims(), ds.num_classes(), spec.hidden)?;
    let problem = FlProblem {
        model: model.as_ref(),
        data: &ds,
        partition: &partition,
        track_global_deviation: spec.global_deviation,
    };
    (0..spec.repeats)
        .map(|r| {
            let mut cfg = spec.run.clone();
            cfg.seed = spec.run.seed.wrapping_add(r as u64);
            let method = method_by_name(&spec.method, &cfg, &spec.mirror)?;
            Ok(run(&cfg, method.as_ref(), &problem)?)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub histories: Vec<RunHistory>,
}

/// A fresh `<timestamp>` directory under `root`, suffixed `-1`, `-2`, ...
/// when the name is taken.
fn fresh_dir(root: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S").to_string();
    for k in 0.. {
        let name = if k == 0 { stamp.clone() } else { format!("{stamp}-{k}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(&dir, e)),
        }
    }
    unreachable!()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn jsonl(history: &RunHistory, repeat: usize, spec: &ExperimentSpec) -> Result<Vec<u8>, CliError> {
    let strategy = strategy_label(spec).map(|s| s.name());
    let mut out = Vec::new();
    for m in &history.rounds {
        let rec = MetricsRecord::new(m, repeat, history.seed, &spec.method, strategy);
        serde_json::to_writer(&mut out, &rec).map_err(|e| CliError::Serialize(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summary_csv(histories: &[RunHistory], spec: &ExperimentSpec) -> Result<Vec<u8>, CliError> {
    let finals: Vec<&RoundMetrics> = histories.iter().filter_map(|h| h.rounds.last()).collect();
    type Column = (&'static str, fn(&RoundMetrics) -> Option<f64>);
    let columns: [Column; 4] = [
        ("global_acc_globaltest", |m| Some(m.global_acc_globaltest)),
        ("personalized_acc_localtest", |m| Some(m.personalized_acc_localtest)),
        ("mean_local_loss", |m| Some(m.mean_local_loss)),
        ("gce", |m| m.gce),
    ];
    let mut header = vec!["method".to_string(), "strategy".into(), "repeats".into(), "rounds".into()];
    let mut row = vec![
        spec.method.clone(),
        strategy_label(spec).map_or(String::new(), |s| s.name().to_string()),
        spec.repeats.to_string(),
        spec.run.rounds.to_string(),
    ];
    for (name, get) in columns {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
        let xs: Option<Vec<f64>> = finals.iter().map(|m| get(m)).collect();
        match xs {
            Some(xs) if !xs.is_empty() => {
                let (m, s) = mean_std(&xs);
                row.push(m.to_string());
                row.push(s.to_string());
            }
            _ => row.extend([String::new(), String::new()]),
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).and_then(|_| w.write_record(&row)).map_err(|e| CliError::Serialize(e.to_string()))?;
    w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))
}

/// Runs a spec and writes, into a new subdirectory of its output dir:
/// `config.txt`, `metrics-repeat<r>.jsonl` per repeat, the concatenated
/// `metrics.jsonl`, and `summary.csv`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, CliError> {
    let histories = run_spec(spec)?;
    let dir = fresh_dir(&spec.output_dir)?;
    write_file(&dir.join("config.txt"), to_config_text(spec).as_bytes())?;
    let all_path = dir.join("metrics.jsonl");
    let file = fs::File::create(&all_path).map_err(|e| CliError::io(&all_path, e))?;
    let mut all = BufWriter::new(file);
    for (r, h) in histories.iter().enumerate() {
        let lines = jsonl(h, r, spec)?;
        write_file(&dir.join(format!("metrics-repeat{r}.jsonl")), &lines)?;
        all.write_all(&lines).map_err(|e| CliError::io(&all_path, e))?;
    }
    all.flush().map_err(|e| CliError::io(&all_path, e))?;
    write_file(&dir.join("summary.csv"), &summary_csv(&histories, spec)?)?;
    Ok(ExperimentOutput { dir, histories })
}
