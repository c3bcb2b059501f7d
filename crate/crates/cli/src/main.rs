use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pfedbred_cli::{parse_config_text, resolve, run_experiment, CliError, Entry};

/// Personalized federated learning with Bregman-divergence priors.
#[derive(Parser, Debug)]
#[command(name = "pfedbred", version)]
struct Args {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_name = "IMAGES,LABELS")]
    dataset_idx: Option<String>,
    #[arg(long, value_name = "PATH")]
    dataset_csv: Option<String>,
    /// Gaussian mixture: classes, dims, examples per class, separation.
    #[arg(long, value_name = "C,D,NPC,SEP")]
    synth: Option<String>,
    /// `label_shard:K` or `dirichlet:ALPHA`.
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    train_fraction: Option<String>,
    #[arg(long)]
    rebalance: bool,
    /// pfedbred, fedavg or perfedavg_fo.
    #[arg(long)]
    method: Option<String>,
    /// vanilla, lg, meg, mh or mh_variant.
    #[arg(long)]
    strategy: Option<String>,
    /// mclr or dnn.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    mirror: Option<String>,
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long = "R")]
    r: Option<String>,
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long = "S")]
    s: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    alpha_m: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    eta_alpha: Option<String>,
    #[arg(long)]
    eta_tilde_alpha: Option<String>,
    #[arg(long)]
    eta_tilde: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    ft: bool,
    #[arg(long)]
    am: bool,
    /// Skip the per-round global-test loss deviations.
    #[arg(long)]
    no_global_deviation: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    fn entries(&self) -> Vec<Entry> {
        let valued = [
            ("dataset_idx", &self.dataset_idx),
            ("dataset_csv", &self.dataset_csv),
            ("synth", &self.synth),
            ("partition", &self.partition),
            ("train_fraction", &self.train_fraction),
            ("method", &self.method),
            ("strategy", &self.strategy),
            ("model", &self.model),
            ("hidden", &self.hidden),
            ("mirror", &self.mirror),
            ("T", &self.t),
            ("R", &self.r),
            ("K", &self.k),
            ("S", &self.s),
            ("N", &self.n),
            ("lambda", &self.lambda),
            ("alpha_m", &self.alpha_m),
            ("alpha", &self.alpha),
            ("eta", &self.eta),
            ("eta_alpha", &self.eta_alpha),
            ("eta_tilde_alpha", &self.eta_tilde_alpha),
            ("eta_tilde", &self.eta_tilde),
            ("beta", &self.beta),
            ("batch", &self.batch),
            ("seed", &self.seed),
            ("repeats", &self.repeats),
        ];
        let mut out: Vec<Entry> = valued
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| Entry { key: k.into(), value: v.clone() }))
            .collect();
        for (k, on) in [("rebalance", self.rebalance), ("ft", self.ft), ("am", self.am)] {
            if on {
                out.push(Entry { key: k.into(), value: "true".into() });
            }
        }
        if self.no_global_deviation {
            out.push(Entry { key: "global_deviation".into(), value: "false".into() });
        }
        if let Some(dir) = &self.out {
            out.push(Entry { key: "out".into(), value: dir.display().to_string() });
        }
        out
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("PFB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config("PFB_THREADS", format!("expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config("PFB_THREADS", e.to_string()))
}

fn main_inner(args: Args) -> Result<(), CliError> {
    configure_threads()?;
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    let spec = resolve(&file, &args.entries())?;
    let out = run_experiment(&spec)?;
    println!("{}", out.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
