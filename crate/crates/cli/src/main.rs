//! `cnnsense`: seeded experiment runner. Every run writes a directory with
//! the resolved `config.json`, a `report.json` and CSV series.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use config::{merge, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "cnnsense", version, about = "Model-RIP and reconstruction experiments for random convolutional layers")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Empirical model-RIP, WW^T ratio and one-pass reconstruction error for 1-d filters.
    #[command(name = "rip-1d")]
    Rip1d(Flags),
    /// Empirical model-RIP for 2-d filters with region-sparse codes.
    #[command(name = "rip-2d")]
    Rip2d(Flags),
    /// Sparse activation recovery from a planted code or an input file.
    Recover(Flags),
    /// Mutual coherence of a random or imported filter bank.
    Coherence(Flags),
    /// Multi-iteration model IHT residuals.
    Iht(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    dump_config: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    region_fraction: Option<f64>,
    /// Spatial dimensionality of the filters (1 or 2).
    #[arg(long)]
    dims: Option<u8>,
    #[arg(long)]
    num_filters: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    filter_len: Option<usize>,
    #[arg(long)]
    input_len: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    normalize: Option<bool>,
    /// MRIPFB1 filter-bank file.
    #[arg(long)]
    filters: Option<PathBuf>,
    /// Pooling region size; 0 pools over whole blocks.
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long, value_parser = ["naive", "switches"])]
    upsampling: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    iht_iters: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lasso_iters: Option<usize>,
    /// Input vector file for `recover` (whitespace-separated floats).
    #[arg(long)]
    input: Option<PathBuf>,
}

impl Flags {
    /// The flags that were given, as a config patch.
    fn patch(&self) -> Value {
        let mut top = Map::new();
        let mut op = Map::new();
        let mut iht = Map::new();
        let mut lasso = Map::new();
        let put = |m: &mut Map<String, Value>, key: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(key.into(), v);
            }
        };
        put(&mut top, "seed", self.seed.map(|v| json!(v)));
        put(&mut top, "out", self.out.as_ref().map(|v| json!(v)));
        put(&mut top, "trials", self.trials.map(|v| json!(v)));
        put(&mut top, "k", self.k.map(|v| json!(v)));
        put(&mut top, "region_fraction", self.region_fraction.map(|v| json!(v)));
        put(&mut top, "upsampling", self.upsampling.as_ref().map(|v| json!(v)));
        put(&mut top, "bins", self.bins.map(|v| json!(v)));
        put(&mut top, "input", self.input.as_ref().map(|v| json!(v)));
        put(
            &mut top,
            "pooling",
            self.pool_size.map(|p| match p {
                0 => json!({"mode": "full_block"}),
                p => json!({"mode": "regions", "size": p}),
            }),
        );
        put(&mut op, "dims", self.dims.map(|v| json!(v)));
        put(&mut op, "filters", self.num_filters.map(|v| json!(v)));
        put(&mut op, "channels", self.channels.map(|v| json!(v)));
        put(&mut op, "filter_len", self.filter_len.map(|v| json!(v)));
        put(&mut op, "input_len", self.input_len.map(|v| json!(v)));
        put(&mut op, "stride", self.stride.map(|v| json!(v)));
        put(&mut op, "normalize", self.normalize.map(|v| json!(v)));
        put(&mut op, "filters_path", self.filters.as_ref().map(|v| json!(v)));
        put(&mut iht, "max_iters", self.iht_iters.map(|v| json!(v)));
        put(&mut lasso, "lambda", self.lambda.map(|v| json!(v)));
        put(&mut lasso, "max_iters", self.lasso_iters.map(|v| json!(v)));
        for (key, m) in [("operator", op), ("iht", iht), ("lasso", lasso)] {
            if !m.is_empty() {
                top.insert(key.into(), Value::Object(m));
            }
        }
        Value::Object(top)
    }
}

/// Exit status 2: the configuration is unusable.
pub struct ConfigError(pub anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.into())
    }
}

fn resolve(command: Command, flags: &Flags) -> Result<ExperimentConfig, ConfigError> {
    let mut value = serde_json::to_value(ExperimentConfig::defaults(command))?;
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let file: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if !file.is_object() {
            return Err(anyhow!("config must be a JSON object").into());
        }
        if let Some(c) = file.get("command") {
            if c != &json!(command.to_string()) {
                return Err(anyhow!("config is for command {c}, not {command}").into());
            }
        }
        merge(&mut value, file);
    }
    merge(&mut value, flags.patch());
    Ok(serde_json::from_value(value).context("invalid config")?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Sub::Rip1d(f) => (Command::Rip1d, f),
        Sub::Rip2d(f) => (Command::Rip2d, f),
        Sub::Recover(f) => (Command::Recover, f),
        Sub::Coherence(f) => (Command::Coherence, f),
        Sub::Iht(f) => (Command::Iht, f),
    };
    let prepared = resolve(command, flags).and_then(|cfg| run::prepare(cfg, !flags.dump_config));
    let prepared = match prepared {
        Ok(p) => p,
        Err(ConfigError(e)) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if flags.dump_config {
        match serde_json::to_string_pretty(&prepared.config) {
            Ok(text) => {
                println!("{text}");
                return ExitCode::SUCCESS;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    }
    match run::execute(&prepared) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
