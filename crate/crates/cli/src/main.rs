mod commands;
mod config;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use pathgeo::netgraph::{NetJson, DEFAULT_PATH_CAP};
use pathgeo::optim::Method;
use pathgeo::ParamVector;
use serde_json::Value;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pathgeo", version, about = "Path-norm optimization and complexity-measure experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Config file plus flag overrides. Flags mirror config keys.
#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (`seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (`out_dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// `train.epochs`
    #[arg(long)]
    epochs: Option<usize>,
    /// `train.batch_size`
    #[arg(long)]
    batch_size: Option<usize>,
    /// `train.optimizer.lr`
    #[arg(long)]
    lr: Option<f64>,
    /// `train.optimizer.method`: sgd, path_sgd, ddp_sgd, ddp_norm or diag_ng.
    #[arg(long)]
    method: Option<String>,
    /// `train.optimizer.alpha`
    #[arg(long)]
    alpha: Option<f64>,
    /// `train.optimizer.momentum`
    #[arg(long)]
    momentum: Option<f64>,
    /// Any other key, as `dotted.path=json-value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, Value)>> {
        let mut o = Vec::new();
        let mut put = |k: &str, v: Value| o.push((k.to_string(), v));
        if let Some(v) = self.seed {
            put("seed", v.into());
        }
        if let Some(v) = &self.out_dir {
            put("out_dir", v.to_string_lossy().into_owned().into());
        }
        if let Some(v) = self.epochs {
            put("train.epochs", v.into());
        }
        if let Some(v) = self.batch_size {
            put("train.batch_size", v.into());
        }
        if let Some(v) = self.lr {
            put("train.optimizer.lr", v.into());
        }
        if let Some(v) = &self.method {
            put("train.optimizer.method", v.clone().into());
        }
        if let Some(v) = self.alpha {
            put("train.optimizer.alpha", v.into());
        }
        if let Some(v) = self.momentum {
            put("train.optimizer.momentum", v.into());
        }
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {s:?}"))?;
            o.push((k.to_string(), config::parse_value(v)));
        }
        Ok(o)
    }

    fn load(&self) -> Result<config::Resolved> {
        config::load(&self.config, &self.overrides()?)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a net; writes metrics.csv, weights.pgw, state.json, net.json and config.json.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Continue from a state.json written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Complexity report (report.json) and PAC-Bayes curve (pac_bayes.csv) for trained weights.
    Measure {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        weights: PathBuf,
        /// Net description; defaults to the config's net.
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Checks function and path-norm invariance under random rescalings and balancing.
    InvarianceCheck {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        probes: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compares dynamic-programming κ and path regularizer against path enumeration.
    KappaAudit {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
        path_cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains one net per hidden width and seed; writes sweep_hidden.csv.
    SweepHidden {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        hidden: Vec<usize>,
        /// Seeds to average over; defaults to the master seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Addition-problem runs per sequence length and method; writes addition_bench.csv.
    AdditionBench {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "steps-list", value_delimiter = ',', required = true)]
        steps_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "sgd,path_sgd")]
        methods: Vec<String>,
    },
}

fn parse_method(s: &str) -> Result<Method> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| anyhow!("unknown method {s:?}"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Train { cfg, resume } => {
            commands::train(&cfg.load()?, commands::TrainArgs { resume })?;
            Ok(true)
        }
        Cmd::Measure { cfg, weights, net } => {
            commands::measure(&cfg.load()?, net.as_deref(), &weights)?;
            Ok(true)
        }
        Cmd::InvarianceCheck { net, weights, seed, probes, out } => {
            let net = NetJson::load(&net)?;
            let theta = ParamVector::load(&weights)?;
            let report = commands::invariance_checks(&net, &theta, seed, probes)?;
            commands::write_check_report(out.as_deref(), None, &report)?;
            Ok(report.passed)
        }
        Cmd::KappaAudit { net, weights, path_cap, out } => {
            let net = NetJson::load(&net)?;
            let theta = ParamVector::load(&weights)?;
            let report = commands::kappa_checks(&net, &theta, path_cap)?;
            commands::write_check_report(out.as_deref(), None, &report)?;
            Ok(report.passed)
        }
        Cmd::SweepHidden { cfg, hidden, seeds } => {
            let r = cfg.load()?;
            let seeds = if seeds.is_empty() { vec![r.cfg.seed] } else { seeds };
            commands::sweep_hidden(&r, &hidden, &seeds)?;
            Ok(true)
        }
        Cmd::AdditionBench { cfg, steps_list, methods } => {
            let methods = methods.iter().map(|m| parse_method(m)).collect::<Result<Vec<_>>>()?;
            commands::addition_bench(&cfg.load()?, &steps_list, &methods)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
