//! `sinkmatch`: optimal-transport similarity between embedding fragment sets.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed input, 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sinkmatch_core::{Error, LogDomain, MarginKind, Method, RunConfig};

pub const THREADS_ENV: &str = "SINKMATCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sinkmatch", version, about = "Set similarity via entropic optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one transport problem from a cost-matrix CSV (uniform margins) and print the plan as JSON.
    Solve {
        cost: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Score every image against every caption; writes a similarity CSV and a metadata JSON.
    Sim {
        images: PathBuf,
        captions: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Recall@K report for a similarity CSV against JSONL ground truth.
    Eval {
        sims: PathBuf,
        truth: PathBuf,
        /// Metadata JSON written by `sim`; supplies row and column ids (default: indices).
        #[arg(long)]
        meta: Option<PathBuf>,
        #[command(flatten)]
        opts: Options,
    },
    /// Wall-clock timing of several methods over the full cross product.
    Bench {
        images: PathBuf,
        captions: PathBuf,
        /// Methods to time, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![Method::Vse, Method::Cam, Method::Omit])]
        methods: Vec<Method>,
        #[command(flatten)]
        opts: Options,
    },
}

/// Solver and scoring flags shared by every subcommand. Unset flags take the
/// library defaults.
#[derive(Debug, Clone, Args)]
struct Options {
    /// Entropic regularization weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Triplet-loss margin.
    #[arg(long)]
    phi: Option<f64>,
    /// Dustbin cost scale.
    #[arg(long)]
    tau: Option<f64>,
    /// Maximum Sinkhorn sweeps.
    #[arg(long)]
    iters: Option<usize>,
    /// Relative-change convergence tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// Fragment margins: uni, intra, inter or norm.
    #[arg(long)]
    margins: Option<MarginKind>,
    /// Similarity method: omit, omit-naive, vse, cam or pem.
    #[arg(long)]
    method: Option<Method>,
    /// Dustbin partial matching for `omit`: on or off.
    #[arg(long, value_parser = parse_switch)]
    partial: Option<bool>,
    /// Log-domain iterations: auto, on or off.
    #[arg(long = "log-domain")]
    log_domain: Option<LogDomain>,
    /// Use the exact transport oracle instead of Sinkhorn (`solve` only).
    #[arg(long)]
    oracle: bool,
    /// Worker threads for batch scoring; the SINKMATCH_THREADS variable takes precedence.
    #[arg(long)]
    threads: Option<usize>,
    /// Write the primary output here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected `on` or `off`, got `{other}`")),
    }
}

impl Options {
    fn run_config(&self) -> RunConfig {
        let d = RunConfig::default();
        RunConfig {
            lambda: self.lambda.unwrap_or(d.lambda),
            margin_phi: self.phi.unwrap_or(d.margin_phi),
            tau: self.tau.unwrap_or(d.tau),
            iterations: self.iters.unwrap_or(d.iterations),
            eps: self.eps.unwrap_or(d.eps),
            margins: self.margins.unwrap_or(d.margins),
            method: self.method.unwrap_or(d.method),
            partial: self.partial.unwrap_or(d.partial),
            log_domain: self.log_domain.unwrap_or(d.log_domain),
            ..d
        }
    }

    /// Thread count: the environment variable, then `--threads`, then rayon's default.
    fn threads(&self) -> Result<Option<usize>, Failure> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(Failure::usage(format!(
                    "{THREADS_ENV} must be a positive integer, got `{v}`"
                ))),
            },
            Err(_) => match self.threads {
                Some(0) => Err(Failure::usage("--threads must be positive")),
                n => Ok(n),
            },
        }
    }
}

/// A failed run: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub const USAGE: u8 = 1;
    pub const FORMAT: u8 = 2;
    pub const NUMERICAL: u8 = 3;

    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: Self::USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err.root() {
            Error::NumericalUnderflow(_) => Failure::NUMERICAL,
            Error::UnsupportedSize { .. } => Failure::USAGE,
            _ => Failure::FORMAT,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let opts = match &cli.command {
        Command::Solve { opts, .. }
        | Command::Sim { opts, .. }
        | Command::Eval { opts, .. }
        | Command::Bench { opts, .. } => opts,
    };
    let cfg = opts.run_config();
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::usage(e.to_string()))?;
    let output = opts.output.as_deref();
    pool.install(|| match &cli.command {
        Command::Solve { cost, opts } => commands::solve(cost, &cfg, opts.oracle, output),
        Command::Sim { images, captions, .. } => commands::sim(images, captions, &cfg, output),
        Command::Eval { sims, truth, meta, .. } => commands::eval(sims, truth, meta.as_deref(), &cfg, output),
        Command::Bench {
            images,
            captions,
            methods,
            ..
        } => commands::bench(images, captions, methods, &cfg, output),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(Failure::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
