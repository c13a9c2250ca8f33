#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{parse_window, CampaignConfig};
use output::{OutDir, Outcome};

/// Hardy-space kernel condition campaigns.
///
/// Exit codes: 0 all conditions within budget, 1 condition failure,
/// 2 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "hardy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Campaign configuration (TOML sections per campaign).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and validate a covering window; writes CSV and, in 2-D, SVG.
    Covering {
        #[command(flatten)]
        common: Common,
        /// bessel, laguerre, uniform, bessel-box, laguerre-box, bessel-laguerre-box, strip, custom
        #[arg(long)]
        family: Option<String>,
        /// `lo..hi`: index range for dyadic families, coordinates for uniform.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Run the configured condition campaigns.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Override the configured condition list (repeatable).
        #[arg(long = "condition")]
        conditions: Vec<String>,
    },
    /// Maximal-function norms of generated atoms.
    Maximal {
        #[command(flatten)]
        common: Common,
    },
    /// Localize and decompose a function read from a grid or atom file.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Closed-form checks of the subordination at nu = 1/2.
    SubordinateCheck {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Covering { common, .. }
            | Command::Verify { common, .. }
            | Command::Maximal { common }
            | Command::Decompose { common, .. }
            | Command::SubordinateCheck { common } => common,
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let common = cli.command.common().clone();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let mut cfg = CampaignConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out_dir = common
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = OutDir::create(&out_dir)?;
    match &cli.command {
        Command::Covering { family, window, .. } => {
            if let Some(f) = family {
                cfg.covering.family = f.clone();
            }
            if let Some(w) = window {
                cfg.covering.window = parse_window(w)?;
            }
            commands::covering(&cfg, &out)
        }
        Command::Verify { conditions, .. } => {
            if !conditions.is_empty() {
                cfg.verify.conditions = conditions.clone();
            }
            commands::verify(&cfg, &out)
        }
        Command::Maximal { .. } => commands::maximal(&cfg, &out),
        Command::Decompose { input, .. } => commands::decompose(&cfg, input.as_deref(), &out),
        Command::SubordinateCheck { .. } => commands::subordinate_check(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) => ExitCode::from(o.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<hardy_core::Error>(),
                    Some(hardy_core::Error::NumericalFailure { .. })
                )
            });
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}
