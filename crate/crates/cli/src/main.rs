use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hrgm::error::{Error, ErrorKind};
use hrgm::io::RunConfig;
use hrgm::mcmc::Flavor;
use hrgm::pipeline;

const EXIT_CONFIG: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

#[derive(Parser)]
#[command(name = "hrgm", version, about = "Bayesian heterogeneous reciprocal graphical models", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: config `out`, then $HRGM_OUT_ROOT, then ./hrgm-out)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground truth
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// known: labelled groups; dm or py: unlabelled mixture
        #[arg(long)]
        flavor: Option<Flavor>,
    },
    /// Fit the joint model to data with known groups
    FitKnown {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Fit the clustering model (dm or py) to unlabelled data
    FitCluster {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        flavor: Option<Flavor>,
    },
    /// Select edges at a posterior expected FDR and write the networks
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fdr: Option<f64>,
        /// Sample files (default: every samples-*.jsonl in the output directory)
        samples: Vec<PathBuf>,
    },
    /// Score the selected networks and partition against a simulated truth
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Truth file (default: truth.json in the output directory)
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Effective sample sizes and acceptance rates
    Report {
        #[command(flatten)]
        common: Common,
        samples: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    /// Continue a chain from a checkpoint file
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn load_config(common: &Common) -> hrgm::error::Result<(RunConfig, PathBuf)> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = pipeline::output_dir(common.out.as_deref(), &cfg);
    Ok((cfg, out))
}

fn samples_or_default(given: Vec<PathBuf>, out: &Path) -> hrgm::error::Result<Vec<PathBuf>> {
    if given.is_empty() {
        pipeline::find_samples(out)
    } else {
        Ok(given)
    }
}

fn fit(mut cfg: RunConfig, out: &Path, args: FitArgs, flavor: Flavor) -> hrgm::error::Result<()> {
    if let Some(seed) = args.seed {
        cfg.chain.seed = seed;
    }
    let paths = match args.resume {
        Some(ck) => vec![pipeline::resume(&cfg, &ck, out)?],
        None => pipeline::fit(&cfg, flavor, out, args.chains.unwrap_or(cfg.chains))?,
    };
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> hrgm::error::Result<()> {
    match cli.command {
        Command::Simulate { common, seed, flavor } => {
            let (mut cfg, out) = load_config(&common)?;
            if let Some(seed) = seed {
                cfg.scenario.seed = seed;
            }
            pipeline::simulate(&cfg, flavor.unwrap_or(cfg.flavor), &out)?;
            println!("{}", out.display());
        }
        Command::FitKnown { common, fit: args } => {
            let (cfg, out) = load_config(&common)?;
            fit(cfg, &out, args, Flavor::Known)?;
        }
        Command::FitCluster { common, fit: args, flavor } => {
            let (cfg, out) = load_config(&common)?;
            let flavor = match flavor.unwrap_or(cfg.flavor) {
                Flavor::Known => Flavor::Dm,
                f => f,
            };
            fit(cfg, &out, args, flavor)?;
        }
        Command::Select { common, fdr, samples } => {
            let (cfg, out) = load_config(&common)?;
            let samples = samples_or_default(samples, &out)?;
            let summary = pipeline::select(&samples, fdr.unwrap_or(cfg.fdr), &out)?;
            println!(
                "{} edges at cutoff {} (expected FDR {:.4})",
                summary.selection.selected.len(),
                summary.selection.cutoff,
                summary.selection.expected_fdr
            );
        }
        Command::Evaluate { common, truth } => {
            let (_, out) = load_config(&common)?;
            let truth = truth.unwrap_or_else(|| out.join("truth.json"));
            let ev = pipeline::evaluate(&out, &truth)?;
            print!("{}", pipeline::evaluation_table(&ev));
        }
        Command::Report { common, samples } => {
            let (_, out) = load_config(&common)?;
            let samples = samples_or_default(samples, &out)?;
            let text = pipeline::report(&samples)?;
            let path = out.join("report.txt");
            std::fs::write(&path, &text).map_err(|e| Error::Io { path, source: e })?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Runtime => EXIT_RUNTIME,
            })
        }
    }
}
