use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use entropic_ood_cli::config::ExperimentConfig;
use entropic_ood_cli::{pipeline, CliError};

/// Entropic losses for out-of-distribution detection: synthetic data,
/// training, detection/calibration evaluation, ablations and plots.
#[derive(Parser)]
#[command(name = "entropic-ood", version, about)]
struct Cli {
    /// Path to the experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides config.output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override (overrides config.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset CSVs into the run directory.
    Generate,
    /// Train the configured head (plus a softmax baseline) and write the checkpoint.
    Train,
    /// Evaluate every checkpointed model; writes report.csv and report.txt.
    Eval,
    /// Temperature-calibrate every checkpointed model on the stored validation split.
    Calibrate,
    /// Train one model per entropic scale and tabulate entropy/accuracy/AUROC.
    AblateEs {
        /// Comma-separated entropic scale values.
        #[arg(long, default_value = "1,3,10", value_delimiter = ',')]
        es_values: Vec<f64>,
    },
    /// Render score histograms and reliability diagrams as SVG.
    Plot,
    /// Full pipeline: generate, train, calibrate, eval, plot.
    Run,
    /// Run the full pipeline across consecutive seeds (parallel workers;
    /// cap with ENTROPIC_OOD_THREADS) and write sweep_summary.csv.
    Sweep {
        /// Number of consecutive seeds, starting at the configured seed.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Also render plots for every seed.
        #[arg(long, default_value_t = false)]
        plots: bool,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    let out = config.output_dir.clone();
    match cli.command {
        Command::Generate => {
            let files = pipeline::cmd_generate(&config, &out)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Train => {
            pipeline::cmd_train(&config, &out)?;
            println!("{}", out.join("checkpoint.json").display());
        }
        Command::Eval => {
            let report = pipeline::cmd_eval(&config, &out)?;
            print!("{}", entropic_ood_core::report::report_to_text(&report));
        }
        Command::Calibrate => {
            let results = pipeline::cmd_calibrate(&config, &out)?;
            for (name, r) in results {
                println!(
                    "{name}: T* = {:.4}, ECE {:.4} -> {:.4} ({} evaluations)",
                    r.temperature, r.ece_before, r.ece_after, r.evaluations
                );
            }
        }
        Command::AblateEs { es_values } => {
            let rows = pipeline::cmd_ablate_es(&config, &out, &es_values)?;
            println!("entropic_scale  mean_entropy  accuracy  auroc");
            for row in rows {
                println!(
                    "{:>14}  {:>12.4}  {:>8.4}  {:>5.4}",
                    row.entropic_scale,
                    row.mean_inference_entropy,
                    row.test_accuracy,
                    row.auroc_first_ood
                );
            }
        }
        Command::Plot => {
            let files = pipeline::cmd_plot(&config, &out)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Run => {
            let report = pipeline::cmd_run(&config, &out)?;
            print!("{}", entropic_ood_core::report::report_to_text(&report));
        }
        Command::Sweep { seeds, plots } => {
            let summary = pipeline::cmd_sweep(&config, &out, seeds, plots)?;
            print!("{}", summary.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
