use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semfocus::{evaluate, metrology, restore, run_benchmark, simulate, CliError, Method, PipelineConfig};

#[derive(Parser)]
#[command(name = "semfocus", version, about = "Simulate, restore and measure defocused SEM images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restoration method; `restore` requires it, `evaluate` and `metrology`
    /// restrict themselves to it.
    #[arg(long, global = true, value_enum)]
    method: Option<Method>,
}

#[derive(Subcommand)]
enum Command {
    /// Degrade the clean inputs with the forward model.
    Simulate,
    /// Restore the simulated images with one method.
    Restore,
    /// Score test sets against their references (PSNR, SSIM, losses).
    Evaluate,
    /// Measure CD, LWR, LER and LWR spectra, and compare against references.
    Metrology,
    /// Run every stage.
    Benchmark,
}

fn load(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run(command: Command, common: Common) -> Result<(), CliError> {
    let config = load(&common)?;
    match command {
        Command::Simulate => {
            let m = simulate::run_simulate(&config)?;
            println!("simulated {} images", m.entries.len());
        }
        Command::Restore => {
            let method = common
                .method
                .ok_or_else(|| CliError::Config("restore needs --method".into()))?;
            let m = restore::run_restore(&config, method)?;
            println!("restored {} images with {}", m.entries.len(), method.name());
        }
        Command::Evaluate => {
            for s in evaluate::run_evaluate(&config, common.method)? {
                println!(
                    "{}: {}/{} paired, psnr {}, ssim {}",
                    s.set,
                    s.paired,
                    s.pairs,
                    s.psnr.map_or("-".into(), |v| format!("{v:.3}")),
                    s.ssim.map_or("-".into(), |v| format!("{v:.4}")),
                );
            }
        }
        Command::Metrology => {
            for c in metrology::run_metrology(&config, common.method)? {
                let s = &c.summary;
                println!(
                    "{}: CD(MAE) {}, Avg(MAE) {}, {} excluded",
                    c.set,
                    s.cd_mae.map_or("-".into(), |v| format!("{v:.4}")),
                    s.avg_mae.map_or("-".into(), |v| format!("{v:.4}")),
                    s.excluded.len()
                );
            }
        }
        Command::Benchmark => {
            run_benchmark(&config)?;
            println!("benchmark written to {}", config.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semfocus: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
