use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swipt_harness::config::{ExperimentConfig, Mode};
use swipt_harness::emit::{write_csv, write_json};
use swipt_harness::experiment::run_experiment;

/// Precoder experiments for SWIPT cognitive-radio downlinks.
#[derive(Parser)]
#[command(name = "swipt-sim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Boundary of the harvested-energy region over a simplex of weights.
    EnergyRegion(Common),
    /// Run the configured methods once per trial (and sweep point).
    Solve(Common),
    /// Rate against energy threshold.
    Tradeoff(Common),
    /// Objective value per iteration.
    Convergence(Common),
    /// Utilities and baselines side by side.
    Compare(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trial-level parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the number of multi-start initializations.
    #[arg(long)]
    ng: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.cmd {
        Cmd::EnergyRegion(a) => (Mode::EnergyRegion, a),
        Cmd::Solve(a) => (Mode::Solve, a),
        Cmd::Tradeoff(a) => (Mode::Tradeoff, a),
        Cmd::Convergence(a) => (Mode::Convergence, a),
        Cmd::Compare(a) => (Mode::Compare, a),
    };
    match run(mode, &args) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("swipt-sim: {n} solve(s) failed or ended infeasible");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("swipt-sim: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(mode: Mode, args: &Common) -> Result<usize, Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    match cfg.mode {
        Some(m) if m != mode => {
            return Err(format!("config mode is {} but the subcommand is {}", m.as_str(), mode.as_str()).into())
        }
        _ => cfg.mode = Some(mode),
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.ng {
        cfg.n_g = n;
    }
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let res = run_experiment(&cfg)?;
    let target = args.out.as_ref().map_or("stdout".to_string(), |p| p.display().to_string());
    let context = |e: &dyn std::fmt::Display| format!("{target}: {e}");
    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(File::create(p).map_err(|e| context(&e))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match args.format {
        Format::Csv => write_csv(&res.rows, &mut sink).map_err(|e| context(&e))?,
        Format::Json => write_json(&res, &mut sink).map_err(|e| context(&e))?,
    }
    sink.flush().map_err(|e| context(&e))?;
    Ok(res.failures())
}
