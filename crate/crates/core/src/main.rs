use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mlmc_adequacy::config::{load_config, ClockKind, ExperimentConfig, OUTPUT_DIR_ENV};
use mlmc_adequacy::experiment::{run_experiment, table_records, TABLE_HEADER};
use mlmc_adequacy::Error;

/// Resource-adequacy assessment with multilevel Monte Carlo and actively
/// learned surrogates.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment and write the report files.
    Run(Options),
    /// Check a configuration without running it and print the resolved parameters.
    Validate(Options),
}

#[derive(Args)]
struct Options {
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; takes precedence over the environment and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Account time with the synthetic cost model instead of the wall clock.
    #[arg(long)]
    deterministic_clock: bool,
}

impl Options {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.output_dir = dir.into();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if self.deterministic_clock {
            cfg.clock = ClockKind::Synthetic;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(opts: &Options) -> Result<(), Error> {
    if let Some(n) = opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    let cfg = opts.load()?;
    let out = cfg.output_dir.clone();
    let start = std::time::Instant::now();
    let report = run_experiment(cfg, &mut |msg| {
        eprintln!("[{:>7.1}s] {msg}", start.elapsed().as_secs_f64())
    })?;
    let widths: Vec<usize> = (0..TABLE_HEADER.len())
        .map(|c| {
            table_records(&report.table)
                .iter()
                .map(|r| r[c].chars().count())
                .chain([TABLE_HEADER[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(TABLE_HEADER.iter().map(|s| s.to_string()).collect()));
    for r in table_records(&report.table) {
        println!("{}", line(r.to_vec()));
    }
    println!("reports written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(opts) => run(opts),
        Command::Validate(opts) => opts.load().map(|cfg| {
            println!("OK");
            print!("{}", cfg.to_toml());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
