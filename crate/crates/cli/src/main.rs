use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use manet_core::error::{Error, TraceError};
use manet_core::experiment::{compare_to_dir, run_phase};
use manet_core::metrics::{bucketed_throughput, write_csv, Phase};
use manet_core::trace::Trace;
use manet_core::{Scenario, SimDuration};

#[derive(Parser)]
#[command(
    name = "manet-sim",
    version,
    about = "AODV MANET simulator with black hole attack and detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single phase and write its trace and metrics CSV
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// baseline, attack or defend
        #[arg(long)]
        phase: Phase,
        /// Overrides the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run baseline, attack and defend with the same seed and compare them
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the metrics CSV from a trace file
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
        bucket_ms: u64,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Error> {
    let mut sc = Scenario::load(path)?;
    if let Some(seed) = seed {
        sc.seed = seed;
    }
    Ok(sc)
}

fn run(cli: Cli) -> Result<bool, Error> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let stdout_err = |source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    match cli.command {
        Command::Simulate {
            scenario,
            phase,
            seed,
            out: dir,
        } => {
            let sc = load(&scenario, seed)?;
            let run = run_phase(&sc, phase, &dir)?;
            let r = &run.report;
            writeln!(
                out,
                "{phase}: sent={} received={} absorbed={} no_route={} other_drops={} in_flight={} energy_j={:.3} detects={}",
                r.sent,
                r.received,
                r.absorbed,
                r.no_route_drops,
                r.other_drops,
                r.in_flight,
                r.energy_total_j(),
                r.detects
            )
            .map_err(stdout_err)?;
            Ok(true)
        }
        Command::Compare {
            scenario,
            seed,
            out: dir,
        } => {
            let sc = load(&scenario, seed)?;
            let summary = compare_to_dir(&sc, &dir)?;
            write!(out, "{summary}").map_err(stdout_err)?;
            Ok(summary.all_passed())
        }
        Command::Analyze { trace, bucket_ms } => {
            let file = File::open(&trace).map_err(|source| Error::Io {
                path: trace.clone(),
                source,
            })?;
            let parsed = Trace::parse(BufReader::new(file)).map_err(|e| match e {
                TraceError::Sink(source) => Error::Io { path: trace, source },
                other => Error::Trace(other),
            })?;
            let buckets = bucketed_throughput(&parsed, SimDuration::from_millis(bucket_ms))?;
            write_csv(&buckets, &mut out).map_err(stdout_err)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("manet-sim: comparison checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("manet-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
