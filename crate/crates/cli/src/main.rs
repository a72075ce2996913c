//! `medfit` command line: synthetic data generation, GA runs for the four
//! approaches, run reports and learnt-curve extraction.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 incomplete
//! run, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use medfit::data::write_csv;
use medfit::harness::{
    extract_and_plot, report, run_approach, ApproachId, ApproachSpec, DataSource, RunConfigFile,
};

#[derive(Parser)]
#[command(
    name = "medfit",
    version,
    about = "Evolutionary hyperparameter search for regression MLPs, \
             with fit-to-median regularisation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic heteroscedastic dataset CSV.
    GenerateData {
        /// JSON config file; its `synthetic` section drives the generator.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one GA approach end-to-end into a run directory.
    Run {
        /// ga-i | ga-ii | ga-iii | ga-iv
        #[arg(long)]
        approach: String,
        /// JSON config file (ga / training / synthetic sections).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Input CSV; omitted means synthetic data from the config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Master seed; reruns with the same seed and config are
        /// bit-identical.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Evaluation worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Summarise a completed run (writes report.csv / report.txt).
    Report {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Extract learnt curves for the best Pareto networks of a run.
    ExtractCurves {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        /// Input variable to sweep (e.g. speed_through_water).
        #[arg(long)]
        variable: String,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &medfit::Error) -> u8 {
    match err {
        medfit::Error::Config(_) => 2,
        medfit::Error::Data(_) => 3,
        medfit::Error::IncompleteRun { .. } => 4,
        _ => 1,
    }
}

fn load_config(path: &Option<PathBuf>) -> medfit::Result<RunConfigFile> {
    match path {
        Some(p) => RunConfigFile::load(p),
        None => Ok(RunConfigFile::default()),
    }
}

fn dispatch(command: Command) -> medfit::Result<()> {
    match command {
        Command::GenerateData { config, out } => {
            let config = load_config(&config)?;
            let records = medfit::data::generate_synthetic(&config.synthetic)?;
            write_csv(&out, &records)?;
            println!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
        Command::Run {
            approach,
            config,
            data,
            seed,
            out,
            workers,
        } => {
            let id: ApproachId = approach.parse()?;
            let spec = ApproachSpec::for_id(id);
            let config = load_config(&config)?;
            let source = match data {
                Some(path) => DataSource::Csv { path },
                None => DataSource::Synthetic {
                    config: config.synthetic.clone(),
                },
            };
            let started = std::time::Instant::now();
            let manifest = run_approach(&spec, &config, &source, seed, &out, workers)?;
            println!(
                "{} finished in {:.1}s: {} Pareto models in {}",
                id,
                started.elapsed().as_secs_f64(),
                manifest.n_pareto_models,
                out.display()
            );
            Ok(())
        }
        Command::Report { run, top_k } => {
            report(&run, top_k)?;
            let text = std::fs::read_to_string(run.join(medfit::harness::artifact::REPORT_TXT))?;
            print!("{text}");
            Ok(())
        }
        Command::ExtractCurves {
            run,
            variable,
            top_k,
        } => {
            let outcome = extract_and_plot(&run, &variable, top_k)?;
            println!("curves: {}", outcome.curves_csv.display());
            if let Some(spread) = &outcome.spread_csv {
                println!("spread: {}", spread.display());
            }
            if let Some(avg) = outcome.average_spread {
                println!("average spread: {avg:.3}%");
            }
            println!("chart:  {}", outcome.svg.display());
            Ok(())
        }
    }
}
