use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serow_core::evaluation::{DEFAULT_SEEDS, DEFAULT_SWEEP_KS};
use serow_store::export::{ExportFormat, ExportKind};

#[derive(Parser)]
#[command(name = "serow", version, about = "Conservation news monitoring with LLM classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch a date window from every configured source and filter it.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        from: NaiveDate,
        #[arg(long)]
        to: NaiveDate,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a reproducible labeling sample from a batch.
    Sample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over a batch and write verdicts.
    Classify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predictions or verdicts file against gold labels.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// All eight switch combinations, averaged over seeds.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
        seeds: Vec<u64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Metrics as a function of the number of demonstrations.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_KS)]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
        seeds: Vec<u64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serve the review API.
    Serve {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = serow_store::ENV_API_TOKEN, hide_env_values = true)]
        token: Option<String>,
    },
    /// Run one week of the deployment loop.
    Weekly {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Dump stored predictions, feedback or a demonstration pool.
    Export {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        what: ExportKind,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        #[arg(long)]
        run: Option<String>,
        #[arg(long)]
        language: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weekly deployment metrics over expert-labeled predictions.
    Report {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        language: Option<String>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let say = |s: String| println!("{}", s.trim_end());
    // Commands that may write records to stdout report on stderr instead.
    let note = |s: String| eprintln!("{s}");
    match cli.command {
        Command::Ingest { config, from, to, out } => {
            let s = serow_cli::ingest(&config, from, to, out.as_deref())?;
            if out.is_some() { say(s) } else { note(s) }
        }
        Command::Sample { input, n, seed, out } => {
            let s = serow_cli::sample(&input, n, seed, out.as_deref())?;
            if out.is_some() { say(s) } else { note(s) }
        }
        Command::Classify { input, pool, config, out } => {
            let s = serow_cli::classify(&config, &pool, &input, out.as_deref())?;
            if out.is_some() { say(s) } else { note(s) }
        }
        Command::Eval { gold, pred } => say(serow_cli::eval(&gold, &pred)?),
        Command::Ablate { dataset, pool, config, seeds, csv } => {
            say(serow_cli::ablate(&config, &dataset, &pool, &seeds, csv.as_deref())?)
        }
        Command::Sweep { dataset, pool, config, ks, seeds, csv } => {
            say(serow_cli::sweep(&config, &dataset, &pool, &ks, &seeds, csv.as_deref())?)
        }
        Command::Serve { db, port, host, token } => serow_cli::serve(&db, &host, port, token)?,
        Command::Weekly { config, db } => say(serow_cli::weekly(&config, db.as_deref())?),
        Command::Export { db, what, format, run, language, out } => {
            let n = serow_cli::export(&db, what, format, run.as_deref(), language.as_deref(), out.as_deref())?;
            note(format!("exported {n} records"));
        }
        Command::Report { db, language } => say(serow_cli::report(&db, language.as_deref())?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
