use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use apfl::harness::{diagnose_run, gen_data, load_config, personalize_run, run_to_dir};
use apfl::{Error, Execution, Result};

#[derive(Parser)]
#[command(name = "apfl", version, about = "Adaptive personalized federated learning simulator")]
struct Cli {
    /// Worker threads for client-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics.csv, provenance.json and models.bin.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the diversity report of a saved run as JSON.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
    },
    /// Adapt a saved global model to a new client's CSV data.
    Personalize {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the configured dataset as one CSV file per client.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    let exec = Execution::Parallel;
    match command {
        Command::Run { config, out } => {
            let config = load_config(&config)?;
            let result = run_to_dir(&config, &out, exec)?;
            if let Some(last) = result.rows.last() {
                eprintln!(
                    "round {} pers_val_acc {:.4} global_val_acc {:.4}",
                    last.round, last.pers_val_acc, last.global_val_acc
                );
            }
            Ok(())
        }
        Command::Diagnose { run } => print_json(&diagnose_run(&run, exec)?),
        Command::Personalize {
            run,
            csv,
            alpha,
            epochs,
            lr,
            out,
        } => print_json(&personalize_run(&run, &csv, alpha, epochs, lr, &out)?),
        Command::GenData { config, out } => {
            let config = load_config(&config)?;
            let files = gen_data(&config, &out)?;
            eprintln!("wrote {} client files to {}", files.len(), out.display());
            Ok(())
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads(threads: Option<usize>, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads(_threads: Option<usize>, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    f()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_threads(cli.threads, || dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.kind());
            match e {
                Error::Config(_) | Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
