use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use a2l::experiment::{cluster_once, report_from_dir, run_experiment, score_once, ExperimentSpec};
use a2l::Error;
use clap::{Args, Parser, Subcommand};

/// Active learning with model-aware redundancy elimination.
#[derive(Parser)]
#[command(name = "a2l", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "A2L_OUT_DIR")]
    out: Option<PathBuf>,
    /// Suppress the printed summary.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method for every seed and write logs, curve and summary.
    Run(Common),
    /// Score the pool (or attention records) once and write scores.csv.
    Score(Common),
    /// Deduplicate the selected rows of a scores file and write clusters.csv.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Scores file produced by `score`.
        #[arg(long)]
        scores: PathBuf,
    },
    /// Rebuild curve.csv and summary.csv from the run logs in a directory.
    Report {
        #[arg(long, env = "A2L_OUT_DIR")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn load(common: &Common) -> a2l::Result<(ExperimentSpec, PathBuf)> {
    let mut spec = ExperimentSpec::load(&common.spec)?;
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| spec.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("a2l-out"));
    Ok((spec, out))
}

fn write(dir: &Path, name: &str, text: &str) -> a2l::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

fn execute(cli: Cli) -> a2l::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let (spec, out) = load(&common)?;
            let outcome = run_experiment(&spec, Some(&out))?;
            if !common.quiet {
                print!("{}", outcome.summary_csv);
                println!("wrote {}", out.display());
            }
        }
        Command::Score(common) => {
            let (spec, out) = load(&common)?;
            let path = write(&out, "scores.csv", &score_once(&spec)?)?;
            if !common.quiet {
                println!("wrote {}", path.display());
            }
        }
        Command::Cluster { common, scores } => {
            let (spec, out) = load(&common)?;
            let text = fs::read_to_string(&scores)
                .map_err(|e| Error::Validation(format!("cannot read {}: {e}", scores.display())))?;
            let path = write(&out, "clusters.csv", &cluster_once(&spec, &text)?)?;
            if !common.quiet {
                println!("wrote {}", path.display());
            }
        }
        Command::Report { out, quiet } => {
            let (_, summary) = report_from_dir(&out)?;
            if !quiet {
                print!("{summary}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation(_) | Error::InvalidConfig(_) | Error::Parse(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
