use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nonneg_factory::{registry, run, ExperimentSpec};

/// Nonnegative unbiased estimators: experiment runner.
#[derive(Parser)]
#[command(name = "nonneg-factory", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file (or a shipped experiment by name).
    Run {
        spec: String,
        /// Output directory for the summary JSON and samples CSV.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the replication count.
        #[arg(long)]
        reps: Option<u64>,
        /// Override the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List shipped experiments.
    List,
    /// Show a shipped experiment and its construction.
    Describe { name: String },
}

fn load(spec: &str) -> anyhow::Result<ExperimentSpec> {
    let path = Path::new(spec);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(ExperimentSpec::from_json(&text, &path.display().to_string())?)
    } else {
        Ok(registry::lookup(spec)?)
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("NONNEG_FACTORY_THREADS") {
        let n: usize = v.parse().with_context(|| format!("NONNEG_FACTORY_THREADS={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for name in registry::names() {
                let spec = registry::lookup(name)?;
                println!("{name:<28} {}", spec.kind.as_str());
            }
        }
        Command::Describe { name } => print!("{}", registry::describe(&name)?),
        Command::Run { spec, out, reps, seed } => {
            configure_threads()?;
            let mut spec = load(&spec)?;
            if let Some(r) = reps {
                spec.reps = r;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let outcome = run(&spec).with_context(|| format!("experiment `{}`", spec.name))?;
            let (summary_path, samples_path) = outcome.write(&out)?;
            let s = &outcome.summary;
            println!(
                "{}: estimate {} (se {}) target {} -> {}",
                s.name,
                s.estimate,
                s.stderr,
                s.target.map_or("-".to_string(), |t| t.to_string()),
                if s.pass { "PASS" } else { "FAIL" }
            );
            println!("wrote {} and {}", summary_path.display(), samples_path.display());
            if !s.pass {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
