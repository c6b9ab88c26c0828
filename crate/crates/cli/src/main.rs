use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dlmix::io::{emit_results, generate, load_panel, run, write_panel, GeneratedKind, RunConfig};
use dlmix::Error;

#[derive(Parser)]
#[command(name = "dlmix", version, about = "Cluster panels of time series with mixtures of dynamic linear models")]
struct Cli {
    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mixture to a long-format panel CSV.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic two-cluster panel and, next to it, its true labels.
    Generate {
        /// static, dynamic or outlier
        #[arg(long)]
        kind: GeneratedKind,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_truth.csv"))
}

fn execute(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit { config, data, out } => {
            let config = RunConfig::load(&config)?;
            let panel = load_panel(&data)?;
            println!(
                "loaded {}: n = {}, T = {}, m = {}",
                data.display(),
                panel.n_series(),
                panel.n_times(),
                panel.n_dims()
            );
            let result = run(&config, &panel)?;
            let files = emit_results(&result, &out)?;
            println!(
                "{}: {} iterations in {:.2} s",
                config.algorithm.name(),
                result.iterations(),
                result.wall_time_secs
            );
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Generate { kind, seed, out } => {
            let generated = generate(kind, seed)?;
            write_panel(&out, &generated.panel, None)?;
            let truth = truth_path(&out);
            generated.write_truth(&truth)?;
            println!("wrote {} and {}", out.display(), truth.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
