use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qwien_cli::config::{parse_config, Mode};
use qwien_cli::run::{run, RunError};

/// Multislice simulation of spin filtering in multipolar Wien filters.
#[derive(Debug, Parser)]
#[command(name = "qwien", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Directory for the output bundle; replaces `outputs.directory`.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Run even when the sampling check fails.
    #[arg(long)]
    override_sampling: bool,

    /// Worker threads (defaults to all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Reserved. The simulation is deterministic; the value is only recorded.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = args.output_dir {
        cfg.outputs.directory = dir;
    }
    cfg.override_sampling |= args.override_sampling;
    let mut source = text;
    if let Some(seed) = args.seed {
        source.push_str(&format!("\n# --seed {seed}\n"));
    }

    match run(&cfg, &source) {
        Ok(bundle) => {
            print!("{}", bundle.summary);
            println!("wrote {} files to {}", bundle.files.len(), bundle.directory.display());
            if cfg.mode == Mode::CheckOnly && !bundle.sampling_pass {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e @ RunError::SamplingRefused { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
