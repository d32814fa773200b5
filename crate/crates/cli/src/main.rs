use clap::Parser;
use lfvi_cli::{parse_config, run, split_args};
use std::path::PathBuf;
use std::process::ExitCode;

/// Likelihood-free variational inference and ABC experiments.
///
/// Usage: `lfvi [EXPERIMENT] [--config FILE] [--key.path VALUE]...` where
/// EXPERIMENT is one of simulate, infer, classify, seq, diagnose. Any
/// config key can be set with its dot path, e.g. `--lfvi.batch_size 64`;
/// flags take precedence over the file.
#[derive(Parser)]
#[command(name = "lfvi", version)]
struct Cli {
    /// JSON config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Experiment name followed by `--key value` overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "ARGS")]
    args: Vec<String>,
}

fn threads() -> Result<(), String> {
    let Ok(v) = std::env::var("LFVI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("LFVI_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = threads() {
        eprintln!("lfvi: config error: {e}");
        return ExitCode::from(2);
    }
    let parsed = split_args(&cli.args).and_then(|(file, overrides)| {
        parse_config(cli.config.as_deref().or(file.as_deref()), &overrides)
    });
    let cfg = match parsed {
        Ok(c) => c,
        Err(e) => {
            eprintln!("lfvi: config error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lfvi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
