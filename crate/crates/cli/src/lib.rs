//! Command-line front end: argument parsing, run configuration and the five
//! subcommands.

mod args;
mod commands;
mod config;
mod data;
mod error;

pub use args::{Cli, Command, ConvertArgs, EvaluateArgs, InterpolateArgs, TrainArgs, VerifyArgs};
pub use commands::{
    cmd_convert, cmd_evaluate, cmd_interpolate, cmd_train, cmd_verify, format_aggregate, keyframe_policy,
    resolve_run_config, ConvertSummary, Converted, EvaluateSummary, InterpolateSummary, TrainSummary, VERIFY_REPORT,
};
pub use config::{ModelSettings, RunConfig, RESOLVED_CONFIG, RUN_CONFIG_SCHEMA};
pub use data::{clip_paths, load_any_clip, load_dataset};
pub use error::{CliError, CliResult};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "KEYLOOM_THREADS";

/// Size the global thread pool from `KEYLOOM_THREADS` when it is set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::user(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// Execute one command, printing its summary to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Convert(a) => {
            let s = cmd_convert(&a)?;
            for c in &s.converted {
                println!(
                    "{}: {} joints, {} frames @ {} fps -> {}",
                    c.source.display(),
                    c.joints,
                    c.frames,
                    c.fps,
                    c.output.display()
                );
            }
            for (p, e) in &s.failed {
                eprintln!("{}: {e}", p.display());
            }
            if !s.failed.is_empty() {
                let list: Vec<String> = s.failed.iter().map(|(p, _)| p.display().to_string()).collect();
                return Err(CliError::user(format!("{} file(s) failed: {}", list.len(), list.join(", "))));
            }
        }
        Command::Train(a) => {
            let s = cmd_train(&a)?;
            println!(
                "trained epochs {}..{} into {}; loss {} -> {}; checkpoint {}",
                s.start_epoch,
                s.epochs,
                s.output_dir.display(),
                s.first_loss.map_or("-".into(), |v| format!("{v:.6}")),
                s.final_loss.map_or("-".into(), |v| format!("{v:.6}")),
                s.last_checkpoint.display()
            );
        }
        Command::Interpolate(a) => {
            let s = cmd_interpolate(&a)?;
            println!(
                "{} frames from {} keyframes -> {}",
                s.frames,
                s.keyframes.len(),
                s.prediction.display()
            );
            for p in s.bvh.iter().chain(&s.latents) {
                println!("wrote {}", p.display());
            }
        }
        Command::Evaluate(a) => {
            let s = cmd_evaluate(&a)?;
            print!("{}", format_aggregate(&s.report));
            for p in &s.files {
                println!("wrote {}", p.display());
            }
        }
        Command::Verify(a) => {
            let report = cmd_verify(&a)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?
            );
            if !report.passed {
                let failed: Vec<&str> =
                    report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(CliError::Verification(failed.join(", ")));
            }
        }
    }
    Ok(())
}
