use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use pinlab_cli::{config, emit_report, execute_with_workers, CliError, ExperimentConfig, ResultRecord, RunOptions};

/// Exit status: 0 when every enabled check passes, 1 when a check fails,
/// 2 for an invalid configuration, 3 for runtime errors, 4 when a sweep
/// stopped early and can be resumed.
#[derive(Debug, Parser)]
#[command(name = "pinlab", version, about = "Random pinning model experiments")]
struct Args {
    /// Experiment configuration (JSON).
    #[arg(long, required_unless_present_any = ["report", "print_schema"])]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replica-level parallelism.
    #[arg(long, env = "PINLAB_WORKERS")]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only these checks decide the exit status.
    #[arg(long, num_args = 1..)]
    check: Vec<String>,
    /// Merge existing record.json files into one report instead of running.
    #[arg(long, num_args = 0.., conflicts_with = "config")]
    report: Option<Vec<PathBuf>>,
    /// Print the configuration JSON schema and exit.
    #[arg(long)]
    print_schema: bool,
    /// Sweep only: stop after this many new grid points, keeping the manifest.
    #[arg(long)]
    stop_after: Option<usize>,
    /// Suppress progress lines on stderr.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match dispatch(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("pinlab: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(args: Args) -> Result<bool, CliError> {
    if args.print_schema {
        print!("{}", config::schema_json());
        return Ok(true);
    }
    let out = args.out.clone();
    if let Some(paths) = args.report {
        let records = paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str::<ResultRecord>(&text).with_context(|| format!("parsing {}", p.display()))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let text = emit_report(&records);
        match out {
            Some(dir) => {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                std::fs::write(dir.join("report.md"), text).context("writing report.md")?;
            }
            None => print!("{text}"),
        }
        return Ok(records.iter().all(|r| r.passed));
    }

    let mut config = ExperimentConfig::load(args.config.as_deref().expect("required by clap"))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out_dir = out
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("pinlab-out"));
    if args.out.is_some() {
        config.output = Some(out_dir.display().to_string());
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::config("workers", "must be at least 1"));
    }
    let opts = RunOptions {
        out_dir: out_dir.clone(),
        quiet: args.quiet,
        stop_after: args.stop_after,
        checks: args.check,
    };
    let record = execute_with_workers(&config, &opts, workers)?;
    for c in record.checks.iter().filter(|c| c.enabled) {
        let status = match (c.passed, c.exploratory) {
            (true, _) => "PASS",
            (false, true) => "FAIL (exploratory)",
            (false, false) => "FAIL",
        };
        println!("{status} {}: {}", c.name, c.detail);
    }
    println!(
        "{} -> {} ({:.2} s)",
        record.command,
        out_dir.display(),
        record.wall_time_seconds
    );
    Ok(record.passed)
}
