//! `ospo` command line: run pipeline stages over a manifest, emit reports,
//! validate manifests and run the Best-of-N comparison.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 backend failure, 4 manifest violations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ospo_core::pipeline::{self, PipelineConfig, PipelineError, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "ospo", version, about = "Object-centric preference pairs and SimPO training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Continue an interrupted stage.
    #[arg(long)]
    resume: bool,
    /// Worker threads for per-sample work.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build keyword pools and base prompts.
    Prompts(RunArgs),
    /// Derive swap / replace / drop negatives.
    Perturb(RunArgs),
    /// Densify each (base, negative) pair.
    Densify(RunArgs),
    /// Generate winning and losing images.
    Images(RunArgs),
    /// Score images with decomposed questions.
    Score(RunArgs),
    /// Pick one pair per prompt.
    Select(RunArgs),
    /// Train the toy policy on the selected pairs.
    Train(RunArgs),
    /// Gap density and indistinguishable-case tables.
    Analyze(RunArgs),
    /// Run every stage up to and including `--through`.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "analyze")]
        through: Stage,
    },
    /// Write report.md and CSV tables next to the manifest.
    Report(ConfigArg),
    /// Check manifest invariants; exits 4 on violations.
    Validate(ConfigArg),
    /// Best-of-N vs OSPO pairs on the simulator.
    Compare(ConfigArg),
    /// Print the default configuration.
    InitConfig {
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Config(_) | PipelineError::ConfigMismatch { .. } => 2,
        e if e.is_backend() => 3,
        _ => 1,
    }
}

fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
    PipelineConfig::load(path)
}

fn run_stages(args: &RunArgs, stages: &[Stage]) -> Result<(), PipelineError> {
    let config = load(&args.config)?;
    let options = RunOptions {
        workers: args.workers,
        resume: args.resume,
        halt_after_records: None,
    };
    let last = *stages.last().expect("at least one stage");
    let summaries = if stages.len() == 1 {
        vec![pipeline::run_stage(&config, last, options)?]
    } else {
        pipeline::run_through(&config, last, options)?
    };
    for s in summaries {
        println!(
            "{:<8} processed {:>5}  skipped {:>5}  discarded {:>5}",
            s.stage.as_str(),
            s.processed,
            s.skipped,
            s.discarded
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<u8, PipelineError> = match &cli.command {
        Command::Prompts(a) => run_stages(a, &[Stage::Prompts]).map(|_| 0),
        Command::Perturb(a) => run_stages(a, &[Stage::Perturb]).map(|_| 0),
        Command::Densify(a) => run_stages(a, &[Stage::Densify]).map(|_| 0),
        Command::Images(a) => run_stages(a, &[Stage::Images]).map(|_| 0),
        Command::Score(a) => run_stages(a, &[Stage::Score]).map(|_| 0),
        Command::Select(a) => run_stages(a, &[Stage::Select]).map(|_| 0),
        Command::Train(a) => run_stages(a, &[Stage::Train]).map(|_| 0),
        Command::Analyze(a) => run_stages(a, &[Stage::Analyze]).map(|_| 0),
        Command::Run { run, through } => {
            let stages: Vec<Stage> = Stage::ALL.into_iter().filter(|s| s <= through).collect();
            run_stages(run, &stages).map(|_| 0)
        }
        Command::Report(a) => load(&a.config).and_then(|c| pipeline::emit_report(&c)).map(|b| {
            println!("{}", b.report.display());
            0
        }),
        Command::Validate(a) => load(&a.config).and_then(|c| {
            let report = pipeline::validate_manifest(&c.manifest_path(), c.simpo.vocab)?;
            for v in &report.violations {
                println!(
                    "line {}{}: [{}] {}",
                    v.line,
                    v.sample_id.as_deref().map(|s| format!(" ({s})")).unwrap_or_default(),
                    v.rule,
                    v.message
                );
            }
            println!("{} lines, {} violations", report.lines, report.violations.len());
            Ok(if report.is_clean() { 0 } else { 4 })
        }),
        Command::Compare(a) => load(&a.config).and_then(|c| pipeline::run_compare(&c)).map(|(r, sweep)| {
            println!("best_of_n_fraction {:.4}", r.best_of_n_fraction);
            println!("ospo_fraction      {:.4}", r.ospo_fraction);
            println!("ratio              {:.3}", r.ratio);
            for (t, f) in sweep {
                println!("temperature {t}: best_of_n_fraction {f:.4}");
            }
            0
        }),
        Command::InitConfig { output } => {
            let json = serde_json::to_string_pretty(&PipelineConfig::default()).expect("config serializes");
            match output {
                Some(path) => std::fs::write(path, json + "\n").map(|_| 0).map_err(PipelineError::from),
                None => {
                    println!("{json}");
                    Ok(0)
                }
            }
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
