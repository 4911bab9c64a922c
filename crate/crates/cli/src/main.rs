use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use distractor_align::dataset::SyntheticProfile;
use distractor_align::{Aggregation, Approach};
use distractor_align_cli::{cmd_analyze, cmd_report, cmd_score, cmd_synth, cmd_validate, CliError, Overrides, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ApproachArg {
    Index,
    Text,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregationArg {
    Mean,
    Pooled,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    PerfectlyAligned,
    AntiAligned,
    UniformStudents,
}

/// Compare model answer likelihoods with student distractor choices.
#[derive(Debug, Parser)]
#[command(name = "distractor-align", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Restrict to these models (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long, global = true, value_enum)]
    approach: Option<ApproachArg>,
    #[arg(long, global = true, value_enum)]
    aggregation: Option<AggregationArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Refuse any network backend.
    #[arg(long, global = true)]
    offline: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the config and dataset.
    Validate,
    /// Write a synthetic dataset, score table and config.
    Synth {
        #[arg(long, value_enum, default_value = "perfectly-aligned")]
        profile: ProfileArg,
        #[arg(long, default_value_t = 50)]
        n: usize,
    },
    /// Score every option of every question into the cache.
    Score,
    /// Compute correlations and error alignment from the cache.
    Analyze,
    /// Render tables and plot data from the analysis.
    Report,
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        models: cli.models.clone(),
        approaches: cli.approach.map(|a| match a {
            ApproachArg::Index => vec![Approach::Index],
            ApproachArg::Text => vec![Approach::Text],
            ApproachArg::Both => Approach::ALL.to_vec(),
        }),
        aggregations: cli.aggregation.map(|a| match a {
            AggregationArg::Mean => vec![Aggregation::MeanPerQuestion],
            AggregationArg::Pooled => vec![Aggregation::Pooled],
            AggregationArg::Both => Aggregation::ALL.to_vec(),
        }),
        out_dir: cli.out.clone(),
        seed: cli.seed,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation(vec!["--config is required".into()]))?;
    let mut cfg = RunConfig::load(path)?;
    overrides(cli).apply(&mut cfg)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate => {
            let cfg = load(cli)?;
            let report = cmd_validate(&cfg);
            if !report.is_clean() {
                return Err(CliError::Validation(report.diagnostics));
            }
            println!(
                "ok: {} records, {} pass the filter, {} models",
                report.n_records,
                report.n_kept,
                cfg.models.len()
            );
        }
        Command::Synth { profile, n } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let profile = match profile {
                ProfileArg::PerfectlyAligned => SyntheticProfile::PerfectlyAligned,
                ProfileArg::AntiAligned => SyntheticProfile::AntiAligned,
                ProfileArg::UniformStudents => SyntheticProfile::UniformStudents,
            };
            for f in cmd_synth(cli.seed.unwrap_or(0), profile, *n, &out)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Score => {
            let cfg = load(cli)?;
            let stats = cmd_score(&cfg, cli.offline)?;
            println!(
                "{} requests: {} backend calls, {} cache hits",
                stats.requests, stats.backend_calls, stats.cache_hits
            );
        }
        Command::Analyze => {
            let cfg = load(cli)?;
            let out = cmd_analyze(&cfg)?;
            if !out.rq1.excluded.is_empty() {
                eprintln!("excluded {} question scorings with invalid scores", out.rq1.excluded.len());
            }
            for f in out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Report => {
            let cfg = load(cli)?;
            let out = cmd_report(&cfg)?;
            print!("{}", out.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
