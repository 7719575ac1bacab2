//! Pipeline orchestrator: ingest -> select -> translate -> assemble ->
//! train -> predict -> evaluate -> report, driven by one TOML config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "argmine", version, about = "Multilingual argument-mining benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// Added to every configured seed before running.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter corpora into task-specific datasets and emit stats tables.
    Select(CommonArgs),
    /// Translate a dataset into each configured target language.
    Translate(CommonArgs),
    /// Concatenate per-language datasets into group training sets.
    Assemble(CommonArgs),
    /// Train and predict once per seed for every configured cell.
    Experiment(CommonArgs),
    /// Score the prediction files an experiment manifest declares.
    Evaluate(CommonArgs),
    /// Aggregate crowd judgments into weighted labels.
    Aggregate(CommonArgs),
    /// Back-translate through a pivot language and report corpus BLEU.
    Bleu(CommonArgs),
    /// Correlate original and translated aggregated labels.
    Preserve(CommonArgs),
    /// Check the config and report every error without executing.
    Validate(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Select(_) => "select",
            Command::Translate(_) => "translate",
            Command::Assemble(_) => "assemble",
            Command::Experiment(_) => "experiment",
            Command::Evaluate(_) => "evaluate",
            Command::Aggregate(_) => "aggregate",
            Command::Bleu(_) => "bleu",
            Command::Preserve(_) => "preserve",
            Command::Validate(_) => "validate",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Select(a)
            | Command::Translate(a)
            | Command::Assemble(a)
            | Command::Experiment(a)
            | Command::Evaluate(a)
            | Command::Aggregate(a)
            | Command::Bleu(a)
            | Command::Preserve(a)
            | Command::Validate(a) => a,
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let name = cli.command.name();
    let args = cli.command.args();

    let cfg = match config::load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let errors = cfg.validate();
    if let Command::Validate(_) = cli.command {
        if errors.is_empty() {
            println!("config ok: no errors");
            return ExitCode::SUCCESS;
        }
        for e in &errors {
            println!("error: {e}");
        }
        return ExitCode::from(1);
    }
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("error: {e}");
        }
        return ExitCode::from(1);
    }

    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        return ExitCode::from(2);
    }

    let result = commands::run(name, &cfg, args.seed_offset, &args.out);
    let (status, error) = match &result {
        Ok(_) => ("ok", None),
        Err(e) => ("FAILED", Some(format!("{e:#}"))),
    };
    let artifacts = match &result {
        Ok(files) => files.clone(),
        Err(_) => Vec::new(),
    };
    if let Err(e) =
        commands::write_run_manifest(&args.out, name, &cfg, args.seed_offset, status, error, artifacts)
    {
        eprintln!("error: cannot write run manifest: {e}");
        return ExitCode::from(2);
    }

    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
