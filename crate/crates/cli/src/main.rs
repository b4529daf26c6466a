use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::RunConfig;
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "diagramma", version, about = "Manuscript corpus, diagram annotation and existential-graph tools")]
struct Cli {
    /// TOML run configuration; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory every output is written under.
    #[arg(long, global = true, value_name = "DIR")]
    output_root: Option<PathBuf>,
    /// Seed for fold assignment and training shuffles.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Machine-readable output on stdout, single-line JSON errors on stderr.
    #[arg(long, global = true)]
    json: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse IIIF manifests into canvas records, optionally downloading images.
    Ingest(commands::corpus::IngestArgs),
    /// Page counts per catalogue category and five-year period.
    Stats(commands::corpus::StatsArgs),
    /// Page classification: HOG extraction, training, prediction, cross-validation.
    #[command(subcommand)]
    Classify(commands::classify::ClassifyCommand),
    /// Score detections against ground truth (AP, mAP, best F1).
    DetectEval(commands::detect::DetectArgs),
    /// Turn detections (and interpretations) into a Web Annotation page.
    Annotate(commands::annotate::AnnotateArgs),
    /// Existential graphs: translation and equivalence checking.
    #[command(subcommand)]
    Eg(commands::eg::EgCommand),
    /// Query vision-language models with the three-level prompts.
    Prompt(commands::vlm::PromptArgs),
    /// Apply manual scores, auto-score symbolic answers, aggregate.
    Score(commands::vlm::ScoreArgs),
    /// Serialize an annotation page as Turtle or N-Triples.
    ExportRdf(commands::annotate::ExportArgs),
}

/// What a subcommand prints: a human summary and the same content as JSON.
pub struct Report {
    pub human: String,
    pub json: serde_json::Value,
}

impl Command {
    fn apply(&self, config: &mut RunConfig) {
        match self {
            Command::Ingest(a) => a.apply(config),
            Command::Stats(a) => a.apply(config),
            Command::Classify(c) => c.apply(config),
            Command::DetectEval(a) => a.apply(config),
            Command::Annotate(a) => a.apply(config),
            Command::Eg(c) => c.apply(config),
            Command::Prompt(a) => a.apply(config),
            Command::Score(a) => a.apply(config),
            Command::ExportRdf(a) => a.apply(config),
        }
    }

    fn run(&self, config: &RunConfig) -> Result<Report> {
        match self {
            Command::Ingest(a) => commands::corpus::ingest(a, config),
            Command::Stats(a) => commands::corpus::stats(a, config),
            Command::Classify(c) => commands::classify::run(c, config),
            Command::DetectEval(a) => commands::detect::run(a, config),
            Command::Annotate(a) => commands::annotate::annotate(a, config),
            Command::Eg(c) => commands::eg::run(c, config),
            Command::Prompt(a) => commands::vlm::prompt(a, config),
            Command::Score(a) => commands::vlm::score(a, config),
            Command::ExportRdf(a) => commands::annotate::export(a, config),
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = config::load(cli.config.as_deref())?;
    if let Some(root) = &cli.output_root {
        config.paths.output_root = root.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(command) = &cli.command {
        command.apply(&mut config);
    }
    config.check()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<Option<Report>> {
    let config = effective_config(cli)?;
    if cli.show_config {
        let json = serde_json::to_value(&config).expect("the run configuration always serializes");
        return Ok(Some(Report { human: config::render(&config), json }));
    }
    match &cli.command {
        Some(command) => command.run(&config).map(Some),
        None => Err(CliError::Usage(usage())),
    }
}

fn usage() -> String {
    use clap::CommandFactory;
    Cli::command().render_usage().to_string()
}

fn fail(err: &CliError, json: bool) -> ExitCode {
    if json {
        eprintln!("{}", err.to_json());
    } else {
        eprintln!("error: {err}");
    }
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let json_requested = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if json_requested {
                let message = e.to_string();
                let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
                return fail(&CliError::Usage(first.to_string()), true);
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let default_level = if cli.json { "off" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();

    match execute(&cli) {
        Ok(Some(report)) => {
            let mut out = std::io::stdout().lock();
            let written = if cli.json {
                writeln!(out, "{}", report.json)
            } else {
                write!(out, "{}", report.human).and_then(|_| {
                    if report.human.ends_with('\n') {
                        Ok(())
                    } else {
                        writeln!(out)
                    }
                })
            };
            if let Err(e) = written {
                return fail(&CliError::Io { path: None, message: format!("writing output: {e}") }, cli.json);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(err) => fail(&err, cli.json),
    }
}
