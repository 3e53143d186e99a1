//! Command-line front end: builds card libraries from seed datasets,
//! answers held-out questions with retrieved cards, and scores results.
//!
//! Exit codes are a stable contract: 0 on success, 1 on usage or IO
//! errors, 2 when a run completes but produces nothing (zero cards, zero
//! answered queries).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use astar_core::cards::{load_cards, CardFileError, CardsError, ThoughtCard};
use astar_core::config::{build_providers, ConfigError, ProviderKind, ProviderSet, RunConfig};
use astar_core::dataset::{load_dataset, save_dataset, DatasetError};
use astar_core::eval::{evaluate, render_text, EvalError};
use astar_core::pipeline::{
    build_cards_run, infer_run, match_run, read_results, PipelineError,
};
use astar_core::toy::{generate, save_script, ToyGenConfig};

#[derive(Parser)]
#[command(
    name = "astar",
    version,
    about = "Build thought-card libraries from solved questions, then answer new ones by retrieving and verifying matching cards"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search seed questions and distill a card library from the best paths
    BuildCards(BuildCardsArgs),
    /// Answer questions using retrieved cards and answer verification
    Infer(InferArgs),
    /// Score a results file against a dataset's gold answers
    Eval(EvalArgs),
    /// Show which cards each query would retrieve
    Match(MatchArgs),
    /// Generate a synthetic task corpus with a matching policy script
    GenToy(GenToyArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ProviderChoice {
    Mock,
    Http,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration TOML file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the configured run seed
    #[arg(long, value_name = "N")]
    run_seed: Option<u64>,
    /// Force policy, embedding, and complexity providers to one kind
    #[arg(long, value_enum, value_name = "KIND")]
    provider: Option<ProviderChoice>,
    /// Mock policy script, overriding the configured path
    #[arg(long, value_name = "PATH")]
    policy_script: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.run_seed {
            config.run_seed = seed;
        }
        if let Some(choice) = self.provider {
            let kind = match choice {
                ProviderChoice::Mock => ProviderKind::Mock,
                ProviderChoice::Http => ProviderKind::Http,
            };
            config.providers.policy = kind;
            config.providers.embedding = kind;
            config.providers.complexity = kind;
        }
        Ok(config)
    }

    fn providers(&self, config: &RunConfig) -> Result<ProviderSet, CliError> {
        Ok(build_providers(config, self.policy_script.as_deref())?)
    }
}

#[derive(Args)]
struct BuildCardsArgs {
    /// Seed dataset (JSON Lines)
    dataset: PathBuf,
    /// Card library output path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Worker threads
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Process only the first N seed records
    #[arg(long, value_name = "N")]
    seed_limit: Option<usize>,
    /// Write per-iteration search traces (default: output path with a
    /// .trace.jsonl extension)
    #[arg(long, value_name = "PATH", num_args = 0..=1)]
    trace: Option<Option<PathBuf>>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct InferArgs {
    /// Question dataset (JSON Lines)
    dataset: PathBuf,
    /// Card library to retrieve from
    #[arg(long, value_name = "PATH", required_unless_present = "unguided")]
    cards: Option<PathBuf>,
    /// Results output path (JSON Lines)
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Answer with a single direct reasoning pass instead of cards
    #[arg(long)]
    unguided: bool,
    /// Worker threads
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Results file produced by infer
    results: PathBuf,
    /// Dataset with gold answers
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    /// Question dataset (JSON Lines)
    dataset: PathBuf,
    /// Card library to rank
    #[arg(long, value_name = "PATH")]
    cards: PathBuf,
    /// Include the full per-card ranking table
    #[arg(long)]
    explain: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GenToyArgs {
    /// Directory for seed.jsonl, holdout.jsonl, and policy.json
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Seed task count
    #[arg(long, value_name = "N", default_value_t = 100)]
    n: usize,
    /// Held-out task count
    #[arg(long, value_name = "N", default_value_t = 50)]
    holdout: usize,
    /// Corpus seed
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Empty(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Cards(#[from] CardFileError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Empty(_) => 2,
            CliError::Pipeline(PipelineError::Cards(CardsError::AllQueriesFailed { .. })) => 2,
            _ => 1,
        }
    }
}

/// Writes to stdout, exiting quietly if the reading end has closed.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_bytes()).is_err() {
        std::process::exit(0);
    }
}

fn print_json<T: Serialize>(value: &T) {
    let mut line = serde_json::to_string(value).expect("summary serializes");
    line.push('\n');
    emit(&line);
}

fn build_cards_cmd(args: BuildCardsArgs) -> Result<(), CliError> {
    let mut config = args.config.load()?;
    if args.seed_limit.is_some() {
        config.seed_limit = args.seed_limit;
    }
    let providers = args.config.providers(&config)?;
    let seed = load_dataset(&args.dataset)?;
    let trace_path = args.trace.as_ref().map(|explicit| match explicit {
        Some(path) => path.clone(),
        None => args.out.with_extension("trace.jsonl"),
    });
    let (summary, _) = build_cards_run(
        &seed,
        &providers,
        &config,
        args.jobs,
        &args.out,
        trace_path.as_deref(),
    )?;
    print_json(&summary);
    if summary.cards == 0 {
        return Err(CliError::Empty(format!(
            "no cards were produced: {} of {} seed queries went unsolved",
            summary.skipped, summary.queries
        )));
    }
    Ok(())
}

fn infer_cmd(args: InferArgs) -> Result<(), CliError> {
    let config = args.config.load()?;
    let providers = args.config.providers(&config)?;
    let queries = load_dataset(&args.dataset)?;
    let cards: Vec<ThoughtCard> = match (&args.cards, args.unguided) {
        (_, true) => Vec::new(),
        (Some(path), false) => load_cards(path)?,
        (None, false) => unreachable!("clap requires --cards without --unguided"),
    };
    let (summary, _) = infer_run(
        &queries,
        &cards,
        &providers,
        &config,
        args.jobs,
        args.unguided,
        &args.out,
    )?;
    print_json(&summary);
    if summary.answered == 0 {
        return Err(CliError::Empty(
            "no queries were answered".to_string(),
        ));
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<(), CliError> {
    let results = read_results(&args.results)?;
    let queries = load_dataset(&args.dataset)?;
    let report = evaluate(&results, &queries)?;
    emit(&render_text(&report));
    print_json(&report);
    Ok(())
}

fn match_cmd(args: MatchArgs) -> Result<(), CliError> {
    let config = args.config.load()?;
    let providers = args.config.providers(&config)?;
    let queries = load_dataset(&args.dataset)?;
    let cards = load_cards(&args.cards)?;
    let lines = match_run(&queries, &cards, &providers, args.explain)?;
    for line in &lines {
        print_json(line);
    }
    Ok(())
}

#[derive(Serialize)]
struct GenToySummary {
    seed_records: usize,
    holdout_records: usize,
    tasks: usize,
    dir: String,
}

fn gen_toy_cmd(args: GenToyArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
        path: args.out.display().to_string(),
        source,
    })?;
    let corpus = generate(&ToyGenConfig {
        n: args.n,
        holdout: args.holdout,
        seed: args.seed,
    });
    save_dataset(&corpus.seed_records, &args.out.join("seed.jsonl"))?;
    save_dataset(&corpus.holdout_records, &args.out.join("holdout.jsonl"))?;
    let script = args.out.join("policy.json");
    save_script(&corpus.tasks, &script).map_err(|source| CliError::Io {
        path: script.display().to_string(),
        source,
    })?;
    print_json(&GenToySummary {
        seed_records: corpus.seed_records.len(),
        holdout_records: corpus.holdout_records.len(),
        tasks: corpus.tasks.len(),
        dir: args.out.display().to_string(),
    });
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildCards(args) => build_cards_cmd(args),
        Command::Infer(args) => infer_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Match(args) => match_cmd(args),
        Command::GenToy(args) => gen_toy_cmd(args),
    }
}

fn report_error(err: &CliError) {
    eprintln!("error: {err}");
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            let _ = e.print();
            return if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code())
        }
    }
}
