mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use evex::eval::Strictness;
use evex::pipeline::{ExtractionMode, GroundingPolicy};
use evex::prompt::DemoMode;

/// Parses a kebab-case enum value the way config files spell it.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Parser)]
#[command(name = "evex", version, about = "Prompt-based event extraction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the extraction section of a run config.
#[derive(Args, Clone, Default)]
pub struct ExtractionFlags {
    /// decomposed or single-step
    #[arg(long, value_parser = kebab::<ExtractionMode>)]
    pub mode: Option<ExtractionMode>,
    /// none, fixed or rae
    #[arg(long, value_parser = kebab::<DemoMode>)]
    pub demo_mode: Option<DemoMode>,
    #[arg(long)]
    pub k: Option<usize>,
    /// first-occurrence, all-occurrences or string-only
    #[arg(long, value_parser = kebab::<GroundingPolicy>)]
    pub grounding: Option<GroundingPolicy>,
    /// Send demonstrations as earlier chat turns.
    #[arg(long)]
    pub multi_turn: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check an event schema file.
    SchemaValidate { path: PathBuf },
    /// Print counts for a corpus file.
    CorpusStats {
        path: PathBuf,
        /// Schema to validate against; defaults to the bundled maritime one.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Embed the training corpus and write the retrieval index.
    IndexBuild {
        #[arg(long)]
        config: PathBuf,
        /// Overwrite an existing index even if its shape differs.
        #[arg(long)]
        force: bool,
    },
    /// Show the nearest training instances for a text or an instance id.
    IndexQuery {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "id", required_unless_present = "id")]
        text: Option<String>,
        /// Id of a train or test instance; the instance itself is excluded.
        #[arg(long)]
        id: Option<String>,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
    /// Run extraction over the test corpus into a run directory.
    Extract {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        flags: ExtractionFlags,
        #[arg(long)]
        mock_script: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against a gold corpus.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// string or span
        #[arg(long, value_parser = kebab::<Strictness>, default_value = "string")]
        strictness: Strictness,
        /// Let an argument count even when its event type is wrong.
        #[arg(long)]
        any_event_type: bool,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic annotated corpus from the seed reports.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mock_script: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run zero-shot, one-shot, 5-shot and 5-shot retrieval regimes and
    /// compare them.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mock_script: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a mock script that answers every prompt with the gold
    /// annotation (or, for synthesis, a valid composite report).
    EchoScript {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        flags: ExtractionFlags,
        /// Cover the prompts of all four sweep regimes.
        #[arg(long, conflicts_with = "synthesis")]
        sweep: bool,
        /// Script the synthesis prompts instead.
        #[arg(long)]
        synthesis: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SchemaValidate { path } => commands::schema_validate(&path),
        Command::CorpusStats { path, schema } => commands::corpus_stats(&path, schema.as_deref()),
        Command::IndexBuild { config, force } => commands::index_build(&config, force),
        Command::IndexQuery { config, text, id, k } => commands::index_query(&config, text, id, k),
        Command::Extract {
            config,
            flags,
            mock_script,
            out,
        } => commands::extract(&config, &flags, mock_script, out),
        Command::Score {
            gold,
            predictions,
            schema,
            strictness,
            any_event_type,
            json,
            out,
        } => commands::score(commands::ScoreArgs {
            gold,
            predictions,
            schema,
            strictness,
            any_event_type,
            json,
            out,
        }),
        Command::Synthesize {
            config,
            target,
            seed,
            mock_script,
            out,
        } => commands::synthesize(&config, target, seed, mock_script, out),
        Command::Sweep {
            config,
            mock_script,
            out,
        } => commands::sweep(&config, mock_script, out),
        Command::EchoScript {
            config,
            flags,
            sweep,
            synthesis,
            out,
        } => commands::echo_script(&config, &flags, sweep, synthesis, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
