use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use igt_rag::synth::SynthConfig;
use igt_rag_cli::{
    cmd_correct, cmd_eval, cmd_gloss, cmd_index, cmd_rerank_train, cmd_retrieve, cmd_synth, cmd_train_baseline,
    cmd_validate, CliError, EvalInput, Mode, Outcome, Overrides, Pipeline,
};

#[derive(Parser)]
#[command(name = "igt-rag", version, about = "Retrieval-augmented correction of interlinear glosses")]
struct Cli {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Bypass the response and embedding caches.
    #[arg(long, global = true)]
    no_cache: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a corpus and report rejected entries.
    Validate { corpus: PathBuf },
    /// Train the count-based baseline glosser on the training corpus.
    TrainBaseline,
    /// Gloss the eval corpus with the trained baseline.
    Gloss,
    /// Chunk and embed the grammar documents.
    Index,
    /// Show the top-k grammar chunks for one sentence.
    Retrieve { sentence_id: String },
    /// Correct the initial glosses with an LLM backend.
    Correct {
        #[arg(long, value_enum, default_value = "naive")]
        mode: Mode,
    },
    /// Train the chunk reranker by alternating optimization.
    RerankTrain,
    /// Score predictions or corrections against the eval corpus.
    Eval {
        #[arg(long, conflicts_with = "corrections", required_unless_present = "corrections")]
        predictions_file: Option<PathBuf>,
        #[arg(long)]
        corrections: Option<PathBuf>,
    },
    /// Write a synthetic language bundle for offline runs.
    Synth {
        #[arg(long, default_value = "synth")]
        out: PathBuf,
        #[arg(long = "synth-seed", default_value_t = SynthConfig::default().seed)]
        synth_seed: u64,
    },
}

/// Manifest timestamps honour SOURCE_DATE_EPOCH for reproducible runs.
fn source_date_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.parse().ok()
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let timestamp = source_date_epoch();
    if let Command::Validate { corpus } = &cli.command {
        let language = cli.overrides.language.clone().unwrap_or_else(|| "und".into());
        let (report, outcome) = cmd_validate(corpus, &language)?;
        if !report.is_valid() {
            print!("{}", outcome.message);
            return Err(CliError::Data(format!("{} entries rejected", report.rejected.len())));
        }
        return Ok(outcome);
    }
    if let Command::Synth { out, synth_seed } = &cli.command {
        return cmd_synth(out, &SynthConfig { seed: *synth_seed, ..SynthConfig::default() }, timestamp);
    }
    let mut p = Pipeline::load(cli.config.as_deref(), &cli.overrides)?;
    p.no_cache = cli.no_cache;
    p.timestamp = timestamp;
    match cli.command {
        Command::TrainBaseline => cmd_train_baseline(&p),
        Command::Gloss => cmd_gloss(&p),
        Command::Index => cmd_index(&p),
        Command::Retrieve { sentence_id } => cmd_retrieve(&p, &sentence_id),
        Command::Correct { mode } => cmd_correct(&p, mode),
        Command::RerankTrain => cmd_rerank_train(&p),
        Command::Eval { predictions_file, corrections } => {
            let input = match (predictions_file, corrections) {
                (_, Some(c)) => EvalInput::Corrections(std::env::current_dir().map_err(|e| CliError::io(".", e))?.join(c)),
                (Some(f), None) => EvalInput::Predictions(std::env::current_dir().map_err(|e| CliError::io(".", e))?.join(f)),
                (None, None) => return Err(CliError::Usage("pass --predictions-file or --corrections".into())),
            };
            cmd_eval(&p, &input)
        }
        Command::Validate { .. } | Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.message);
            if let Some(m) = outcome.manifest {
                eprintln!("manifest: {}", m.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
