use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recname::align::{build_corpus_entry, template_count, CorpusError};
use recname::ast::{parse_ast, AstError};
use recname::graph::build_graph;
use recname::model::{beam_decode, prepare, Model, ModelError};
use recname::neuro::{Checkpoint, NeuroError};
use recname::pipeline::{
    evaluate, gen_corpus, read_corpus, run_training, split, vocabulary_corpus, write_corpus, PipelineError,
    PredictionReport, SplitSpec, TrainConfig,
};
use recname::subtok::{train_segmenter, SpecialSet, SubtokError, Vocabulary, DEFAULT_VOCAB_SIZE};
use recname::CorpusEntry;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Subtok(#[from] SubtokError),
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Usage(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser)]
#[command(name = "recname", version, about = "Recover variable names in decompiled code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic aligned corpus (JSONL).
    GenCorpus {
        /// How many templates of the synthetic library to draw from.
        #[arg(long, default_value_t = template_count())]
        templates: usize,
        #[arg(long)]
        functions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align two decompilations of one function and write its corpus entry.
    Align {
        /// AST JSON of the decompilation without debug information.
        #[arg(long)]
        stripped: PathBuf,
        /// AST JSON of the decompilation with debug information.
        #[arg(long)]
        debug: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "binary")]
        binary: String,
        /// Defaults to the function name in the stripped AST.
        #[arg(long)]
        function: Option<String>,
    },
    /// Learn a subword vocabulary from a corpus.
    BpeTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the typed graph of one corpus entry as JSONL edges.
    BuildGraph {
        /// A corpus file; the first entry is used.
        #[arg(long)]
        entry: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a corpus per binary into train/dev/test files.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "80,10,10")]
        ratios: SplitSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the corpus file's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train a model from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `sample_rate`.
        #[arg(long)]
        sample_rate: Option<f64>,
    },
    /// Evaluate a checkpoint and write the JSON report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Defaults to `vocab.json` next to the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Defaults to the checkpoint's configured width.
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Predict names for every entry in a corpus file, one JSON object per
    /// identifier.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        entry: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

fn load_model(model: &Path, vocab: Option<PathBuf>) -> Result<(Model, Vocabulary), CliError> {
    let vocab_path = vocab.unwrap_or_else(|| model.with_file_name("vocab.json"));
    let vocab = Vocabulary::load(&vocab_path)?;
    let ck = Checkpoint::load(model)?;
    Ok((Model::from_checkpoint(&ck, &vocab)?, vocab))
}

fn first_entry(path: &Path) -> Result<CorpusEntry, CliError> {
    read_corpus(path)?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Usage(format!("{}: no entries", path.display())))
}

fn write_report(path: &Path, value: &PredictionReport) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io(path))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenCorpus {
            templates,
            functions,
            seed,
            out,
        } => {
            let corpus = gen_corpus(templates, functions, seed)?;
            write_corpus(&out, &corpus.entries)?;
            log::info!("wrote {} entries to {}", corpus.entries.len(), out.display());
            for (reason, n) in &corpus.rejected {
                log::info!("rejected {n} functions: {reason}");
            }
        }
        Command::Align {
            stripped,
            debug,
            out,
            binary,
            function,
        } => {
            let read = |p: &Path| fs::read_to_string(p).map_err(io(p));
            let a = parse_ast(&read(&stripped)?)?;
            let b = parse_ast(&read(&debug)?)?;
            let function = function.unwrap_or_else(|| a.function().to_string());
            let entry = build_corpus_entry(&a, &b, &binary, &function)?;
            write_corpus(&out, &[entry])?;
        }
        Command::BpeTrain { corpus, vocab_size, out } => {
            let entries = read_corpus(&corpus)?;
            let vocab = train_segmenter(&vocabulary_corpus(&entries), vocab_size, &SpecialSet::default())?;
            vocab.save(&out)?;
            log::info!("{} tokens ({} merges)", vocab.len(), vocab.merges().len());
        }
        Command::BuildGraph { entry, out } => {
            let entry = first_entry(&entry)?;
            fs::write(&out, build_graph(&entry.ast).edges_jsonl()).map_err(io(&out))?;
        }
        Command::Split {
            corpus,
            ratios,
            seed,
            out_dir,
        } => {
            let entries = read_corpus(&corpus)?;
            let parts = split(&entries, ratios, seed)?;
            let dir = out_dir.unwrap_or_else(|| corpus.parent().unwrap_or(Path::new(".")).to_path_buf());
            parts.write(&dir)?;
            log::info!(
                "train {}, dev {}, test {} entries",
                parts.train.len(),
                parts.dev.len(),
                parts.test.len()
            );
        }
        Command::Train { config, sample_rate } => {
            let mut config = TrainConfig::load(&config)?;
            if let Some(rate) = sample_rate {
                config.sample_rate = rate;
            }
            let summary = run_training(&config)?;
            log::info!(
                "trained on {} entries; best epoch {}; checkpoints {} and {}",
                summary.train_entries,
                summary.best_epoch,
                summary.best_checkpoint.display(),
                summary.final_checkpoint.display()
            );
        }
        Command::Eval {
            model,
            test,
            train,
            report,
            vocab,
            beam,
        } => {
            let (model, vocab) = load_model(&model, vocab)?;
            let beam = beam.unwrap_or(model.config().beam_width);
            let result = evaluate(&model, &vocab, &read_corpus(&test)?, &read_corpus(&train)?, beam)?;
            write_report(&report, &result)?;
            for row in &result.rows {
                let pct = |v: Option<f64>| v.map(|x| format!("{:.1}", 100.0 * x)).unwrap_or_else(|| "-".into());
                println!(
                    "{:<18} {:>6} identifiers  accuracy {:>5}  cer {:>5}",
                    row.name,
                    row.identifiers,
                    pct(row.accuracy),
                    pct(row.cer)
                );
            }
        }
        Command::Predict {
            model,
            entry,
            beam,
            vocab,
        } => {
            let (model, vocab) = load_model(&model, vocab)?;
            let beam = beam.unwrap_or(model.config().beam_width);
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for e in read_corpus(&entry)? {
                let input = prepare(&e, &vocab, Default::default())?;
                for p in beam_decode(&model, &vocab, &input, beam)? {
                    let line = serde_json::to_string(&p).expect("predictions serialize");
                    writeln!(out, "{line}").map_err(io(Path::new("<stdout>")))?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
