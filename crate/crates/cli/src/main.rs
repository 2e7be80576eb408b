mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Phrase-based image captioning: chunk captions, train the two decoders,
/// generate and evaluate.
///
/// Errors are printed to stderr as one JSON object. Exit codes: 0 success,
/// 1 validation failure, 2 I/O error.
#[derive(Parser, Debug)]
#[command(name = "phicap", version)]
pub struct Cli {
    /// Worker threads for training and inference [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML run configuration ([paths], [train], [inference], [truncation],
    /// [loss], top-level seed). Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split every caption of a corpus into an abbreviated sentence and its
    /// noun phrases; prints NP counts per dependency relation.
    Chunk {
        /// Parsed corpus (JSONL)
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Chunked output (JSONL)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the phrase decoder alone on the train split.
    TrainPhrase {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainFlags,
        /// Output checkpoint
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training log (JSONL) [default: <out>.log.jsonl]
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Refine chunked pairs with a phrase-decoder checkpoint.
    RefineCorpus {
        /// Phrase-decoder checkpoint
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Chunked pairs (JSONL, as written by `chunk`)
        #[arg(long)]
        chunked: PathBuf,
        /// Image features (JSONL)
        #[arg(long)]
        features: Option<PathBuf>,
        /// Keep only train and validation images of this split file
        #[arg(long)]
        splits: Option<PathBuf>,
        /// Refined pairs (JSONL)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        infer: InferFlags,
        /// Abbreviated-sentence slot cap [default: 20]
        #[arg(long)]
        as_limit: Option<usize>,
        /// Noun-phrase length cap [default: 7]
        #[arg(long)]
        np_limit: Option<usize>,
    },
    /// Two-stage training: phrase decoder, refinement, then both decoders.
    /// With --stage1 and --refined only the joint stage runs.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        infer: InferFlags,
        /// Start from this phrase-decoder checkpoint
        #[arg(long, requires = "refined")]
        stage1: Option<PathBuf>,
        /// Refined pairs to train on (from `refine-corpus`)
        #[arg(long, requires = "stage1")]
        refined: Option<PathBuf>,
        /// Output checkpoint
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training log (JSONL) [default: <out>.log.jsonl]
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Caption images with a trained checkpoint.
    Generate {
        /// Trained checkpoint
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Image features (JSONL)
        #[arg(long)]
        features: Option<PathBuf>,
        /// Restrict to one split of this split file
        #[arg(long)]
        splits: Option<PathBuf>,
        /// Which split to caption when --splits is given
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        /// Captions (JSONL)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        infer: InferFlags,
        /// Comma-separated thresholds; prints one JSON line per T with the
        /// number of distinct captions and, given --references, the metrics
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        threshold_sweep: Vec<f64>,
        /// Reference corpus (JSONL) for the threshold sweep metrics
        #[arg(long)]
        references: Option<PathBuf>,
    },
    /// Score generated captions against references.
    Eval {
        /// Generated captions (JSONL)
        #[arg(long)]
        generated: PathBuf,
        /// Reference corpus (JSONL); every caption of an image is a reference
        #[arg(long)]
        references: PathBuf,
        /// Training corpus (JSONL) for novelty statistics
        #[arg(long)]
        train_captions: Option<PathBuf>,
        /// Use only the train split of --train-captions
        #[arg(long)]
        splits: Option<PathBuf>,
        /// Comma-separated metrics beyond bleu-1..4 and rouge-l
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Multiply the BLEU brevity penalty in
        #[arg(long)]
        brevity_penalty: bool,
        /// How many least-seen generated words to list
        #[arg(long, default_value_t = 10)]
        least_seen: usize,
        /// Report format
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences on a
    /// fixed two-phrase example.
    Gradcheck {
        /// Hidden size of the checked model
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        /// Initialisation seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Uniform initialisation half-width
        #[arg(long, default_value_t = 1.0)]
        init_scale: f64,
        /// Finite-difference step
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        /// Largest accepted relative error
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// L2 weight
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
        /// Phrase-indicator loss (sigmoid or hinge)
        #[arg(long, default_value = "sigmoid")]
        indicator: String,
    },
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Parsed corpus (JSONL)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Image features (JSONL)
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Split file (JSON with train/val/test id lists)
    #[arg(long)]
    pub splits: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// RMSprop learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Minibatch size in captions [default: 300]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Joint-training epochs [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Phrase-decoder epochs [default: 10]
    #[arg(long)]
    pub stage1_epochs: Option<usize>,
    /// Dropout rate [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Hidden and embedding size [default: 256]
    #[arg(long)]
    pub hidden_size: Option<usize>,
    /// Rarer training words map to UNK [default: 5]
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Global gradient-norm cap, 0 disables [default: 5]
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Uniform initialisation half-width [default: 0.08]
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Random seed for initialisation, shuffling and dropout [default: 1234]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Phrase-indicator loss: sigmoid or hinge [default: sigmoid]
    #[arg(long)]
    pub indicator: Option<String>,
    /// L2 weight [default: 0]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Abbreviated-sentence slot cap [default: 20]
    #[arg(long)]
    pub as_limit: Option<usize>,
    /// Noun-phrase length cap [default: 7]
    #[arg(long)]
    pub np_limit: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct InferFlags {
    /// Noun-phrase beam width [default: 30]
    #[arg(long)]
    pub beam_phrase: Option<usize>,
    /// Sentence beam width [default: 20]
    #[arg(long)]
    pub beam_sentence: Option<usize>,
    /// Score threshold for keeping extra NPs [default: -1.5]
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// NP scorer: normalized or sum [default: normalized]
    #[arg(long)]
    pub np_scorer: Option<String>,
    /// Longest generated NP [default: 7]
    #[arg(long)]
    pub max_np_len: Option<usize>,
    /// Most slots in a generated sentence [default: 20]
    #[arg(long)]
    pub max_as_len: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug)]
pub enum CliError {
    Core(phicap::Error),
    Usage(String),
    /// Work was saved but the run did not succeed.
    Failed(String),
}

impl From<phicap::Error> for CliError {
    fn from(e: phicap::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            _ => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Core(e) if e.is_io() => ("io", e.to_string()),
            CliError::Core(e) => ("validation", e.to_string()),
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Failed(m) => ("failed", m.clone()),
        };
        serde_json::json!({ "error": kind, "message": message, "exit_code": self.exit_code() })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
