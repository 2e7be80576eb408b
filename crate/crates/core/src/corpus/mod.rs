//! Dataset files, normalisation, vocabulary and length truncation.

pub mod checkpoint;
pub mod io;
pub mod normalize;
pub mod truncate;
pub mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use io::{
    load_chunked, load_corpus, load_features, load_splits, read_json, read_jsonl, save_features,
    write_json, write_jsonl, ChunkedRecord, CorpusRecord, FeatureTable, Splits,
};
pub use normalize::{clean_token, normalize, normalize_parsed};
pub use truncate::{truncate, TruncationPolicy};
pub use vocab::Vocabulary;
