//! Caption evaluation: corpus BLEU, ROUGE-L and uniqueness statistics.

pub mod ngram;
pub mod report;

pub use ngram::{bleu, clipped_matches, corpus_rouge_l, lcs_len, rouge_l};
pub use report::{
    caption_stats, evaluate, least_seen_words, metric_registry, Bleu, CaptionStats, EvalInput, EvalReport,
    Metric, RougeL, DEFAULT_METRICS,
};
