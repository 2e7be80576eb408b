//! Two-step caption generation: NP candidates first, then the sentence.

pub mod caption;
pub mod config;
pub mod nps;

pub use caption::{caption_all, caption_image, generate_caption, Caption, CaptionSlot, GeneratedCaption};
pub use config::InferenceConfig;
pub use nps::{
    filter_nps, generate_nps, match_phrases, scorer_registry, NormalizedScorer, NpCandidate, NpScorer,
    SumScorer,
};
