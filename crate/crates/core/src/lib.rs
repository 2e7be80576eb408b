//! Phrase-based hierarchical LSTM image captioning.
//!
//! Captions are split into an abbreviated sentence and its noun phrases
//! ([`phrasing`]). A phrase decoder generates noun phrases from the image; a
//! second decoder generates the abbreviated sentence, feeding each phrase's
//! final hidden state as a single input ([`model`]). Training lives in
//! [`train`], two-step beam search in [`inference`], and BLEU/ROUGE-L plus
//! caption statistics in [`metrics`].

pub mod corpus;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod phrasing;
pub mod pipeline;
pub mod registry;
pub mod train;

pub use error::{Error, Result};
