//! The two-decoder model: parameters, forward pass, cost and gradients.

pub mod backward;
pub mod forward;
pub mod indicator;
pub mod loss;
pub mod objective;
pub mod params;

pub use backward::{backprop_example, batch_gradient, BatchGradient, DropoutPlan};
pub use forward::{as_forward, phrase_forward, Dropout, EncodedSlot, PhraseForward, SentenceForward};
pub use indicator::{indicator_registry, IndicatorLoss, DEFAULT_INDICATOR};
pub use loss::{perplexity_from_probs, phrase_indication_loss, sentence_perplexity, LossConfig, Perplexity, PROB_FLOOR};
pub use objective::{
    batch_cost, corpus_log2_ppl, forward_example, total_cost, CostBreakdown, Example, Objective,
};
pub use params::{DecoderParams, Dims, PhiParams, INIT_SCALE};
