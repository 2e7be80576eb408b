use serde::{Deserialize, Serialize};

use super::forward::{PhraseForward, SentenceForward};
use super::indicator::{IndicatorLoss, DEFAULT_INDICATOR};

/// Target probabilities below this are clamped before taking the log; each
/// clamp is counted so callers can surface it.
pub const PROB_FLOOR: f64 = 1e-30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// L2 weight on all parameters.
    pub lambda: f64,
    /// Total weight of the phrase-labelled indicator steps of one sentence.
    pub kappa_phrase: f64,
    /// Total weight of the word-labelled indicator steps of one sentence.
    pub kappa_word: f64,
    pub indicator: String,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            kappa_phrase: 1.0,
            kappa_word: 1.0,
            indicator: DEFAULT_INDICATOR.into(),
        }
    }
}

/// Summed negative log2-likelihood over `count` predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Perplexity {
    pub nll_bits: f64,
    pub count: usize,
    pub floored: usize,
}

impl Perplexity {
    pub fn log2_ppl(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.nll_bits / self.count as f64
        }
    }

    pub fn ppl(&self) -> f64 {
        self.log2_ppl().exp2()
    }

    pub fn merge(&mut self, other: Perplexity) {
        self.nll_bits += other.nll_bits;
        self.count += other.count;
        self.floored += other.floored;
    }
}

pub fn perplexity_from_probs<I: IntoIterator<Item = f64>>(target_probs: I) -> Perplexity {
    let mut out = Perplexity::default();
    for p in target_probs {
        if p < PROB_FLOOR {
            out.floored += 1;
        }
        out.nll_bits -= p.max(PROB_FLOOR).log2();
        out.count += 1;
    }
    out
}

/// Joint perplexity of a sentence: every sentence-decoder prediction plus
/// every phrase-decoder prediction (including each phrase's END).
pub fn sentence_perplexity(phrases: &[PhraseForward], sentence: &SentenceForward) -> Perplexity {
    let mut out = perplexity_from_probs(sentence.run.target_probs());
    for p in phrases {
        out.merge(perplexity_from_probs(p.run.target_probs()));
    }
    out
}

/// Per-step weights: `kappa_phrase` shared evenly across phrase-labelled
/// steps and `kappa_word` across word-labelled steps.
pub fn indicator_weights(labels: &[f64], cfg: &LossConfig) -> Vec<f64> {
    let n_phrase = labels.iter().filter(|&&y| y > 0.0).count();
    let n_word = labels.len() - n_phrase;
    labels
        .iter()
        .map(|&y| {
            if y > 0.0 {
                cfg.kappa_phrase / n_phrase as f64
            } else {
                cfg.kappa_word / n_word as f64
            }
        })
        .collect()
}

pub fn phrase_indication_loss(
    sentence: &SentenceForward,
    cfg: &LossConfig,
    loss: &dyn IndicatorLoss,
) -> f64 {
    let weights = indicator_weights(&sentence.labels, cfg);
    sentence
        .labels
        .iter()
        .zip(&sentence.scores)
        .zip(weights)
        .map(|((&y, &s), k)| k * loss.value(1.0 - y * s))
        .sum()
}
