//! Encoded training examples and the batch cost.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::forward::{as_forward, phrase_forward, Dropout, EncodedSlot, PhraseForward, SentenceForward};
use super::indicator::{indicator_registry, IndicatorLoss};
use super::loss::{perplexity_from_probs, phrase_indication_loss, sentence_perplexity, LossConfig, Perplexity};
use super::params::PhiParams;
use crate::corpus::Vocabulary;
use crate::error::{check_dim, Error, Result};
use crate::neural::ParamSet;
use crate::phrasing::{AsNpPair, Slot};

/// Which terms the cost includes. Stage 1 trains the phrase decoder alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Phrase,
    Full,
}

/// One (image, abbreviated sentence, noun phrases) triple in id space.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub image_id: String,
    pub feature: Arc<[f64]>,
    pub slots: Vec<EncodedSlot>,
    pub phrases: Vec<Vec<usize>>,
}

impl Example {
    pub fn encode(
        image_id: &str,
        feature: Arc<[f64]>,
        pair: &AsNpPair,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        pair.validate()?;
        let slots = pair
            .slots
            .iter()
            .map(|s| match s {
                Slot::Word(w) => EncodedSlot::Word(vocab.encode(w)),
                Slot::Phrase(i) => EncodedSlot::Phrase(*i),
            })
            .collect();
        let phrases = pair.nps.iter().map(|np| vocab.encode_all(&np.tokens)).collect();
        Ok(Self {
            image_id: image_id.to_string(),
            feature,
            slots,
            phrases,
        })
    }

    /// Predictions in the full model: N+1 sentence-side plus L+1 per phrase.
    pub fn num_predictions(&self) -> usize {
        self.slots.len() + 1 + self.num_phrase_predictions()
    }

    pub fn num_phrase_predictions(&self) -> usize {
        self.phrases.iter().map(|p| p.len() + 1).sum()
    }

    pub fn weight(&self, objective: Objective) -> usize {
        match objective {
            Objective::Phrase => self.num_phrase_predictions(),
            Objective::Full => self.num_predictions(),
        }
    }

    pub fn phrase_last_words(&self) -> Vec<usize> {
        self.phrases
            .iter()
            .map(|p| *p.last().expect("validated pairs have non-empty phrases"))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ExampleForward {
    pub phrases: Vec<PhraseForward>,
    pub sentence: Option<SentenceForward>,
}

pub fn forward_example(
    params: &PhiParams,
    ex: &Example,
    objective: Objective,
    end: usize,
    mut dropout: Option<&mut Dropout>,
) -> Result<ExampleForward> {
    check_dim("image feature", params.dims().feature, ex.feature.len())?;
    let mut phrases = Vec::with_capacity(ex.phrases.len());
    for np in &ex.phrases {
        phrases.push(phrase_forward(params, &ex.feature, np, end, dropout.as_deref_mut())?);
    }
    let sentence = match objective {
        Objective::Phrase => None,
        Objective::Full => {
            let z: Vec<Vec<f64>> = phrases.iter().map(|p| p.z.clone()).collect();
            Some(as_forward(
                params,
                &ex.feature,
                &ex.slots,
                &z,
                &ex.phrase_last_words(),
                end,
                dropout,
            )?)
        }
    };
    Ok(ExampleForward { phrases, sentence })
}

/// Unnormalised per-example terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExampleLoss {
    pub perplexity: Perplexity,
    pub indication: f64,
}

pub fn example_loss(
    fwd: &ExampleForward,
    cfg: &LossConfig,
    indicator: &dyn IndicatorLoss,
) -> ExampleLoss {
    match &fwd.sentence {
        Some(s) => ExampleLoss {
            perplexity: sentence_perplexity(&fwd.phrases, s),
            indication: phrase_indication_loss(s, cfg, indicator),
        },
        None => {
            let mut ppl = Perplexity::default();
            for p in &fwd.phrases {
                ppl.merge(perplexity_from_probs(p.run.target_probs()));
            }
            ExampleLoss {
                perplexity: ppl,
                indication: 0.0,
            }
        }
    }
}

/// `1/Q` with `Q = P · Σ_j weight_j`; zero for an empty batch.
pub fn batch_scale(batch: &[&Example], objective: Objective) -> f64 {
    let total: usize = batch.iter().map(|e| e.weight(objective)).sum();
    let q = (batch.len() * total) as f64;
    if q == 0.0 {
        0.0
    } else {
        1.0 / q
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub cost: f64,
    pub data: f64,
    pub regularization: f64,
    pub perplexity: Perplexity,
    pub indication: f64,
}

/// `(1/Q) Σ_j [M_j·log2 PPL_j + C_PI_j] + λ‖θ‖²`, evaluated without dropout.
pub fn batch_cost(
    params: &PhiParams,
    batch: &[&Example],
    cfg: &LossConfig,
    objective: Objective,
    end: usize,
) -> Result<CostBreakdown> {
    if batch.is_empty() {
        return Err(Error::Contract("cost of an empty batch".into()));
    }
    let indicator = indicator_registry().create(&cfg.indicator)?;
    let mut out = CostBreakdown::default();
    for ex in batch {
        let fwd = forward_example(params, ex, objective, end, None)?;
        let l = example_loss(&fwd, cfg, indicator.as_ref());
        out.perplexity.merge(l.perplexity);
        out.indication += l.indication;
    }
    out.data = batch_scale(batch, objective) * (out.perplexity.nll_bits + out.indication);
    out.regularization = cfg.lambda * params.squared_norm();
    out.cost = out.data + out.regularization;
    Ok(out)
}

pub fn total_cost(
    params: &PhiParams,
    batch: &[&Example],
    cfg: &LossConfig,
    end: usize,
) -> Result<f64> {
    Ok(batch_cost(params, batch, cfg, Objective::Full, end)?.cost)
}

/// Corpus-level perplexity of the full model, in bits per prediction.
pub fn corpus_log2_ppl(params: &PhiParams, examples: &[Example], end: usize) -> Result<Perplexity> {
    let mut out = Perplexity::default();
    for ex in examples {
        let fwd = forward_example(params, ex, Objective::Full, end, None)?;
        if let Some(s) = &fwd.sentence {
            out.merge(sentence_perplexity(&fwd.phrases, s));
        }
    }
    Ok(out)
}
