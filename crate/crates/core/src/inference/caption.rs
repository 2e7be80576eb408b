//! Sentence-level beam search that splices NP candidates into the
//! abbreviated sentence wherever the indicator predicts a phrase.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::InferenceConfig;
use super::nps::{filter_nps, generate_nps, log2p, rank, scorer_registry, NpCandidate};
use crate::corpus::Vocabulary;
use crate::error::Result;
use crate::model::PhiParams;
use crate::neural::{dot, LstmState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaptionSlot {
    Word(usize),
    /// Index into the NP candidate list.
    Phrase(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Caption {
    pub slots: Vec<CaptionSlot>,
    /// Σ log2 p over sentence steps and the spliced NPs' phrase steps.
    pub log2_sum: f64,
    /// Predictions counted: N + 1 + Σ (L_i + 1).
    pub steps: usize,
}

impl Caption {
    /// S_s = −log2 PPL.
    pub fn score(&self) -> f64 {
        self.log2_sum / self.steps as f64
    }

    pub fn words(&self, nps: &[NpCandidate]) -> Vec<usize> {
        let mut out = Vec::new();
        for s in &self.slots {
            match *s {
                CaptionSlot::Word(w) => out.push(w),
                CaptionSlot::Phrase(i) => out.extend(&nps[i].tokens),
            }
        }
        out
    }

    fn key(&self, vocab_len: usize) -> Vec<usize> {
        self.slots
            .iter()
            .map(|s| match *s {
                CaptionSlot::Word(w) => w,
                CaptionSlot::Phrase(i) => vocab_len + i,
            })
            .collect()
    }
}

struct Hyp {
    caption: Caption,
    state: LstmState,
}

enum Input {
    Word(usize),
    Phrase(usize),
    End,
}

/// Beam search of width b_s on the sentence decoder. At a step whose
/// indicator score is positive, each of the b_s most probable words is
/// replaced by every NP candidate ending in it; words with no such NP are
/// dropped. If nothing matches at all, the step is treated as a word step.
/// Hypotheses are ranked by S_s; the best finished one is returned.
pub fn generate_caption(
    params: &PhiParams,
    vocab: &Vocabulary,
    feature: &[f64],
    nps: &[NpCandidate],
    cfg: &InferenceConfig,
) -> Caption {
    let dec = &params.sentence;
    let end = vocab.end();
    let v = vocab.len();
    let mut live = vec![Hyp {
        caption: Caption {
            slots: Vec::new(),
            log2_sum: 0.0,
            steps: 0,
        },
        state: dec.initial_state(feature),
    }];
    let mut finished: Vec<Caption> = Vec::new();

    while !live.is_empty() && finished.len() < cfg.beam_sentence {
        let mut pool: Vec<(usize, Input, Caption)> = Vec::new();
        for (hi, hyp) in live.iter().enumerate() {
            let probs = dec.probs(&hyp.state.h);
            let extend = |slot: Option<CaptionSlot>, extra: f64, steps: usize| {
                let mut c = hyp.caption.clone();
                c.slots.extend(slot);
                c.log2_sum += extra;
                c.steps += steps;
                c
            };
            if hyp.caption.slots.len() >= cfg.max_as_len {
                pool.push((hi, Input::End, extend(None, log2p(probs[end]), 1)));
                continue;
            }

            let mut allowed: Vec<usize> = vocab.word_ids().chain([end]).collect();
            allowed.sort_by(|&a, &b| {
                probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
            });
            allowed.truncate(cfg.beam_sentence);

            let mut spliced = false;
            if dot(&hyp.state.h, &params.w_indicator) > 0.0 {
                for &w in allowed.iter().filter(|&&w| w != end) {
                    for (ci, np) in nps.iter().enumerate().filter(|(_, c)| c.last_word() == w) {
                        let c = extend(
                            Some(CaptionSlot::Phrase(ci)),
                            log2p(probs[w]) + np.log2_sum,
                            1 + np.steps(),
                        );
                        pool.push((hi, Input::Phrase(ci), c));
                        spliced = true;
                    }
                }
            }
            if !spliced {
                for &w in &allowed {
                    if w == end {
                        pool.push((hi, Input::End, extend(None, log2p(probs[end]), 1)));
                    } else {
                        let c = extend(Some(CaptionSlot::Word(w)), log2p(probs[w]), 1);
                        pool.push((hi, Input::Word(w), c));
                    }
                }
            }
        }

        let mut keyed: Vec<(Vec<usize>, bool, (usize, Input, Caption))> = pool
            .into_iter()
            .map(|e| {
                let mut key = e.2.key(v);
                let done = matches!(e.1, Input::End);
                if done {
                    key.push(end);
                }
                (key, done, e)
            })
            .collect();
        keyed.sort_by(|a, b| rank((a.2 .2.score(), &a.0), (b.2 .2.score(), &b.0)));
        keyed.truncate(cfg.beam_sentence - finished.len());

        let mut next = Vec::with_capacity(keyed.len());
        for (_, _, (hi, input, caption)) in keyed {
            let prev = &live[hi].state;
            let x = match input {
                Input::End => {
                    finished.push(caption);
                    continue;
                }
                Input::Word(w) => dec.embed_word(w),
                Input::Phrase(ci) => nps[ci].z.clone(),
            };
            next.push(Hyp {
                state: dec.step(&x, prev),
                caption,
            });
        }
        live = next;
    }

    finished
        .into_iter()
        .min_by(|a, b| rank((a.score(), &a.key(v)), (b.score(), &b.key(v))))
        .expect("at least one hypothesis finishes")
}

/// One generated caption in output form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCaption {
    pub image_id: String,
    pub caption: String,
    pub score: f64,
    pub nps_used: Vec<String>,
}

/// Full two-step generation for one image: NP beam, filter, sentence beam.
pub fn caption_image(
    params: &PhiParams,
    vocab: &Vocabulary,
    image_id: &str,
    feature: &[f64],
    cfg: &InferenceConfig,
) -> Result<GeneratedCaption> {
    cfg.validate()?;
    let scorer = scorer_registry().create(&cfg.np_scorer)?;
    let all = generate_nps(params, vocab, feature, cfg, scorer.as_ref());
    let nps = filter_nps(&all, cfg.threshold);
    let cap = generate_caption(params, vocab, feature, &nps, cfg);
    let words: Vec<&str> = cap.words(&nps).iter().map(|&w| vocab.decode(w)).collect();
    let nps_used = cap
        .slots
        .iter()
        .filter_map(|s| match *s {
            CaptionSlot::Phrase(i) => Some(nps[i].text(vocab)),
            CaptionSlot::Word(_) => None,
        })
        .collect();
    Ok(GeneratedCaption {
        image_id: image_id.to_string(),
        caption: words.join(" "),
        score: cap.score(),
        nps_used,
    })
}

/// Captions for many images in parallel; output order follows the input.
pub fn caption_all(
    params: &PhiParams,
    vocab: &Vocabulary,
    images: &[(String, Vec<f64>)],
    cfg: &InferenceConfig,
) -> Result<Vec<GeneratedCaption>> {
    images
        .par_iter()
        .map(|(id, f)| caption_image(params, vocab, id, f, cfg))
        .collect()
}
