//! NP generation: beam search on the phrase decoder, scoring and filtering.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::config::InferenceConfig;
use crate::corpus::Vocabulary;
use crate::model::{PhiParams, PROB_FLOOR};
use crate::neural::LstmState;
use crate::registry::Registry;

/// Turns a candidate's summed log2 probability into its ranking score.
pub trait NpScorer: Send + Sync {
    fn name(&self) -> &'static str;
    /// `steps` counts the END prediction, i.e. L + 1.
    fn score(&self, log2_sum: f64, steps: usize) -> f64;
}

/// Mean log2 probability per step, END included.
pub struct NormalizedScorer;

impl NpScorer for NormalizedScorer {
    fn name(&self) -> &'static str {
        "normalized"
    }

    fn score(&self, log2_sum: f64, steps: usize) -> f64 {
        log2_sum / steps as f64
    }
}

/// Plain sequence log2 probability; favours short phrases.
pub struct SumScorer;

impl NpScorer for SumScorer {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn score(&self, log2_sum: f64, _steps: usize) -> f64 {
        log2_sum
    }
}

pub fn scorer_registry() -> Registry<dyn NpScorer> {
    let mut r: Registry<dyn NpScorer> = Registry::new("NP scorer");
    r.register("normalized", || Box::new(NormalizedScorer) as Box<dyn NpScorer>)
        .register("sum", || Box::new(SumScorer) as Box<dyn NpScorer>);
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpCandidate {
    /// Word ids, END excluded.
    pub tokens: Vec<usize>,
    /// Σ log2 p over the L words and END.
    pub log2_sum: f64,
    pub score: f64,
    /// Phrase-decoder hidden state after the last word.
    pub z: Vec<f64>,
}

impl NpCandidate {
    pub fn last_word(&self) -> usize {
        *self.tokens.last().expect("candidates are non-empty")
    }

    /// Predictions this NP contributes to a caption's perplexity.
    pub fn steps(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn text(&self, vocab: &Vocabulary) -> String {
        let words: Vec<&str> = self.tokens.iter().map(|&t| vocab.decode(t)).collect();
        words.join(" ")
    }
}

pub(crate) fn log2p(p: f64) -> f64 {
    p.max(PROB_FLOOR).log2()
}

/// Higher value first, then lexicographically smaller ids.
pub(crate) fn rank(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

struct Live {
    tokens: Vec<usize>,
    state: LstmState,
    log2_sum: f64,
}

/// Beam search over the phrase decoder. Each step expands every live
/// hypothesis by every ordinary word and END (END only after at least one
/// word; forced at `max_np_len`), keeps the `b_p − finished` best by summed
/// log2 probability, and retires those that chose END. Candidates come back
/// sorted by the configured score.
pub fn generate_nps(
    params: &PhiParams,
    vocab: &Vocabulary,
    feature: &[f64],
    cfg: &InferenceConfig,
    scorer: &dyn NpScorer,
) -> Vec<NpCandidate> {
    let dec = &params.phrase;
    let end = vocab.end();
    let mut live = vec![Live {
        tokens: Vec::new(),
        state: dec.initial_state(feature),
        log2_sum: 0.0,
    }];
    let mut finished: Vec<NpCandidate> = Vec::new();

    while !live.is_empty() && finished.len() < cfg.beam_phrase {
        // (hypothesis, next token, new sum, key)
        let mut pool: Vec<(usize, usize, f64, Vec<usize>)> = Vec::new();
        for (hi, hyp) in live.iter().enumerate() {
            let probs = dec.probs(&hyp.state.h);
            let mut push = |tok: usize| {
                let mut key = hyp.tokens.clone();
                key.push(tok);
                pool.push((hi, tok, hyp.log2_sum + log2p(probs[tok]), key));
            };
            if hyp.tokens.len() < cfg.max_np_len {
                vocab.word_ids().for_each(&mut push);
            }
            if !hyp.tokens.is_empty() {
                push(end);
            }
        }
        pool.sort_by(|a, b| rank((a.2, &a.3), (b.2, &b.3)));
        pool.truncate(cfg.beam_phrase - finished.len());

        let mut next = Vec::with_capacity(pool.len());
        for (hi, tok, sum, mut key) in pool {
            let hyp = &live[hi];
            if tok == end {
                key.pop();
                finished.push(NpCandidate {
                    score: scorer.score(sum, key.len() + 1),
                    tokens: key,
                    log2_sum: sum,
                    z: hyp.state.h.clone(),
                });
            } else {
                next.push(Live {
                    state: dec.step(&dec.embed_word(tok), &hyp.state),
                    tokens: key,
                    log2_sum: sum,
                });
            }
        }
        live = next;
    }

    finished.sort_by(|a, b| rank((a.score, &a.tokens), (b.score, &b.tokens)));
    finished
}

/// Keeps the best candidate of every last-word group, plus any other
/// candidate scoring at least `threshold`. Input order is preserved.
pub fn filter_nps(candidates: &[NpCandidate], threshold: f64) -> Vec<NpCandidate> {
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, c) in candidates.iter().enumerate() {
        best.entry(c.last_word())
            .and_modify(|b| {
                let cur = &candidates[*b];
                if rank((c.score, &c.tokens), (cur.score, &cur.tokens)) == Ordering::Less {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    candidates
        .iter()
        .enumerate()
        .filter(|(i, c)| best[&c.last_word()] == *i || c.score >= threshold)
        .map(|(_, c)| c.clone())
        .collect()
}

/// For each inferred word, the candidates whose last word it is.
pub fn match_phrases(inferred: &[usize], candidates: &[NpCandidate]) -> Vec<(usize, Vec<usize>)> {
    inferred
        .iter()
        .map(|&w| {
            let hits = candidates
                .iter()
                .enumerate()
                .filter(|(_, c)| c.last_word() == w)
                .map(|(i, _)| i)
                .collect();
            (w, hits)
        })
        .collect()
}
