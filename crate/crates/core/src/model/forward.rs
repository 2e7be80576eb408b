//! Forward passes of the phrase decoder and the abbreviated-sentence decoder.
//!
//! Both decoders unroll the same way: the embedded image at step −1, the
//! start token at step 0, then one input per word (or per phrase, for the
//! sentence decoder). Predictions are read from steps 0..=last; step −1
//! carries no loss.

use rand::Rng;

use super::params::{DecoderParams, PhiParams};
use crate::error::{check_dim, Error, Result};
use crate::neural::lstm::{step_cached, StepCache};
use crate::neural::rng::DetRng;
use crate::neural::{dot, softmax, LstmState};

/// Encoded abbreviated-sentence position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodedSlot {
    Word(usize),
    Phrase(usize),
}

/// Inverted dropout on the hidden state feeding the softmax head.
pub struct Dropout {
    pub rate: f64,
    pub rng: DetRng,
}

impl Dropout {
    fn mask(&mut self, k: usize) -> Vec<f64> {
        let keep = 1.0 - self.rate;
        (0..k)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect()
    }
}

impl DecoderParams {
    pub fn embed_image(&self, feature: &[f64]) -> Vec<f64> {
        let mut x = self.b_img.clone();
        self.w_img.matvec_acc(feature, &mut x);
        x
    }

    pub fn embed_word(&self, id: usize) -> Vec<f64> {
        self.w_embed.column(id)
    }

    pub fn step(&self, x: &[f64], prev: &LstmState) -> LstmState {
        step_cached(&self.lstm, x, prev).0
    }

    /// State after the image step and the start-token step.
    pub fn initial_state(&self, feature: &[f64]) -> LstmState {
        let k = self.x_start.len();
        let s = self.step(&self.embed_image(feature), &LstmState::zeros(k));
        self.step(&self.x_start, &s)
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        let mut l = self.b_out.clone();
        self.w_out.matvec_acc(h, &mut l);
        l
    }

    pub fn probs(&self, h: &[f64]) -> Vec<f64> {
        softmax(&self.logits(h))
    }
}

/// Cached unroll of one decoder over one sequence.
#[derive(Clone, Debug)]
pub struct DecoderRun {
    /// One cache per LSTM step: index 0 is the image step, 1 the start token,
    /// `s >= 2` the `(s-1)`-th input.
    pub caches: Vec<StepCache>,
    pub hidden: Vec<Vec<f64>>,
    /// `probs[j]` is the prediction made at step `j + 1` (i.e. t = j).
    pub probs: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
    pub masks: Vec<Option<Vec<f64>>>,
    pub inputs: Vec<EncodedSlot>,
}

impl DecoderRun {
    /// Probability assigned to the target at each prediction step.
    pub fn target_probs(&self) -> Vec<f64> {
        self.probs
            .iter()
            .zip(&self.targets)
            .map(|(p, &t)| p[t])
            .collect()
    }

    pub fn num_predictions(&self) -> usize {
        self.probs.len()
    }
}

fn run_decoder(
    dec: &DecoderParams,
    feature: &[f64],
    inputs: &[EncodedSlot],
    phrase_vectors: &[Vec<f64>],
    targets: Vec<usize>,
    mut dropout: Option<&mut Dropout>,
) -> DecoderRun {
    let k = dec.x_start.len();
    let mut caches = Vec::with_capacity(inputs.len() + 2);
    let mut hidden = Vec::with_capacity(inputs.len() + 2);
    let mut probs = Vec::with_capacity(inputs.len() + 1);
    let mut masks = Vec::with_capacity(inputs.len() + 1);

    let mut push_step = |x: &[f64], state: &LstmState, predict: bool| -> LstmState {
        let (next, cache) = step_cached(&dec.lstm, x, state);
        caches.push(cache);
        hidden.push(next.h.clone());
        if predict {
            let mask = dropout.as_deref_mut().map(|d| d.mask(k));
            let h_out: Vec<f64> = match &mask {
                Some(m) => next.h.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => next.h.clone(),
            };
            probs.push(dec.probs(&h_out));
            masks.push(mask);
        }
        next
    };

    let mut state = push_step(&dec.embed_image(feature), &LstmState::zeros(k), false);
    state = push_step(&dec.x_start, &state, true);
    for input in inputs {
        let x = match *input {
            EncodedSlot::Word(id) => dec.embed_word(id),
            EncodedSlot::Phrase(i) => phrase_vectors[i].clone(),
        };
        state = push_step(&x, &state, true);
    }

    DecoderRun {
        caches,
        hidden,
        probs,
        targets,
        masks,
        inputs: inputs.to_vec(),
    }
}

#[derive(Clone, Debug)]
pub struct PhraseForward {
    pub run: DecoderRun,
    /// Compositional vector: hidden state after the NP's last word.
    pub z: Vec<f64>,
}

/// Unrolls the phrase decoder over one NP. Predictions: the first word from
/// the start step, each next word, then `end` after the last word.
pub fn phrase_forward(
    params: &PhiParams,
    feature: &[f64],
    np_ids: &[usize],
    end: usize,
    dropout: Option<&mut Dropout>,
) -> Result<PhraseForward> {
    let dims = params.dims();
    check_dim("image feature", dims.feature, feature.len())?;
    if np_ids.is_empty() {
        return Err(Error::Contract("noun phrase must not be empty".into()));
    }
    if let Some(&bad) = np_ids.iter().chain([&end]).find(|&&id| id >= dims.vocab) {
        return Err(Error::Contract(format!(
            "token id {bad} outside vocabulary of {}",
            dims.vocab
        )));
    }
    let inputs: Vec<EncodedSlot> = np_ids.iter().map(|&id| EncodedSlot::Word(id)).collect();
    let mut targets = np_ids.to_vec();
    targets.push(end);
    let run = run_decoder(&params.phrase, feature, &inputs, &[], targets, dropout);
    let z = run.hidden.last().cloned().unwrap_or_default();
    Ok(PhraseForward { run, z })
}

#[derive(Clone, Debug)]
pub struct SentenceForward {
    pub run: DecoderRun,
    /// Indicator score `h_t · w_indicator` at t = 0..=N.
    pub scores: Vec<f64>,
    /// +1 where the next input is a phrase, −1 where it is a word; t = 0..N-1.
    pub labels: Vec<f64>,
}

/// Unrolls the sentence decoder. Word slots are embedded; phrase slot `i`
/// feeds `phrase_vectors[i]`. The target at each step is the next word, the
/// last word of the next phrase, or `end` after the final slot.
pub fn as_forward(
    params: &PhiParams,
    feature: &[f64],
    slots: &[EncodedSlot],
    phrase_vectors: &[Vec<f64>],
    phrase_last_words: &[usize],
    end: usize,
    dropout: Option<&mut Dropout>,
) -> Result<SentenceForward> {
    let dims = params.dims();
    check_dim("image feature", dims.feature, feature.len())?;
    let n_phrase_slots = slots
        .iter()
        .filter(|s| matches!(s, EncodedSlot::Phrase(_)))
        .count();
    if n_phrase_slots != phrase_vectors.len() || phrase_vectors.len() != phrase_last_words.len() {
        return Err(Error::Contract(format!(
            "{n_phrase_slots} phrase slots but {} phrase vectors and {} last words",
            phrase_vectors.len(),
            phrase_last_words.len()
        )));
    }
    let mut targets = Vec::with_capacity(slots.len() + 1);
    let mut labels = Vec::with_capacity(slots.len());
    for slot in slots {
        match *slot {
            EncodedSlot::Word(id) => {
                targets.push(id);
                labels.push(-1.0);
            }
            EncodedSlot::Phrase(i) => {
                let last = *phrase_last_words.get(i).ok_or_else(|| {
                    Error::Contract(format!("phrase slot {i} has no phrase vector"))
                })?;
                check_dim("phrase vector", dims.hidden, phrase_vectors[i].len())?;
                targets.push(last);
                labels.push(1.0);
            }
        }
    }
    targets.push(end);
    if let Some(&bad) = targets.iter().find(|&&id| id >= dims.vocab) {
        return Err(Error::Contract(format!(
            "token id {bad} outside vocabulary of {}",
            dims.vocab
        )));
    }
    let run = run_decoder(&params.sentence, feature, slots, phrase_vectors, targets, dropout);
    let scores = run.hidden[1..]
        .iter()
        .map(|h| dot(h, &params.w_indicator))
        .collect();
    Ok(SentenceForward {
        run,
        scores,
        labels,
    })
}
