//! Backpropagation through both decoders and the phrase-vector link.

use rayon::prelude::*;

use super::forward::{DecoderRun, Dropout, EncodedSlot};
use super::indicator::{indicator_registry, IndicatorLoss};
use super::loss::{indicator_weights, LossConfig, Perplexity};
use super::objective::{batch_scale, example_loss, forward_example, Example, ExampleForward, Objective};
use super::params::{DecoderParams, PhiParams};
use crate::error::Result;
use crate::neural::lstm::backward_unchecked;
use crate::neural::rng::substream;
use crate::neural::ParamSet;

/// Examples per gradient shard. Fixed so the summation order, and therefore
/// the result, does not depend on the thread count.
const SHARD: usize = 8;

/// Purpose tag for dropout substreams.
const DROPOUT_STREAM: u64 = 0xD5;

/// Reverse pass over one decoder unroll. `extra_dh[s]` is added to the
/// hidden-state gradient at step `s`. Returns the input gradient for every
/// phrase-vector input, keyed by phrase index.
fn backward_decoder(
    dec: &DecoderParams,
    g: &mut DecoderParams,
    run: &DecoderRun,
    feature: &[f64],
    logit_scale: f64,
    extra_dh: &[Vec<f64>],
) -> Vec<(usize, Vec<f64>)> {
    let k = dec.x_start.len();
    let mut dh_next = vec![0.0; k];
    let mut dc_next = vec![0.0; k];
    let mut phrase_grads = Vec::new();

    for s in (0..run.caches.len()).rev() {
        let mut dh = dh_next;
        for (a, b) in dh.iter_mut().zip(&extra_dh[s]) {
            *a += b;
        }
        if s >= 1 {
            let j = s - 1;
            let mut dlogits = run.probs[j].clone();
            dlogits[run.targets[j]] -= 1.0;
            dlogits.iter_mut().for_each(|v| *v *= logit_scale);
            let h = &run.hidden[s];
            let mask = run.masks[j].as_deref();
            let h_out: Vec<f64> = match mask {
                Some(m) => h.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => h.clone(),
            };
            g.w_out.add_outer(&dlogits, &h_out);
            for (b, d) in g.b_out.iter_mut().zip(&dlogits) {
                *b += d;
            }
            let mut dh_out = vec![0.0; k];
            dec.w_out.matvec_t_acc(&dlogits, &mut dh_out);
            match mask {
                Some(m) => dh.iter_mut().zip(dh_out.iter().zip(m)).for_each(|(a, (d, m))| *a += d * m),
                None => dh.iter_mut().zip(&dh_out).for_each(|(a, d)| *a += d),
            }
        }

        let step = backward_unchecked(&dec.lstm, &run.caches[s], &dh, &dc_next, &mut g.lstm);
        dh_next = step.h_prev;
        dc_next = step.c_prev;
        match s {
            0 => {
                g.w_img.add_outer(&step.x, feature);
                for (b, d) in g.b_img.iter_mut().zip(&step.x) {
                    *b += d;
                }
            }
            1 => {
                for (b, d) in g.x_start.iter_mut().zip(&step.x) {
                    *b += d;
                }
            }
            _ => match run.inputs[s - 2] {
                EncodedSlot::Word(id) => g.w_embed.add_to_column(id, &step.x),
                EncodedSlot::Phrase(i) => phrase_grads.push((i, step.x)),
            },
        }
    }
    phrase_grads
}

/// Accumulates `scale ·` ∂(example data terms)/∂θ into `grads`. `scale` is
/// the batch's `1/Q`. Regularisation is not included.
pub fn backprop_example(
    params: &PhiParams,
    ex: &Example,
    fwd: &ExampleForward,
    cfg: &LossConfig,
    indicator: &dyn IndicatorLoss,
    scale: f64,
    grads: &mut PhiParams,
) {
    let k = params.w_indicator.len();
    let logit_scale = scale / std::f64::consts::LN_2;
    let mut dz: Vec<Vec<f64>> = vec![vec![0.0; k]; fwd.phrases.len()];

    if let Some(sent) = &fwd.sentence {
        let steps = sent.run.caches.len();
        let mut extra = vec![vec![0.0; k]; steps];
        let weights = indicator_weights(&sent.labels, cfg);
        for (t, (&y, kappa)) in sent.labels.iter().zip(weights).enumerate() {
            let s = t + 1;
            let a = 1.0 - y * sent.scores[t];
            let coef = scale * kappa * indicator.derivative(a) * -y;
            if coef == 0.0 {
                continue;
            }
            for j in 0..k {
                extra[s][j] += coef * params.w_indicator[j];
                grads.w_indicator[j] += coef * sent.run.hidden[s][j];
            }
        }
        for (i, g) in backward_decoder(
            &params.sentence,
            &mut grads.sentence,
            &sent.run,
            &ex.feature,
            logit_scale,
            &extra,
        ) {
            for (a, b) in dz[i].iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    for (p, dz) in fwd.phrases.iter().zip(dz) {
        let steps = p.run.caches.len();
        let mut extra = vec![vec![0.0; k]; steps];
        extra[steps - 1] = dz;
        backward_decoder(&params.phrase, &mut grads.phrase, &p.run, &ex.feature, logit_scale, &extra);
    }
}

/// Dropout settings for one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutPlan {
    pub rate: f64,
    pub seed: u64,
    /// Distinguishes optimisation steps so masks differ between batches.
    pub step: u64,
}

#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub grads: PhiParams,
    /// Cost of the batch as seen by this pass (with dropout, if any).
    pub cost: f64,
    pub perplexity: Perplexity,
}

/// Gradient of the batch cost. Examples are processed in parallel in fixed
/// shards and the shard sums are added in order, so the result is identical
/// for any thread count.
pub fn batch_gradient(
    params: &PhiParams,
    batch: &[&Example],
    cfg: &LossConfig,
    objective: Objective,
    end: usize,
    dropout: Option<DropoutPlan>,
) -> Result<BatchGradient> {
    let indicator = indicator_registry().create(&cfg.indicator)?;
    let scale = batch_scale(batch, objective);
    let shards: Vec<Result<(PhiParams, Perplexity, f64)>> = batch
        .par_chunks(SHARD)
        .enumerate()
        .map(|(c, chunk)| {
            let mut g = params.zeroed();
            let mut ppl = Perplexity::default();
            let mut ind = 0.0;
            for (i, ex) in chunk.iter().enumerate() {
                let mut d = dropout.filter(|d| d.rate > 0.0).map(|d| Dropout {
                    rate: d.rate,
                    rng: substream(d.seed ^ DROPOUT_STREAM, d.step, (c * SHARD + i) as u64),
                });
                let fwd = forward_example(params, ex, objective, end, d.as_mut())?;
                let l = example_loss(&fwd, cfg, indicator.as_ref());
                ppl.merge(l.perplexity);
                ind += l.indication;
                backprop_example(params, ex, &fwd, cfg, indicator.as_ref(), scale, &mut g);
            }
            Ok((g, ppl, ind))
        })
        .collect();

    let mut grads = params.zeroed();
    let mut perplexity = Perplexity::default();
    let mut indication = 0.0;
    for shard in shards {
        let (g, p, i) = shard?;
        grads.add_scaled(&g, 1.0);
        perplexity.merge(p);
        indication += i;
    }
    if cfg.lambda != 0.0 {
        grads.add_scaled(params, 2.0 * cfg.lambda);
    }
    let cost = scale * (perplexity.nll_bits + indication) + cfg.lambda * params.squared_norm();
    Ok(BatchGradient {
        grads,
        cost,
        perplexity,
    })
}
