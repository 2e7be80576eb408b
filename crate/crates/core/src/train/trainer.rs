use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::rmsprop::{apply_mask, clip_gradients, rmsprop_step, OptState};
use crate::corpus::{truncate, FeatureTable, TruncationPolicy, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::{filter_nps, generate_nps, scorer_registry, InferenceConfig};
use crate::model::{batch_cost, batch_gradient, DropoutPlan, Example, LossConfig, Objective, PhiParams};
use crate::neural::rng::substream;
use crate::phrasing::{refine, AsNpPair, RefinementContext};

const SHUFFLE_STREAM: u64 = 0x5F;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: String,
    pub epoch: usize,
    pub batch: usize,
    pub cost: f64,
    /// Set on the last batch of each epoch when a validation set exists.
    pub val_log2ppl: Option<f64>,
    pub wallclock: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    /// Mean batch cost over the epoch (with dropout, as trained).
    pub mean_cost: f64,
    pub val_log2ppl: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PhiParams,
    /// Epoch whose parameters were returned (0 = initialisation).
    pub selected_epoch: usize,
    pub history: Vec<EpochSummary>,
    /// Set when training stopped on a non-finite cost or gradient; `params`
    /// are then the last good ones.
    pub aborted: Option<String>,
}

/// Validation perplexity in bits per prediction under `objective`.
pub fn validation_log2ppl(
    params: &PhiParams,
    val: &[Example],
    objective: Objective,
    end: usize,
) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let batch: Vec<&Example> = val.iter().collect();
    let cfg = LossConfig::default();
    let c = batch_cost(params, &batch, &cfg, objective, end)?;
    Ok(Some(c.perplexity.log2_ppl()))
}

/// Minibatch RMSprop on `objective`. In the phrase objective only
/// phrase-decoder tensors are updated.
#[allow(clippy::too_many_arguments)]
pub fn train_model(
    mut params: PhiParams,
    train: &[Example],
    val: &[Example],
    objective: Objective,
    epochs: usize,
    cfg: &TrainConfig,
    loss: &LossConfig,
    end: usize,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let stage = match objective {
        Objective::Phrase => "phrase",
        Objective::Full => "full",
    };
    let stream = cfg.seed ^ (objective as u64).wrapping_mul(0x9E37_79B9);
    let mask = (objective == Objective::Phrase).then(|| params.phrase_mask());
    let mut opt = OptState::new(&params);
    let started = Instant::now();

    let mut best = (validation_log2ppl(&params, val, objective, end)?, 0, params.clone());
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;

    for epoch in 1..=epochs {
        order.sort_unstable();
        order.shuffle(&mut substream(stream, SHUFFLE_STREAM, epoch as u64));
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        let mut cost_sum = 0.0;
        for (bi, idx) in batches.iter().enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
            let plan = DropoutPlan {
                rate: cfg.dropout_rate,
                seed: stream,
                step,
            };
            step += 1;
            let bg = batch_gradient(&params, &batch, loss, objective, end, Some(plan))?;
            if !bg.cost.is_finite() {
                return Ok(abort(best, history, format!("cost {} at epoch {epoch} batch {bi}", bg.cost), params));
            }
            let mut grads = bg.grads;
            if let Some(m) = &mask {
                apply_mask(&mut grads, m);
            }
            clip_gradients(&mut grads, cfg.clip_norm);
            let before = params.clone();
            if let Err(e) = rmsprop_step(&mut params, &grads, &mut opt, cfg) {
                return match e {
                    Error::NonFinite(m) => Ok(abort(best, history, m, before)),
                    other => Err(other),
                };
            }
            cost_sum += bg.cost;

            let last = bi + 1 == batches.len();
            let val_ppl = if last {
                validation_log2ppl(&params, val, objective, end)?
            } else {
                None
            };
            log(&LogEntry {
                stage: stage.into(),
                epoch,
                batch: bi,
                cost: bg.cost,
                val_log2ppl: val_ppl,
                wallclock: started.elapsed().as_secs_f64(),
            });
            if last {
                history.push(EpochSummary {
                    epoch,
                    mean_cost: cost_sum / batches.len() as f64,
                    val_log2ppl: val_ppl,
                });
                let better = match (val_ppl, best.0) {
                    (Some(v), Some(b)) => v < b,
                    _ => true,
                };
                if !cfg.keep_best_val || better {
                    best = (val_ppl, epoch, params.clone());
                }
            }
        }
    }

    Ok(TrainOutcome {
        params: best.2,
        selected_epoch: best.1,
        history,
        aborted: None,
    })
}

fn abort(
    best: (Option<f64>, usize, PhiParams),
    history: Vec<EpochSummary>,
    reason: String,
    last_good: PhiParams,
) -> TrainOutcome {
    let (params, selected_epoch) = if best.1 > 0 {
        (best.2, best.1)
    } else {
        (last_good, history.len())
    };
    TrainOutcome {
        params,
        selected_epoch,
        history,
        aborted: Some(reason),
    }
}

/// Stage 1: the phrase decoder alone, over every chunked NP.
pub fn train_stage1(
    params: PhiParams,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    loss: &LossConfig,
    end: usize,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    train_model(params, train, val, Objective::Phrase, cfg.stage1_epochs, cfg, loss, end, log)
}

/// Stage 2: both decoders jointly, warm-started from `params`.
pub fn train_full(
    params: PhiParams,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    loss: &LossConfig,
    end: usize,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    train_model(params, train, val, Objective::Full, cfg.epochs, cfg, loss, end, log)
}

/// Refinement statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub pairs: usize,
    pub changed: usize,
    pub truncated: usize,
}

/// Generates NPs for every image with the stage-1 phrase decoder, builds that
/// image's first/last-word sets from the filtered candidates, refines each
/// of its pairs, then truncates.
pub fn refine_corpus(
    params: &PhiParams,
    vocab: &Vocabulary,
    pairs: &[(String, AsNpPair)],
    features: &FeatureTable,
    cfg: &InferenceConfig,
    policy: &TruncationPolicy,
) -> Result<(Vec<(String, AsNpPair)>, RefineReport)> {
    use rayon::prelude::*;

    cfg.validate()?;
    let scorer = scorer_registry().create(&cfg.np_scorer)?;
    let ids: Vec<&str> = {
        let mut v: Vec<&str> = pairs.iter().map(|(id, _)| id.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let contexts: BTreeMap<&str, RefinementContext> = ids
        .par_iter()
        .map(|&id| {
            let feat = features
                .get(id)
                .ok_or_else(|| Error::InvalidRecord(format!("no features for image {id}")))?;
            let nps = filter_nps(&generate_nps(params, vocab, feat, cfg, scorer.as_ref()), cfg.threshold);
            let words: Vec<Vec<&str>> = nps
                .iter()
                .map(|c| c.tokens.iter().map(|&t| vocab.decode(t)).collect())
                .collect();
            Ok((id, RefinementContext::from_phrases(&words)))
        })
        .collect::<Result<_>>()?;

    let mut report = RefineReport::default();
    let mut out = Vec::with_capacity(pairs.len());
    for (id, pair) in pairs {
        let refined = refine(pair, &contexts[id.as_str()]);
        report.pairs += 1;
        report.changed += usize::from(&refined != pair);
        report.truncated += usize::from(policy.affects(&refined));
        out.push((id.clone(), truncate(&refined, policy)));
    }
    Ok((out, report))
}
