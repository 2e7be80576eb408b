//! End-to-end glue: corpus records → chunked pairs → stage-1 training →
//! refinement → joint training.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{truncate, Checkpoint, CorpusRecord, FeatureTable, Splits, TruncationPolicy, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::InferenceConfig;
use crate::model::{Dims, Example, LossConfig, PhiParams};
use crate::phrasing::{chunk_with_stats, AsNpPair, RelationCounts};
use crate::train::{refine_corpus, train_full, train_stage1, LogEntry, RefineReport, TrainConfig, TrainOutcome};

/// Every knob of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub truncation: TruncationPolicy,
    pub loss: LossConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.inference.validate()?;
        self.truncation.validate()?;
        if self.loss.lambda < 0.0 || self.loss.kappa_phrase < 0.0 || self.loss.kappa_word < 0.0 {
            return Err(Error::Contract("loss weights must be non-negative".into()));
        }
        crate::model::indicator_registry().create(&self.loss.indicator).map(|_| ())
    }
}

pub type Pairs = Vec<(String, AsNpPair)>;

/// Normalises and chunks records, in input order.
pub fn chunk_records(records: &[CorpusRecord]) -> Result<(Pairs, RelationCounts)> {
    let mut pairs = Vec::with_capacity(records.len());
    let mut counts = RelationCounts::new();
    for r in records {
        let n = r.normalized()?;
        let out = chunk_with_stats(&n.tokens, &n.triplets)
            .map_err(|e| Error::InvalidRecord(format!("{}: {e}", r.image_id)))?;
        for (rel, c) in out.relations {
            *counts.entry(rel).or_default() += c;
        }
        pairs.push((r.image_id.clone(), out.pair));
    }
    Ok((pairs, counts))
}

/// Train and validation records only. Test-split records are dropped here,
/// before any of their content is looked at.
pub fn training_records(records: Vec<CorpusRecord>, splits: &Splits) -> (Vec<CorpusRecord>, Vec<CorpusRecord>) {
    let train: BTreeSet<&str> = splits.train_set();
    let val: BTreeSet<&str> = splits.val_set();
    let mut t = Vec::new();
    let mut v = Vec::new();
    for r in records {
        if train.contains(r.image_id.as_str()) {
            t.push(r);
        } else if val.contains(r.image_id.as_str()) {
            v.push(r);
        }
    }
    (t, v)
}

pub fn build_vocab(pairs: &[(String, AsNpPair)], min_count: usize) -> Result<Vocabulary> {
    let captions: Vec<Vec<String>> = pairs.iter().map(|(_, p)| p.flatten()).collect();
    Vocabulary::build(&captions, min_count)
}

pub fn encode_pairs(pairs: &[(String, AsNpPair)], features: &FeatureTable, vocab: &Vocabulary) -> Result<Vec<Example>> {
    let mut cache: std::collections::BTreeMap<&str, Arc<[f64]>> = Default::default();
    pairs
        .iter()
        .map(|(id, pair)| {
            let feat = match cache.get(id.as_str()) {
                Some(f) => f.clone(),
                None => {
                    let f: Arc<[f64]> = features
                        .get(id)
                        .ok_or_else(|| Error::InvalidRecord(format!("no features for image {id}")))?
                        .into();
                    cache.insert(id, f.clone());
                    f
                }
            };
            Example::encode(id, feat, pair, vocab)
        })
        .collect()
}

/// Chunked, truncated train/validation pairs and the training vocabulary.
pub struct Prepared {
    pub vocab: Vocabulary,
    pub train: Pairs,
    pub val: Pairs,
    pub chunk_stats: RelationCounts,
}

/// Drops test records, chunks and truncates the rest, and builds the
/// vocabulary from the training pairs.
pub fn prepare(records: Vec<CorpusRecord>, splits: &Splits, cfg: &PipelineConfig) -> Result<Prepared> {
    cfg.validate()?;
    splits.validate()?;
    let (train_recs, val_recs) = training_records(records, splits);
    if train_recs.is_empty() {
        return Err(Error::InvalidRecord("no training records".into()));
    }
    let (train, chunk_stats) = chunk_records(&train_recs)?;
    let (val, _) = chunk_records(&val_recs)?;
    let cap = |ps: Pairs| -> Pairs {
        ps.into_iter()
            .map(|(id, p)| (id, truncate(&p, &cfg.truncation)))
            .collect()
    };
    let (train, val) = (cap(train), cap(val));
    let vocab = build_vocab(&train, cfg.train.min_count)?;
    Ok(Prepared {
        vocab,
        train,
        val,
        chunk_stats,
    })
}

/// Initialises a model and trains its phrase decoder on the chunked pairs.
pub fn run_stage1(
    prepared: &Prepared,
    features: &FeatureTable,
    cfg: &PipelineConfig,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    let dims = Dims {
        hidden: cfg.train.hidden_size,
        feature: features.dim(),
        vocab: prepared.vocab.len(),
    };
    let init = PhiParams::init(dims, cfg.train.init_scale, cfg.train.seed);
    let train = encode_pairs(&prepared.train, features, &prepared.vocab)?;
    let val = encode_pairs(&prepared.val, features, &prepared.vocab)?;
    train_stage1(init, &train, &val, &cfg.train, &cfg.loss, prepared.vocab.end(), log)
}

/// Joint training on refined pairs, warm-started from `params`.
pub fn run_stage2(
    params: PhiParams,
    vocab: &Vocabulary,
    train: &[(String, AsNpPair)],
    val: &[(String, AsNpPair)],
    features: &FeatureTable,
    cfg: &PipelineConfig,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    let ex_train = encode_pairs(train, features, vocab)?;
    let ex_val = encode_pairs(val, features, vocab)?;
    train_full(params, &ex_train, &ex_val, &cfg.train, &cfg.loss, vocab.end(), log)
}

pub struct PipelineOutput {
    pub vocab: Vocabulary,
    pub stage1: TrainOutcome,
    pub full: TrainOutcome,
    pub chunk_stats: RelationCounts,
    pub refined_train: Pairs,
    pub refine_report: RefineReport,
}

/// Checkpoint of `params` with the stage name and selected epoch in its meta.
pub fn checkpoint_for(params: &PhiParams, vocab: &Vocabulary, stage: &str, epoch: usize) -> Checkpoint {
    let mut c = Checkpoint::new(params.clone(), vocab.clone());
    c.meta.insert("stage".into(), stage.into());
    c.meta.insert("epoch".into(), epoch.into());
    c
}

impl PipelineOutput {
    pub fn checkpoint(&self) -> Checkpoint {
        checkpoint_for(&self.full.params, &self.vocab, "full", self.full.selected_epoch)
    }
}

/// Stage 1 on the chunked corpus, refinement with the stage-1 phrase
/// decoder, then joint training warm-started from stage 1.
pub fn run_pipeline(
    records: Vec<CorpusRecord>,
    features: &FeatureTable,
    splits: &Splits,
    cfg: &PipelineConfig,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<PipelineOutput> {
    let prepared = prepare(records, splits, cfg)?;
    let stage1 = run_stage1(&prepared, features, cfg, log)?;
    if let Some(reason) = &stage1.aborted {
        return Err(Error::NonFinite(format!("phrase training diverged: {reason}")));
    }
    let inference = cfg.inference.clone().with_truncation(&cfg.truncation);
    let (refined_train, refine_report) =
        refine_corpus(&stage1.params, &prepared.vocab, &prepared.train, features, &inference, &cfg.truncation)?;
    let (refined_val, _) =
        refine_corpus(&stage1.params, &prepared.vocab, &prepared.val, features, &inference, &cfg.truncation)?;
    let full = run_stage2(
        stage1.params.clone(),
        &prepared.vocab,
        &refined_train,
        &refined_val,
        features,
        cfg,
        log,
    )?;

    Ok(PipelineOutput {
        vocab: prepared.vocab,
        stage1,
        full,
        chunk_stats: prepared.chunk_stats,
        refined_train,
        refine_report,
    })
}
