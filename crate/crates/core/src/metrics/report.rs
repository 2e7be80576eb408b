use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ngram::{bleu, corpus_rouge_l};
use crate::registry::Registry;

/// A corpus-level caption metric.
pub trait Metric: Send + Sync {
    fn name(&self) -> String;
    fn compute(&self, candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> f64;
}

pub struct Bleu {
    pub n: usize,
    pub brevity_penalty: bool,
}

impl Metric for Bleu {
    fn name(&self) -> String {
        format!("bleu-{}", self.n)
    }

    fn compute(&self, candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> f64 {
        bleu(candidates, references, self.n, self.brevity_penalty)
    }
}

pub struct RougeL;

impl Metric for RougeL {
    fn name(&self) -> String {
        "rouge-l".into()
    }

    fn compute(&self, candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> f64 {
        corpus_rouge_l(candidates, references)
    }
}

pub const DEFAULT_METRICS: [&str; 5] = ["bleu-1", "bleu-2", "bleu-3", "bleu-4", "rouge-l"];

pub fn metric_registry(brevity_penalty: bool) -> Registry<dyn Metric> {
    let mut r: Registry<dyn Metric> = Registry::new("metric");
    for n in 1..=4 {
        r.register(&format!("bleu-{n}"), move || {
            Box::new(Bleu { n, brevity_penalty }) as Box<dyn Metric>
        });
    }
    r.register("rouge-l", || Box::new(RougeL) as Box<dyn Metric>);
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionStats {
    pub pct_unique: f64,
    pub pct_seen_in_training: f64,
    pub avg_length: f64,
    pub unique_word_count: usize,
}

/// Uniqueness and novelty of generated captions (token sequences).
pub fn caption_stats(generated: &[Vec<String>], training: &[Vec<String>]) -> CaptionStats {
    let n = generated.len();
    if n == 0 {
        return CaptionStats {
            pct_unique: 0.0,
            pct_seen_in_training: 0.0,
            avg_length: 0.0,
            unique_word_count: 0,
        };
    }
    let distinct: BTreeSet<&Vec<String>> = generated.iter().collect();
    let train: BTreeSet<&Vec<String>> = training.iter().collect();
    let seen = generated.iter().filter(|g| train.contains(g)).count();
    let words: BTreeSet<&str> = generated.iter().flatten().map(String::as_str).collect();
    let total_len: usize = generated.iter().map(Vec::len).sum();
    CaptionStats {
        pct_unique: 100.0 * distinct.len() as f64 / n as f64,
        pct_seen_in_training: 100.0 * seen as f64 / n as f64,
        avg_length: total_len as f64 / n as f64,
        unique_word_count: words.len(),
    }
}

/// The `k` generated words with the lowest training count, ascending, ties
/// broken lexicographically. Words absent from training count as 0.
pub fn least_seen_words(
    generated: &[Vec<String>],
    training_counts: &BTreeMap<String, usize>,
    k: usize,
) -> Vec<(String, usize)> {
    let words: BTreeSet<&str> = generated.iter().flatten().map(String::as_str).collect();
    let mut ranked: Vec<(String, usize)> = words
        .into_iter()
        .map(|w| (w.to_string(), training_counts.get(w).copied().unwrap_or(0)))
        .collect();
    ranked.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub rouge_l: f64,
    pub pct_unique: f64,
    pub pct_seen_in_training: f64,
    pub avg_length: f64,
    pub unique_word_count: usize,
    pub least_seen_words: Vec<(String, usize)>,
    /// Every requested metric by registry name.
    pub metrics: BTreeMap<String, f64>,
}

pub struct EvalInput<'a> {
    pub generated: &'a [Vec<String>],
    pub references: &'a [Vec<Vec<String>>],
    pub training: &'a [Vec<String>],
    pub metrics: &'a [&'a str],
    pub brevity_penalty: bool,
    pub least_seen: usize,
}

pub fn evaluate(input: &EvalInput) -> crate::Result<EvalReport> {
    let reg = metric_registry(input.brevity_penalty);
    let mut metrics = BTreeMap::new();
    for name in DEFAULT_METRICS.iter().chain(input.metrics) {
        if !metrics.contains_key(*name) {
            let m = reg.create(name)?;
            metrics.insert(name.to_string(), m.compute(input.generated, input.references));
        }
    }
    let stats = caption_stats(input.generated, input.training);
    let counts = crate::corpus::vocab::token_counts(input.training);
    Ok(EvalReport {
        bleu_1: metrics["bleu-1"],
        bleu_2: metrics["bleu-2"],
        bleu_3: metrics["bleu-3"],
        bleu_4: metrics["bleu-4"],
        rouge_l: metrics["rouge-l"],
        pct_unique: stats.pct_unique,
        pct_seen_in_training: stats.pct_seen_in_training,
        avg_length: stats.avg_length,
        unique_word_count: stats.unique_word_count,
        least_seen_words: least_seen_words(input.generated, &counts, input.least_seen),
        metrics: metrics
            .into_iter()
            .filter(|(k, _)| input.metrics.contains(&k.as_str()) || DEFAULT_METRICS.contains(&k.as_str()))
            .collect(),
    })
}

impl EvalReport {
    /// Two aligned columns, one metric per line.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, String)> = self
            .metrics
            .iter()
            .map(|(k, v)| (k.clone(), format!("{v:.4}")))
            .collect();
        rows.push(("unique captions (%)".into(), format!("{:.2}", self.pct_unique)));
        rows.push(("seen in training (%)".into(), format!("{:.2}", self.pct_seen_in_training)));
        rows.push(("average length".into(), format!("{:.2}", self.avg_length)));
        rows.push(("distinct words".into(), self.unique_word_count.to_string()));
        let least: Vec<String> = self
            .least_seen_words
            .iter()
            .map(|(w, c)| format!("{w} ({c})"))
            .collect();
        rows.push(("least seen words".into(), least.join(", ")));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}
