use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use phicap::corpus::{
    load_checkpoint, load_chunked, load_corpus, load_features, load_splits, read_jsonl, save_checkpoint, truncate,
    write_jsonl, ChunkedRecord, CorpusRecord, FeatureTable, Splits,
};
use phicap::inference::{caption_all, GeneratedCaption, InferenceConfig};
use phicap::metrics::{evaluate, EvalInput, EvalReport};
use phicap::model::{batch_gradient, total_cost, Dims, Example, LossConfig, Objective, PhiParams};
use phicap::neural::gradient_check;
use phicap::phrasing::AsNpPair;
use phicap::pipeline::{checkpoint_for, chunk_records, prepare, run_stage1, run_stage2, Pairs, PipelineConfig};
use phicap::train::{refine_corpus, LogEntry, TrainOutcome};
use phicap::Error;

use crate::config::{pick, set, RunConfig};
use crate::{Cli, CliError, Command, DataArgs, Format, InferFlags, SplitName, TrainFlags};

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Chunk { corpus, out } => chunk(
            &pick(corpus, &cfg.paths.corpus, "corpus")?,
            &pick(out, &cfg.paths.output, "out")?,
        ),
        Command::TrainPhrase { data, train, out, log } => {
            apply_train(&mut cfg, &train);
            train_phrase(&cfg, &data, out, log)
        }
        Command::RefineCorpus {
            checkpoint,
            chunked,
            features,
            splits,
            out,
            infer,
            as_limit,
            np_limit,
        } => {
            set(&mut cfg.truncation.as_limit, as_limit);
            set(&mut cfg.truncation.np_limit, np_limit);
            cfg.inference = cfg.inference.clone().with_truncation(&cfg.truncation);
            apply_infer(&mut cfg.inference, &infer);
            refine(
                &cfg,
                &pick(checkpoint, &cfg.paths.checkpoint, "checkpoint")?,
                &chunked,
                &pick(features, &cfg.paths.features, "features")?,
                splits.or_else(|| cfg.paths.splits.clone()).as_deref(),
                &pick(out, &cfg.paths.output, "out")?,
            )
        }
        Command::Train {
            data,
            train: tf,
            infer,
            stage1,
            refined,
            out,
            log,
        } => {
            apply_train(&mut cfg, &tf);
            apply_infer(&mut cfg.inference, &infer);
            train(&cfg, &data, stage1.zip(refined), out, log)
        }
        Command::Generate {
            checkpoint,
            features,
            splits,
            split,
            out,
            infer,
            threshold_sweep,
            references,
        } => {
            apply_infer(&mut cfg.inference, &infer);
            let out = out.or_else(|| cfg.paths.output.clone());
            if out.is_none() && threshold_sweep.is_empty() {
                return Err(CliError::Usage("--out is required (or set it under [paths])".into()));
            }
            generate(
                &cfg.inference,
                &pick(checkpoint, &cfg.paths.checkpoint, "checkpoint")?,
                &pick(features, &cfg.paths.features, "features")?,
                splits.or_else(|| cfg.paths.splits.clone()).map(|p| (p, split)),
                out.as_deref(),
                &threshold_sweep,
                references.as_deref(),
            )
        }
        Command::Eval {
            generated,
            references,
            train_captions,
            splits,
            metrics,
            brevity_penalty,
            least_seen,
            format,
            out,
        } => {
            let metrics: Vec<&str> = metrics.iter().map(String::as_str).collect();
            let report = eval(
                &generated,
                &references,
                train_captions.as_deref(),
                splits.as_deref(),
                &metrics,
                brevity_penalty,
                least_seen,
            )?;
            let text = match format {
                Format::Text => report.to_text(),
                Format::Json => to_json_pretty(&report)? + "\n",
            };
            emit(out.as_deref(), &text)
        }
        Command::Gradcheck {
            hidden,
            seed,
            init_scale,
            epsilon,
            tolerance,
            lambda,
            indicator,
        } => gradcheck(hidden, seed, init_scale, epsilon, tolerance, lambda, indicator),
    }
}

fn apply_train(cfg: &mut RunConfig, f: &TrainFlags) {
    let t = &mut cfg.train;
    set(&mut t.learning_rate, f.learning_rate);
    set(&mut t.batch_size, f.batch_size);
    set(&mut t.epochs, f.epochs);
    set(&mut t.stage1_epochs, f.stage1_epochs);
    set(&mut t.dropout_rate, f.dropout);
    set(&mut t.hidden_size, f.hidden_size);
    set(&mut t.min_count, f.min_count);
    set(&mut t.clip_norm, f.clip_norm);
    set(&mut t.init_scale, f.init_scale);
    set(&mut t.seed, f.seed);
    set(&mut cfg.loss.indicator, f.indicator.clone());
    set(&mut cfg.loss.lambda, f.lambda);
    set(&mut cfg.truncation.as_limit, f.as_limit);
    set(&mut cfg.truncation.np_limit, f.np_limit);
}

fn apply_infer(c: &mut InferenceConfig, f: &InferFlags) {
    set(&mut c.beam_phrase, f.beam_phrase);
    set(&mut c.beam_sentence, f.beam_sentence);
    set(&mut c.threshold, f.threshold);
    set(&mut c.np_scorer, f.np_scorer.clone());
    set(&mut c.max_np_len, f.max_np_len);
    set(&mut c.max_as_len, f.max_as_len);
}

fn to_json_pretty<T: serde::Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Usage(e.to_string()))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn chunk(corpus: &Path, out: &Path) -> CliResult {
    let records = load_corpus(corpus)?;
    if records.is_empty() {
        return Err(Error::InvalidRecord(format!("{}: corpus is empty", corpus.display())).into());
    }
    let (pairs, relations) = chunk_records(&records)?;
    let chunked = to_chunked(pairs);
    write_jsonl(out, &chunked)?;
    let nps: usize = chunked.iter().map(|c| c.pair.nps.len()).sum();
    println!(
        "{}",
        json!({ "records": chunked.len(), "noun_phrases": nps, "relations": relations })
    );
    Ok(())
}

/// Appends log entries as JSON lines; the first write error is kept.
struct LogSink {
    path: PathBuf,
    w: BufWriter<File>,
    err: Option<std::io::Error>,
}

impl LogSink {
    fn create(path: PathBuf) -> CliResult<Self> {
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            w: BufWriter::new(f),
            err: None,
        })
    }

    fn write(&mut self, e: &LogEntry) {
        if self.err.is_none() {
            let line = serde_json::to_string(e).expect("log entries serialize");
            if let Err(err) = writeln!(self.w, "{line}") {
                self.err = Some(err);
            }
        }
    }

    fn finish(mut self) -> CliResult {
        match self.err.take().map_or_else(|| self.w.flush(), Err) {
            Ok(()) => Ok(()),
            Err(e) => Err(Error::io(&self.path, e).into()),
        }
    }
}

fn log_path(out: &Path, log: Option<PathBuf>) -> PathBuf {
    log.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".log.jsonl");
        PathBuf::from(s)
    })
}

struct Inputs {
    records: Vec<CorpusRecord>,
    features: FeatureTable,
    splits: Splits,
}

fn load_inputs(cfg: &RunConfig, data: &DataArgs, need_corpus: bool) -> CliResult<Inputs> {
    let records = if need_corpus {
        load_corpus(&pick(data.corpus.clone(), &cfg.paths.corpus, "corpus")?)?
    } else {
        Vec::new()
    };
    Ok(Inputs {
        records,
        features: load_features(&pick(data.features.clone(), &cfg.paths.features, "features")?)?,
        splits: load_splits(&pick(data.splits.clone(), &cfg.paths.splits, "splits")?)?,
    })
}

fn summary(stage: &str, o: &TrainOutcome, out: Option<&Path>) -> serde_json::Value {
    let last = o.history.last();
    json!({
        "stage": stage,
        "checkpoint": out.map(|p| p.display().to_string()),
        "epochs_run": o.history.len(),
        "selected_epoch": o.selected_epoch,
        "final_cost": last.map(|h| h.mean_cost),
        "final_val_log2ppl": last.and_then(|h| h.val_log2ppl),
    })
}

/// Saves the outcome's parameters; an aborted run is still saved (the last
/// good parameters) but reported as a failure.
fn finish_stage(
    o: &TrainOutcome,
    vocab: &phicap::corpus::Vocabulary,
    stage: &str,
    out: &Path,
) -> CliResult<serde_json::Value> {
    save_checkpoint(&checkpoint_for(&o.params, vocab, stage, o.selected_epoch), out)?;
    match &o.aborted {
        Some(reason) => Err(CliError::Failed(format!(
            "{stage} training stopped ({reason}); last good parameters saved to {}",
            out.display()
        ))),
        None => Ok(summary(stage, o, Some(out))),
    }
}

fn train_phrase(cfg: &RunConfig, data: &DataArgs, out: Option<PathBuf>, log: Option<PathBuf>) -> CliResult {
    let out = pick(out, &cfg.paths.checkpoint, "out")?;
    let inputs = load_inputs(cfg, data, true)?;
    let pcfg = cfg.pipeline();
    let prepared = prepare(inputs.records, &inputs.splits, &pcfg)?;
    let mut sink = LogSink::create(log_path(&out, log))?;
    let outcome = run_stage1(&prepared, &inputs.features, &pcfg, &mut |e| sink.write(e))?;
    sink.finish()?;
    println!("{}", finish_stage(&outcome, &prepared.vocab, "phrase", &out)?);
    Ok(())
}

fn refine(
    cfg: &RunConfig,
    checkpoint: &Path,
    chunked: &Path,
    features: &Path,
    splits: Option<&Path>,
    out: &Path,
) -> CliResult {
    let ckpt = load_checkpoint(checkpoint)?;
    let mut records = load_chunked(chunked)?;
    let features = load_features(features)?;
    if let Some(p) = splits {
        let s = load_splits(p)?;
        let (train, val) = (s.train_set(), s.val_set());
        records.retain(|r| train.contains(r.image_id.as_str()) || val.contains(r.image_id.as_str()));
    }
    let pairs: Pairs = records
        .into_iter()
        .map(|r| (r.image_id, truncate(&r.pair, &cfg.truncation)))
        .collect();
    let (refined, report) = refine_corpus(&ckpt.params, &ckpt.vocab, &pairs, &features, &cfg.inference, &cfg.truncation)?;
    write_jsonl(out, &to_chunked(refined))?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

fn to_chunked(pairs: Pairs) -> Vec<ChunkedRecord> {
    pairs
        .into_iter()
        .map(|(image_id, pair)| ChunkedRecord { image_id, pair })
        .collect()
}

fn split_pairs(records: Vec<ChunkedRecord>, splits: &Splits) -> (Pairs, Pairs) {
    let (train, val) = (splits.train_set(), splits.val_set());
    let mut t = Vec::new();
    let mut v = Vec::new();
    for r in records {
        if train.contains(r.image_id.as_str()) {
            t.push((r.image_id, r.pair));
        } else if val.contains(r.image_id.as_str()) {
            v.push((r.image_id, r.pair));
        }
    }
    (t, v)
}

fn train(
    cfg: &RunConfig,
    data: &DataArgs,
    resume: Option<(PathBuf, PathBuf)>,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
) -> CliResult {
    let out = pick(out, &cfg.paths.checkpoint, "out")?;
    let pcfg: PipelineConfig = cfg.pipeline();
    pcfg.validate()?;
    let mut sink = LogSink::create(log_path(&out, log))?;
    let mut log = |e: &LogEntry| sink.write(e);
    let result = match resume {
        Some((stage1, refined)) => {
            let inputs = load_inputs(cfg, data, false)?;
            let ckpt = load_checkpoint(&stage1)?;
            let (train, val) = split_pairs(load_chunked(&refined)?, &inputs.splits);
            if train.is_empty() {
                return Err(Error::InvalidRecord("no refined pairs belong to the train split".into()).into());
            }
            let full = run_stage2(ckpt.params, &ckpt.vocab, &train, &val, &inputs.features, &pcfg, &mut log)?;
            finish_stage(&full, &ckpt.vocab, "full", &out).map(|s| vec![s])
        }
        None => {
            let inputs = load_inputs(cfg, data, true)?;
            let prepared = prepare(inputs.records, &inputs.splits, &pcfg)?;
            let stage1 = run_stage1(&prepared, &inputs.features, &pcfg, &mut log)?;
            if stage1.aborted.is_some() {
                finish_stage(&stage1, &prepared.vocab, "phrase", &out).map(|s| vec![s])
            } else {
                let infer = pcfg.inference.clone().with_truncation(&pcfg.truncation);
                let refine = |pairs: &Pairs| {
                    refine_corpus(&stage1.params, &prepared.vocab, pairs, &inputs.features, &infer, &pcfg.truncation)
                };
                let (train, report) = refine(&prepared.train)?;
                let (val, _) = refine(&prepared.val)?;
                let full = run_stage2(stage1.params.clone(), &prepared.vocab, &train, &val, &inputs.features, &pcfg, &mut log)?;
                finish_stage(&full, &prepared.vocab, "full", &out).map(|s| {
                    vec![
                        summary("phrase", &stage1, None),
                        json!({ "stage": "refine", "report": report }),
                        s,
                    ]
                })
            }
        }
    };
    sink.finish()?;
    for line in result? {
        println!("{line}");
    }
    Ok(())
}

fn select_images(features: &FeatureTable, splits: Option<(PathBuf, SplitName)>) -> CliResult<Vec<(String, Vec<f64>)>> {
    let ids: Vec<String> = match splits {
        None => features.ids().map(String::from).collect(),
        Some((path, name)) => {
            let s = load_splits(&path)?;
            match name {
                SplitName::Train => s.train,
                SplitName::Val => s.val,
                SplitName::Test => s.test,
            }
        }
    };
    ids.into_iter()
        .map(|id| {
            let f = features
                .get(&id)
                .ok_or_else(|| Error::InvalidRecord(format!("no features for image {id}")))?
                .to_vec();
            Ok((id, f))
        })
        .collect()
}

/// Normalised tokens of every caption, grouped by image.
fn reference_map(path: &Path) -> CliResult<BTreeMap<String, Vec<Vec<String>>>> {
    let mut out: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for r in load_corpus(path)? {
        let n = r.normalized()?;
        out.entry(n.image_id).or_default().push(n.tokens);
    }
    Ok(out)
}

fn caption_tokens(c: &GeneratedCaption) -> Vec<String> {
    c.caption.split_whitespace().map(String::from).collect()
}

fn references_for(
    generated: &[GeneratedCaption],
    refs: &BTreeMap<String, Vec<Vec<String>>>,
) -> CliResult<Vec<Vec<Vec<String>>>> {
    generated
        .iter()
        .map(|g| {
            refs.get(&g.image_id)
                .cloned()
                .ok_or_else(|| Error::InvalidRecord(format!("no reference captions for image {}", g.image_id)).into())
        })
        .collect()
}

fn generate(
    infer: &InferenceConfig,
    checkpoint: &Path,
    features: &Path,
    splits: Option<(PathBuf, SplitName)>,
    out: Option<&Path>,
    sweep: &[f64],
    references: Option<&Path>,
) -> CliResult {
    let ckpt = load_checkpoint(checkpoint)?;
    let features = load_features(features)?;
    let images = select_images(&features, splits)?;
    let refs = references.map(reference_map).transpose()?;
    if let Some(out) = out {
        let caps = caption_all(&ckpt.params, &ckpt.vocab, &images, infer)?;
        write_jsonl(out, &caps)?;
    }
    for &t in sweep {
        let cfg = InferenceConfig {
            threshold: t,
            ..infer.clone()
        };
        let caps = caption_all(&ckpt.params, &ckpt.vocab, &images, &cfg)?;
        let distinct: BTreeSet<&str> = caps.iter().map(|c| c.caption.as_str()).collect();
        let mut line = json!({
            "threshold": t,
            "images": caps.len(),
            "distinct_captions": distinct.len(),
            "pct_unique": if caps.is_empty() { 0.0 } else { 100.0 * distinct.len() as f64 / caps.len() as f64 },
        });
        if let Some(refs) = &refs {
            let generated: Vec<Vec<String>> = caps.iter().map(caption_tokens).collect();
            let report = evaluate(&EvalInput {
                generated: &generated,
                references: &references_for(&caps, refs)?,
                training: &[],
                metrics: &[],
                brevity_penalty: false,
                least_seen: 0,
            })?;
            line["metrics"] = json!(report.metrics);
        }
        println!("{line}");
    }
    Ok(())
}

fn eval(
    generated: &Path,
    references: &Path,
    train_captions: Option<&Path>,
    splits: Option<&Path>,
    metrics: &[&str],
    brevity_penalty: bool,
    least_seen: usize,
) -> CliResult<EvalReport> {
    let caps: Vec<GeneratedCaption> = read_jsonl(generated)?;
    let refs = references_for(&caps, &reference_map(references)?)?;
    let training: Vec<Vec<String>> = match train_captions {
        None => Vec::new(),
        Some(p) => {
            let keep = splits.map(load_splits).transpose()?;
            let mut out = Vec::new();
            for r in load_corpus(p)? {
                if keep.as_ref().is_none_or(|s| s.train.contains(&r.image_id)) {
                    out.push(r.normalized()?.tokens);
                }
            }
            out
        }
    };
    let generated: Vec<Vec<String>> = caps.iter().map(caption_tokens).collect();
    Ok(evaluate(&EvalInput {
        generated: &generated,
        references: &refs,
        training: &training,
        metrics,
        brevity_penalty,
        least_seen,
    })?)
}

fn gradcheck(
    hidden: usize,
    seed: u64,
    init_scale: f64,
    epsilon: f64,
    tolerance: f64,
    lambda: f64,
    indicator: String,
) -> CliResult {
    let toks: Vec<&str> = "a brown dog chases the red ball fast".split(' ').collect();
    let vocab = phicap::corpus::Vocabulary::build(std::slice::from_ref(&toks), 1)?;
    let pair = AsNpPair::from_spans(&toks, &[(0, 3), (4, 7)])?;
    let feature: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).sin()).collect();
    let ex = Example::encode("gradcheck", feature.into(), &pair, &vocab)?;
    let dims = Dims {
        hidden,
        feature: 6,
        vocab: vocab.len(),
    };
    let params = PhiParams::init(dims, init_scale, seed);
    let cfg = LossConfig {
        lambda,
        indicator,
        ..Default::default()
    };
    let batch = [&ex];
    let g = batch_gradient(&params, &batch, &cfg, Objective::Full, vocab.end(), None)?;
    let loss = |p: &PhiParams| total_cost(p, &batch, &cfg, vocab.end()).unwrap_or(f64::NAN);
    let report = gradient_check(&loss, &params, &g.grads, epsilon)?;
    let pass = report.max_relative_error < tolerance;
    println!(
        "{}",
        json!({
            "pass": pass,
            "checked": report.checked,
            "max_relative_error": report.max_relative_error,
            "worst_tensor": report.worst_tensor,
            "worst_index": report.worst_index,
            "max_abs_error": report.max_abs_error,
            "tolerance": tolerance,
        })
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "max relative error {:e} exceeds {tolerance:e}",
            report.max_relative_error
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        std::fs::write(&file, "[train]\nlearning_rate = 0.005\nbatch_size = 10\n[inference]\nbeam_sentence = 1\n").unwrap();
        let mut cfg = RunConfig::load(Some(&file)).unwrap();
        apply_train(
            &mut cfg,
            &TrainFlags {
                learning_rate: Some(0.1),
                ..Default::default()
            },
        );
        apply_infer(
            &mut cfg.inference,
            &InferFlags {
                threshold: Some(-3.0),
                ..Default::default()
            },
        );
        let d = RunConfig::default();
        assert_eq!(cfg.train.learning_rate, 0.1);
        assert_eq!(cfg.train.batch_size, 10);
        assert_eq!(cfg.train.epochs, d.train.epochs);
        assert_eq!(cfg.inference.beam_sentence, 1);
        assert_eq!(cfg.inference.threshold, -3.0);
        assert_eq!(cfg.inference.beam_phrase, d.inference.beam_phrase);
    }

    #[test]
    fn log_defaults_next_to_checkpoint() {
        assert_eq!(log_path(Path::new("/x/m.ckpt"), None), PathBuf::from("/x/m.ckpt.log.jsonl"));
        assert_eq!(log_path(Path::new("/x/m.ckpt"), Some("l".into())), PathBuf::from("l"));
    }
}
