#![allow(dead_code)]

use std::path::PathBuf;

use phicap::corpus::{load_corpus, load_features, load_splits, normalize, CorpusRecord, FeatureTable, Splits, Vocabulary};
use phicap::inference::{generate_caption, generate_nps, Caption, InferenceConfig, NpCandidate, NpScorer};
use phicap::model::{as_forward, phrase_forward, Dims, EncodedSlot, PhiParams, PROB_FLOOR};
use phicap::phrasing::{chunk, AsNpPair, DependencyTriplet};
use phicap::pipeline::PipelineConfig;

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy")
}

pub struct Toy {
    pub records: Vec<CorpusRecord>,
    pub features: FeatureTable,
    pub splits: Splits,
    pub config: PipelineConfig,
}

pub fn load_toy() -> Toy {
    let dir = toy_dir();
    let text = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    // the run file also carries CLI-only settings
    let mut table: toml::Table = toml::from_str(&text).unwrap();
    table.remove("paths");
    table.remove("seed");
    Toy {
        records: load_corpus(&dir.join("corpus.jsonl")).unwrap(),
        features: load_features(&dir.join("features.jsonl")).unwrap(),
        splits: load_splits(&dir.join("splits.json")).unwrap(),
        config: table.try_into().unwrap(),
    }
}

// ---------------------------------------------------------------- goldens

pub struct ChunkCase {
    pub name: &'static str,
    pub caption: &'static str,
    /// Parser tokens, space separated (punctuation as separate tokens).
    pub tokens: &'static str,
    pub triplets: &'static [(&'static str, usize, usize)],
    pub nps: &'static [&'static str],
    /// Abbreviated sentence as printed in the worked example.
    pub abbreviated: &'static str,
}

pub const CHUNK_CASES: &[ChunkCase] = &[
    ChunkCase {
        name: "man/shirt/tricycle",
        caption: "The man in the gray shirt and sandals is pulling the large tricycle.",
        tokens: "The man in the gray shirt and sandals is pulling the large tricycle .",
        triplets: &[
            ("det", 1, 0),
            ("nsubj", 9, 1),
            ("case", 5, 2),
            ("det", 5, 3),
            ("amod", 5, 4),
            ("nmod:in", 1, 5),
            ("cc", 5, 6),
            ("conj:and", 5, 7),
            ("nmod:in", 1, 7),
            ("aux", 9, 8),
            ("det", 12, 10),
            ("amod", 12, 11),
            ("dobj", 9, 12),
            ("punct", 9, 13),
        ],
        nps: &["the man", "the gray shirt", "the large tricycle"],
        abbreviated: "Man in shirt and sandals is pulling tricycle.",
    },
    ChunkCase {
        name: "verb read as noun (a)",
        caption: "A man in a blue shirt standing in a garden.",
        tokens: "A man in a blue shirt standing in a garden .",
        triplets: &[
            ("det", 1, 0),
            ("case", 6, 2),
            ("det", 6, 3),
            ("amod", 6, 4),
            ("compound", 6, 5),
            ("nmod:in", 1, 6),
            ("case", 9, 7),
            ("det", 9, 8),
            ("nmod:in", 6, 9),
            ("punct", 1, 10),
        ],
        nps: &["a man", "a blue shirt standing", "a garden"],
        abbreviated: "Man in standing in garden.",
    },
    ChunkCase {
        name: "verb read as noun (b)",
        caption: "A group of young people preparing to go skiing.",
        tokens: "A group of young people preparing to go skiing .",
        triplets: &[
            ("det", 1, 0),
            ("case", 5, 2),
            ("amod", 5, 3),
            ("compound", 5, 4),
            ("nmod:of", 1, 5),
            ("mark", 7, 6),
            ("acl", 1, 7),
            ("xcomp", 7, 8),
            ("punct", 1, 9),
        ],
        nps: &["a group of young people preparing"],
        abbreviated: "Preparing to go skiing.",
    },
    ChunkCase {
        name: "verb read as noun (c)",
        caption: "Two men look toward the camera, while the one in front points his index finger.",
        tokens: "Two men look toward the camera , while the one in front points his index finger .",
        triplets: &[
            ("nummod", 1, 0),
            ("nsubj", 2, 1),
            ("case", 5, 3),
            ("det", 5, 4),
            ("nmod:toward", 2, 5),
            ("punct", 2, 6),
            ("mark", 9, 7),
            ("det", 9, 8),
            ("advcl", 2, 9),
            ("case", 12, 10),
            ("compound", 12, 11),
            ("nmod:in", 9, 12),
            ("nmod:poss", 15, 13),
            ("compound", 15, 14),
            ("dep", 9, 15),
            ("punct", 2, 16),
        ],
        nps: &["two men", "the camera", "the one", "front points", "his index finger"],
        abbreviated: "Men look toward camera, while one in points finger.",
    },
    ChunkCase {
        name: "verb read as noun (d)",
        caption: "Two men and a woman on chairs outside near water.",
        tokens: "Two men and a woman on chairs outside near water .",
        triplets: &[
            ("nummod", 1, 0),
            ("cc", 1, 2),
            ("det", 4, 3),
            ("conj:and", 1, 4),
            ("case", 6, 5),
            ("nmod:on", 1, 6),
            ("advmod", 1, 7),
            ("amod", 9, 8),
            ("dep", 7, 9),
            ("punct", 1, 10),
        ],
        nps: &["two men", "a woman", "near water"],
        abbreviated: "Men and woman on chairs outside water.",
    },
    ChunkCase {
        name: "of-modifier (a)",
        caption: "A bird washes itself in a body of water.",
        tokens: "A bird washes itself in a body of water .",
        triplets: &[
            ("det", 1, 0),
            ("nsubj", 2, 1),
            ("dobj", 2, 3),
            ("case", 6, 4),
            ("det", 6, 5),
            ("nmod:in", 2, 6),
            ("case", 8, 7),
            ("nmod:of", 6, 8),
            ("punct", 2, 9),
        ],
        nps: &["a bird", "a body of water"],
        abbreviated: "Bird washes itself in water.",
    },
    ChunkCase {
        name: "of-modifier (b)",
        caption: "A lunch box is full of a variety of foods.",
        tokens: "A lunch box is full of a variety of foods .",
        triplets: &[
            ("det", 2, 0),
            ("compound", 2, 1),
            ("nsubj", 4, 2),
            ("cop", 4, 3),
            ("case", 7, 5),
            ("det", 7, 6),
            ("nmod:of", 4, 7),
            ("case", 9, 8),
            ("nmod:of", 7, 9),
            ("punct", 4, 10),
        ],
        nps: &["a lunch box", "full of a variety of foods"],
        abbreviated: "Box is foods.",
    },
    ChunkCase {
        name: "of-modifier (c)",
        caption: "A group of men and women walk down the center of a tree-lined street.",
        tokens: "A group of men and women walk down the center of a tree-lined street .",
        triplets: &[
            ("det", 1, 0),
            ("nsubj", 6, 1),
            ("case", 3, 2),
            ("nmod:of", 1, 3),
            ("cc", 3, 4),
            ("conj:and", 3, 5),
            ("nmod:of", 1, 5),
            ("case", 9, 7),
            ("det", 9, 8),
            ("nmod:down", 6, 9),
            ("case", 13, 10),
            ("det", 13, 11),
            ("amod", 13, 12),
            ("nmod:of", 9, 13),
            ("punct", 6, 14),
        ],
        nps: &["a group of men and women", "the center of a tree-lined street"],
        abbreviated: "Women walk down street.",
    },
    ChunkCase {
        name: "participle as adjective (b)",
        caption: "A red truck speeds down a tree lined street.",
        tokens: "A red truck speeds down a tree lined street .",
        triplets: &[
            ("det", 2, 0),
            ("amod", 2, 1),
            ("nsubj", 3, 2),
            ("case", 8, 4),
            ("det", 8, 5),
            ("compound", 8, 6),
            ("amod", 8, 7),
            ("nmod:down", 3, 8),
            ("punct", 3, 9),
        ],
        nps: &["a red truck", "a tree lined street"],
        abbreviated: "Truck speeds down street.",
    },
];

pub fn triplets(case: &ChunkCase) -> Vec<DependencyTriplet> {
    case.triplets
        .iter()
        .map(|&(r, g, d)| DependencyTriplet::new(r, g, d))
        .collect()
}

/// Chunks a golden case after normalizing its parser tokens.
pub fn chunk_case(case: &ChunkCase) -> AsNpPair {
    let rec = CorpusRecord {
        image_id: case.name.into(),
        caption: case.caption.into(),
        tokens: case.tokens.split(' ').map(String::from).collect(),
        triplets: triplets(case),
    };
    let n = rec.normalized().unwrap();
    chunk(&n.tokens, &n.triplets).unwrap()
}

pub fn printed(s: &str) -> String {
    normalize(s).unwrap().join(" ")
}

/// Returns a description of the first mismatch, if any.
pub fn check_chunk_case(case: &ChunkCase) -> Result<(), String> {
    let pair = chunk_case(case);
    let nps = pair.np_strings();
    if nps != case.nps {
        return Err(format!("{}: NPs {:?}, expected {:?}", case.name, nps, case.nps));
    }
    let want = printed(case.abbreviated);
    if pair.abbreviated_string() != want {
        return Err(format!("{}: AS {:?}, expected {:?}", case.name, pair.abbreviated_string(), want));
    }
    if pair.flatten() != normalize(case.caption).unwrap() {
        return Err(format!("{}: flatten does not restore the caption", case.name));
    }
    Ok(())
}

pub struct RefineCase {
    pub name: &'static str,
    /// Name of the chunk case providing the unrefined pair.
    pub chunked: &'static str,
    pub starts: &'static [&'static str],
    pub ends: &'static [&'static str],
    pub nps: &'static [&'static str],
    pub abbreviated: &'static str,
}

pub const REFINE_CASES: &[RefineCase] = &[
    RefineCase {
        name: "refinement (a) lunch box",
        chunked: "of-modifier (b)",
        starts: &["a", "the", "two"],
        ends: &["box", "foods", "table"],
        nps: &["a lunch box", "a variety of foods"],
        abbreviated: "Box is full of foods.",
    },
    RefineCase {
        name: "refinement (b) blue shirt",
        chunked: "verb read as noun (a)",
        starts: &["a", "the"],
        ends: &["man", "shirt", "garden"],
        nps: &["a man", "a blue shirt", "a garden"],
        abbreviated: "Man in shirt standing in garden.",
    },
    RefineCase {
        name: "refinement (c) two men",
        chunked: "verb read as noun (c)",
        starts: &["two", "the", "his"],
        ends: &["men", "camera"],
        nps: &["two men", "the camera"],
        abbreviated: "Men look toward camera, while the one in front points his index finger.",
    },
    RefineCase {
        name: "refinement (d) group of men",
        chunked: "of-modifier (c)",
        starts: &["a", "the"],
        ends: &["men", "street"],
        nps: &["a group of men", "the center of a tree-lined street"],
        abbreviated: "Men and women walk down street.",
    },
];

pub fn check_refine_case(case: &RefineCase) -> Result<(), String> {
    use phicap::phrasing::{refine, RefinementContext};
    let source = CHUNK_CASES.iter().find(|c| c.name == case.chunked).unwrap();
    let pair = chunk_case(source);
    let out = refine(&pair, &RefinementContext::with_sets(case.starts, case.ends));
    if out.np_strings() != case.nps {
        return Err(format!("{}: NPs {:?}, expected {:?}", case.name, out.np_strings(), case.nps));
    }
    let want = printed(case.abbreviated);
    if out.abbreviated_string() != want {
        return Err(format!("{}: AS {:?}, expected {:?}", case.name, out.abbreviated_string(), want));
    }
    if out.flatten() != pair.flatten() {
        return Err(format!("{}: refinement changed the word sequence", case.name));
    }
    Ok(())
}

// ---------------------------------------------------------- beam oracles

pub struct Tiny {
    pub vocab: Vocabulary,
    pub params: PhiParams,
    pub feature: Vec<f64>,
}

/// Two ordinary words (V = 6), K = 3, D = 2.
pub fn tiny(seed: u64, indicator_scale: f64) -> Tiny {
    let vocab = Vocabulary::build(&[vec!["a", "b"]], 1).unwrap();
    let dims = Dims {
        hidden: 3,
        feature: 2,
        vocab: vocab.len(),
    };
    let mut params = PhiParams::init(dims, 1.0, seed);
    for w in &mut params.w_indicator {
        *w *= indicator_scale;
    }
    let feature = vec![(seed as f64 * 0.37).sin(), (seed as f64 * 0.91).cos()];
    Tiny { vocab, params, feature }
}

fn log2p(p: f64) -> f64 {
    p.max(PROB_FLOOR).log2()
}

/// Every word sequence of length 1..=max_len, END appended.
pub fn all_sequences(words: &[usize], max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &w in words {
                let mut t = s.clone();
                t.push(w);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub struct BruteNp {
    pub tokens: Vec<usize>,
    pub log2_sum: f64,
    pub score: f64,
    pub z: Vec<f64>,
}

/// Scores every possible NP with the training-time forward pass.
pub fn brute_nps(t: &Tiny, max_len: usize, scorer: &dyn NpScorer) -> Vec<BruteNp> {
    let words: Vec<usize> = t.vocab.word_ids().collect();
    all_sequences(&words, max_len)
        .into_iter()
        .map(|tokens| {
            let f = phrase_forward(&t.params, &t.feature, &tokens, t.vocab.end(), None).unwrap();
            let log2_sum: f64 = f.run.target_probs().into_iter().map(log2p).sum();
            BruteNp {
                score: scorer.score(log2_sum, tokens.len() + 1),
                tokens,
                log2_sum,
                z: f.z,
            }
        })
        .collect()
}

pub fn np_config(max_len: usize) -> InferenceConfig {
    InferenceConfig {
        beam_phrase: 1 << 12,
        beam_sentence: 1 << 12,
        threshold: -1e9,
        max_np_len: max_len,
        max_as_len: max_len,
        np_scorer: "normalized".into(),
    }
}

/// Compares the beam's NP list with exhaustive enumeration. Returns the
/// largest score discrepancy.
pub fn check_np_oracle(t: &Tiny, max_len: usize, scorer: &dyn NpScorer) -> Result<f64, String> {
    let cfg = np_config(max_len);
    let beam = generate_nps(&t.params, &t.vocab, &t.feature, &cfg, scorer);
    let brute = brute_nps(t, max_len, scorer);
    if beam.len() != brute.len() {
        return Err(format!("beam found {} NPs, enumeration {}", beam.len(), brute.len()));
    }
    let best = brute
        .iter()
        .max_by(|a, b| a.score.partial_cmp(&b.score).unwrap())
        .unwrap();
    if beam[0].tokens != best.tokens {
        return Err(format!("top NP {:?}, brute force {:?}", beam[0].tokens, best.tokens));
    }
    let mut worst = 0.0f64;
    for b in &brute {
        let c = beam
            .iter()
            .find(|c| c.tokens == b.tokens)
            .ok_or_else(|| format!("NP {:?} missing from beam", b.tokens))?;
        worst = worst
            .max((c.score - b.score).abs())
            .max((c.log2_sum - b.log2_sum).abs());
    }
    if worst > 1e-9 {
        return Err(format!("score discrepancy {worst:e}"));
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub enum BruteSlot {
    Word(usize),
    Np(usize),
}

pub struct BruteCaption {
    pub slots: Vec<BruteSlot>,
    pub score: f64,
}

/// Every slot sequence up to `max_len` that the indicator admits, scored
/// with the training-time forward pass.
pub fn brute_captions(t: &Tiny, nps: &[NpCandidate], max_len: usize) -> Vec<BruteCaption> {
    let end = t.vocab.end();
    let mut alphabet: Vec<BruteSlot> = t.vocab.word_ids().map(BruteSlot::Word).collect();
    alphabet.extend((0..nps.len()).map(BruteSlot::Np));
    let mut seqs: Vec<Vec<BruteSlot>> = vec![Vec::new()];
    let mut frontier = seqs.clone();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in &alphabet {
                let mut t = s.clone();
                t.push(a.clone());
                next.push(t);
            }
        }
        seqs.extend(next.iter().cloned());
        frontier = next;
    }

    let mut out = Vec::new();
    for seq in seqs {
        let mut slots = Vec::new();
        let mut vectors = Vec::new();
        let mut lasts = Vec::new();
        let mut extra = 0.0;
        let mut steps = seq.len() + 1;
        for s in &seq {
            match *s {
                BruteSlot::Word(w) => slots.push(EncodedSlot::Word(w)),
                BruteSlot::Np(i) => {
                    let np = &nps[i];
                    let f = phrase_forward(&t.params, &t.feature, &np.tokens, end, None).unwrap();
                    extra += f.run.target_probs().into_iter().map(log2p).sum::<f64>();
                    steps += np.tokens.len() + 1;
                    slots.push(EncodedSlot::Phrase(vectors.len()));
                    vectors.push(f.z);
                    lasts.push(*np.tokens.last().unwrap());
                }
            }
        }
        let f = as_forward(&t.params, &t.feature, &slots, &vectors, &lasts, end, None).unwrap();
        let n = seq.len();
        let admitted = (0..=n).all(|i| {
            if i == max_len {
                return true;
            }
            let phrase_step = f.scores[i] > 0.0;
            match seq.get(i) {
                Some(BruteSlot::Np(_)) => phrase_step,
                Some(BruteSlot::Word(_)) | None => !phrase_step,
            }
        });
        if !admitted {
            continue;
        }
        let sum: f64 = f.run.target_probs().into_iter().map(log2p).sum::<f64>() + extra;
        out.push(BruteCaption {
            slots: seq,
            score: sum / steps as f64,
        });
    }
    out
}

pub fn caption_matches(c: &Caption, b: &BruteCaption) -> bool {
    use phicap::inference::CaptionSlot;
    c.slots.len() == b.slots.len()
        && c.slots.iter().zip(&b.slots).all(|(x, y)| match (x, y) {
            (CaptionSlot::Word(a), BruteSlot::Word(b)) => a == b,
            (CaptionSlot::Phrase(a), BruteSlot::Np(b)) => a == b,
            _ => false,
        })
}

/// Runs the sentence beam at exhaustive width against enumeration. Returns
/// whether the best caption uses a phrase.
pub fn check_caption_oracle(t: &Tiny, n_nps: usize, max_len: usize) -> Result<bool, String> {
    let cfg = np_config(max_len);
    let scorer = phicap::inference::NormalizedScorer;
    let nps: Vec<NpCandidate> = generate_nps(&t.params, &t.vocab, &t.feature, &cfg, &scorer)
        .into_iter()
        .take(n_nps)
        .collect();
    let beam = generate_caption(&t.params, &t.vocab, &t.feature, &nps, &cfg);
    let brute = brute_captions(t, &nps, max_len);
    let best = brute
        .iter()
        .max_by(|a, b| a.score.partial_cmp(&b.score).unwrap())
        .ok_or("enumeration admitted no caption")?;
    if (beam.score() - best.score).abs() > 1e-9 {
        return Err(format!("S_s {} vs brute force {}", beam.score(), best.score));
    }
    if !caption_matches(&beam, best) {
        return Err(format!("caption {:?} vs brute force {:?}", beam.slots, best.slots));
    }
    Ok(best.slots.iter().any(|s| matches!(s, BruteSlot::Np(_))))
}

// ------------------------------------------------------------ gradients

pub fn gradcheck_example() -> (Vocabulary, phicap::model::Example) {
    let toks: Vec<&str> = "a brown dog chases the red ball fast".split(' ').collect();
    let vocab = Vocabulary::build(&[toks.clone()], 1).unwrap();
    let pair = AsNpPair::from_spans(&toks, &[(0, 3), (4, 7)]).unwrap();
    let feature: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).sin()).collect();
    let ex = phicap::model::Example::encode("g", feature.into(), &pair, &vocab).unwrap();
    (vocab, ex)
}

// --------------------------------------------------------------- metrics

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Hand-computed fixture: clipped unigram 5/7, bigram 3/6, BLEU-2 √(5/14),
/// ROUGE-L 10/13 (best against the first reference: LCS 5, P 5/7, R 5/6).
pub fn metric_fixture() -> (Vec<Vec<String>>, Vec<Vec<Vec<String>>>) {
    (
        vec![toks("the the cat sat on the mat")],
        vec![vec![toks("the cat is on the mat"), toks("there is a cat on the mat")]],
    )
}
