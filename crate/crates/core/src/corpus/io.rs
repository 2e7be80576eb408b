//! Line-delimited JSON dataset files.
//!
//! * `features.jsonl`: `{"image_id": str, "feat": [f64; D]}`
//! * `corpus.jsonl`: `{"image_id", "caption", "tokens", "triplets": [{"rel","gov","dep"}]}`
//! * splits: `{"train": [ids], "val": [ids], "test": [ids]}`
//! * chunked pairs: `{"image_id", "slots": [{"word": w} | {"phrase": i}], "nps": [...]}`

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::normalize::normalize_parsed;
use crate::error::{check_dim, Error, Result};
use crate::phrasing::{AsNpPair, DependencyTriplet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub image_id: String,
    pub caption: String,
    /// Parser tokens; when absent the caption is split on whitespace.
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default)]
    pub triplets: Vec<DependencyTriplet>,
}

impl CorpusRecord {
    pub fn raw_tokens(&self) -> Vec<String> {
        if self.tokens.is_empty() {
            self.caption.split_whitespace().map(String::from).collect()
        } else {
            self.tokens.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.raw_tokens().len();
        for t in &self.triplets {
            t.validate(n)?;
        }
        Ok(())
    }

    /// Lowercased, punctuation-free copy with triplets re-indexed to match.
    pub fn normalized(&self) -> Result<CorpusRecord> {
        let (tokens, triplets) = normalize_parsed(&self.raw_tokens(), &self.triplets)
            .map_err(|e| Error::InvalidRecord(format!("{}: {e}", self.image_id)))?;
        Ok(CorpusRecord {
            image_id: self.image_id.clone(),
            caption: self.caption.clone(),
            tokens,
            triplets,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FeatureLine {
    image_id: String,
    feat: Vec<f64>,
}

/// Frozen image encodings keyed by image id; every vector has the same length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, image_id: &str, feat: Vec<f64>) -> Result<()> {
        check_dim("feature vector", self.dim, feat.len())?;
        if feat.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("feature of {image_id}")));
        }
        self.rows.insert(image_id.to_string(), feat);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, image_id: &str) -> Option<&[f64]> {
        self.rows.get(image_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

impl Splits {
    pub fn train_set(&self) -> BTreeSet<&str> {
        self.train.iter().map(String::as_str).collect()
    }

    pub fn val_set(&self) -> BTreeSet<&str> {
        self.val.iter().map(String::as_str).collect()
    }

    pub fn test_set(&self) -> BTreeSet<&str> {
        self.test.iter().map(String::as_str).collect()
    }

    /// An id may belong to at most one split.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id) {
                return Err(Error::InvalidRecord(format!(
                    "image {id} appears in more than one split"
                )));
            }
        }
        Ok(())
    }
}

/// An AS-NPs pair tagged with its image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkedRecord {
    pub image_id: String,
    #[serde(flatten)]
    pub pair: AsNpPair,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::Contract(format!("serialization failed: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Contract(format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Loads and validates a corpus file; triplet index errors carry the line number.
pub fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let records: Vec<CorpusRecord> = read_jsonl(path)?;
    for (n, r) in records.iter().enumerate() {
        r.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
    }
    Ok(records)
}

pub fn load_features(path: &Path) -> Result<FeatureTable> {
    let lines: Vec<FeatureLine> = read_jsonl(path)?;
    let dim = lines.first().map(|l| l.feat.len()).unwrap_or(0);
    let mut table = FeatureTable::new(dim);
    for (n, l) in lines.into_iter().enumerate() {
        table.insert(&l.image_id, l.feat).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
    }
    Ok(table)
}

pub fn save_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let lines: Vec<FeatureLine> = table
        .rows
        .iter()
        .map(|(id, f)| FeatureLine {
            image_id: id.clone(),
            feat: f.clone(),
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn load_splits(path: &Path) -> Result<Splits> {
    let splits: Splits = read_json(path)?;
    splits.validate()?;
    Ok(splits)
}

pub fn load_chunked(path: &Path) -> Result<Vec<ChunkedRecord>> {
    let records: Vec<ChunkedRecord> = read_jsonl(path)?;
    for (n, r) in records.iter().enumerate() {
        r.pair.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_record_corpus_loads_with_triplets() {
        let f = tmp_file(concat!(
            r#"{"image_id":"a","caption":"A dog runs.","tokens":["A","dog","runs","."],"triplets":[{"rel":"det","gov":1,"dep":0},{"rel":"nsubj","gov":2,"dep":1}]}"#,
            "\n",
            r#"{"image_id":"b","caption":"Two cats","tokens":["Two","cats"],"triplets":[{"rel":"nummod","gov":1,"dep":0}]}"#,
            "\n\n",
            r#"{"image_id":"c","caption":"sky"}"#,
            "\n"
        ));
        let recs = load_corpus(f.path()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].triplets[1], DependencyTriplet::new("nsubj", 2, 1));
        assert_eq!(recs[1].triplets, vec![DependencyTriplet::new("nummod", 1, 0)]);
        assert_eq!(recs[2].raw_tokens(), vec!["sky"]);
        let norm = recs[0].normalized().unwrap();
        assert_eq!(norm.tokens, vec!["a", "dog", "runs"]);
    }

    #[test]
    fn bad_triplet_reports_line() {
        let f = tmp_file(concat!(
            r#"{"image_id":"a","caption":"x y","tokens":["x","y"]}"#,
            "\n",
            r#"{"image_id":"b","caption":"x y","tokens":["x","y"],"triplets":[{"rel":"det","gov":1,"dep":7}]}"#,
            "\n"
        ));
        let err = load_corpus(f.path()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let f = tmp_file("{\"image_id\":\"a\",\"caption\":\"x\"}\n{oops\n");
        let err = load_corpus(f.path()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn feature_dimension_mismatch_rejected_with_line() {
        let f = tmp_file(concat!(
            r#"{"image_id":"a","feat":[1.0,2.0,3.0]}"#,
            "\n",
            r#"{"image_id":"b","feat":[1.0,2.0]}"#,
            "\n"
        ));
        let err = load_features(f.path()).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("dimension"), "{err}");
    }

    #[test]
    fn features_round_trip() {
        let mut t = FeatureTable::new(2);
        t.insert("x", vec![0.1, -3.0]).unwrap();
        t.insert("y", vec![1e-300, 7.0]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_features(f.path(), &t).unwrap();
        assert_eq!(load_features(f.path()).unwrap(), t);
    }

    #[test]
    fn overlapping_splits_rejected() {
        let s = Splits {
            train: vec!["a".into()],
            val: vec![],
            test: vec!["a".into()],
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn chunked_record_flattens_pair_fields() {
        let pair = AsNpPair::from_spans(&["a", "dog", "runs"], &[(0, 2)]).unwrap();
        let rec = ChunkedRecord {
            image_id: "i".into(),
            pair,
        };
        let s = serde_json::to_string(&rec).unwrap();
        assert!(s.starts_with(r#"{"image_id":"i","slots":[{"phrase":0},{"word":"runs"}]"#), "{s}");
        let back: ChunkedRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rec);
    }
}
