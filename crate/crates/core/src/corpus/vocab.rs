use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub const START_PHRASE: &str = "<start_p>";
pub const START_SENTENCE: &str = "<start_s>";
pub const END: &str = "<end>";
pub const UNK: &str = "<unk>";

const RESERVED: [&str; 4] = [START_PHRASE, START_SENTENCE, END, UNK];

/// Word ↔ id mapping. Retained words are sorted lexicographically and take
/// ids `0..n`; the four reserved tokens follow.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Occurrence counts over tokenized captions.
pub fn token_counts<I, C, S>(captions: I) -> BTreeMap<String, usize>
where
    I: IntoIterator<Item = C>,
    C: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut counts = BTreeMap::new();
    for caption in captions {
        for tok in caption.as_ref() {
            *counts.entry(tok.as_ref().to_string()).or_insert(0) += 1;
        }
    }
    counts
}

impl Vocabulary {
    /// Keeps words occurring at least `min_count` times.
    pub fn build<I, C, S>(captions: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = C>,
        C: AsRef<[S]>,
        S: AsRef<str>,
    {
        let counts = token_counts(captions);
        if counts.is_empty() {
            return Err(Error::InvalidRecord(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let words = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count && !RESERVED.contains(&w.as_str()))
            .map(|(w, _)| w);
        Ok(Self::from_words(words))
    }

    fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = words.into_iter().collect();
        tokens.extend(RESERVED.iter().map(|s| s.to_string()));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    /// Rebuilds a vocabulary from its full token list (as stored in checkpoints).
    pub fn from_token_list(tokens: Vec<String>) -> Result<Self> {
        let n = tokens.len();
        if n < RESERVED.len() || tokens[n - RESERVED.len()..] != RESERVED {
            return Err(Error::Checkpoint(
                "token list does not end with the reserved tokens".into(),
            ));
        }
        let vocab = Self::from_words(tokens[..n - RESERVED.len()].iter().cloned());
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Checkpoint("duplicate tokens in token list".into()));
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of ordinary (non-reserved) words.
    pub fn num_words(&self) -> usize {
        self.tokens.len() - RESERVED.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Unknown words map to UNK.
    pub fn encode(&self, token: &str) -> usize {
        self.id(token).unwrap_or_else(|| self.unk())
    }

    pub fn encode_all<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode(t.as_ref())).collect()
    }

    pub fn decode(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    fn reserved_id(&self, slot: usize) -> usize {
        self.num_words() + slot
    }

    pub fn start_phrase(&self) -> usize {
        self.reserved_id(0)
    }

    pub fn start_sentence(&self) -> usize {
        self.reserved_id(1)
    }

    pub fn end(&self) -> usize {
        self.reserved_id(2)
    }

    pub fn unk(&self) -> usize {
        self.reserved_id(3)
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id >= self.num_words()
    }

    /// Ids a decoder may emit as words: ordinary words only.
    pub fn word_ids(&self) -> std::ops::Range<usize> {
        0..self.num_words()
    }
}
