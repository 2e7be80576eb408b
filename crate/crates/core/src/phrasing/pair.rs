use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `<relation(governor, dependent)>` unit from a dependency parse.
/// Token indices are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DependencyTriplet {
    #[serde(rename = "rel")]
    pub relation: String,
    #[serde(rename = "gov")]
    pub governor: usize,
    #[serde(rename = "dep")]
    pub dependent: usize,
}

impl DependencyTriplet {
    pub fn new(relation: &str, governor: usize, dependent: usize) -> Self {
        Self {
            relation: relation.to_string(),
            governor,
            dependent,
        }
    }

    pub fn validate(&self, num_tokens: usize) -> Result<()> {
        if self.governor == self.dependent {
            return Err(Error::InvalidRecord(format!(
                "triplet {}({}, {}) links a token to itself",
                self.relation, self.governor, self.dependent
            )));
        }
        if self.governor >= num_tokens || self.dependent >= num_tokens {
            return Err(Error::InvalidRecord(format!(
                "triplet {}({}, {}) out of bounds for {} tokens",
                self.relation, self.governor, self.dependent, num_tokens
            )));
        }
        Ok(())
    }
}

/// One position of an abbreviated sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Word(String),
    /// Index into [`AsNpPair::nps`].
    Phrase(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhrase {
    pub tokens: Vec<String>,
    /// Half-open token range `[start, end)` in the source caption.
    pub span: (usize, usize),
}

impl NounPhrase {
    pub fn last_word(&self) -> &str {
        self.tokens.last().map(String::as_str).unwrap_or("")
    }
}

/// An abbreviated sentence plus the noun phrases cut out of it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsNpPair {
    pub slots: Vec<Slot>,
    pub nps: Vec<NounPhrase>,
}

impl AsNpPair {
    pub fn from_words<S: AsRef<str>>(tokens: &[S]) -> Self {
        Self {
            slots: tokens
                .iter()
                .map(|t| Slot::Word(t.as_ref().to_string()))
                .collect(),
            nps: Vec::new(),
        }
    }

    /// Builds a pair from explicit NP spans (sorted, non-overlapping, half-open).
    pub fn from_spans<S: AsRef<str>>(tokens: &[S], spans: &[(usize, usize)]) -> Result<Self> {
        let mut pair = AsNpPair::default();
        let mut pos = 0;
        for &(start, end) in spans {
            if start < pos || start >= end || end > tokens.len() {
                return Err(Error::InvalidRecord(format!(
                    "bad NP span [{start}, {end}) for {} tokens",
                    tokens.len()
                )));
            }
            for t in &tokens[pos..start] {
                pair.slots.push(Slot::Word(t.as_ref().to_string()));
            }
            pair.slots.push(Slot::Phrase(pair.nps.len()));
            pair.nps.push(NounPhrase {
                tokens: tokens[start..end]
                    .iter()
                    .map(|t| t.as_ref().to_string())
                    .collect(),
                span: (start, end),
            });
            pos = end;
        }
        for t in &tokens[pos..] {
            pair.slots.push(Slot::Word(t.as_ref().to_string()));
        }
        Ok(pair)
    }

    /// Expands every phrase slot back into its words.
    pub fn flatten(&self) -> Vec<String> {
        let mut out = Vec::new();
        for slot in &self.slots {
            match slot {
                Slot::Word(w) => out.push(w.clone()),
                Slot::Phrase(i) => out.extend(self.nps[*i].tokens.iter().cloned()),
            }
        }
        out
    }

    /// The abbreviated sentence: each phrase slot shown as its NP's last word.
    pub fn abbreviated(&self) -> Vec<String> {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Word(w) => w.clone(),
                Slot::Phrase(i) => self.nps[*i].last_word().to_string(),
            })
            .collect()
    }

    pub fn abbreviated_string(&self) -> String {
        self.abbreviated().join(" ")
    }

    pub fn np_strings(&self) -> Vec<String> {
        self.nps.iter().map(|np| np.tokens.join(" ")).collect()
    }

    pub fn num_phrase_slots(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| matches!(s, Slot::Phrase(_)))
            .count()
    }

    /// Checks that phrase slots and NPs correspond one-to-one and no NP is empty.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.nps.len()];
        for slot in &self.slots {
            if let Slot::Phrase(i) = slot {
                let i = *i;
                if i >= self.nps.len() {
                    return Err(Error::InvalidRecord(format!(
                        "phrase slot references NP {i} of {}",
                        self.nps.len()
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidRecord(format!("NP {i} referenced twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidRecord(format!("NP {i} is never referenced")));
        }
        if let Some(i) = self.nps.iter().position(|np| np.tokens.is_empty()) {
            return Err(Error::InvalidRecord(format!("NP {i} is empty")));
        }
        Ok(())
    }
}
