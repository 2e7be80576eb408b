use serde::{Deserialize, Serialize};

use crate::corpus::TruncationPolicy;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// NP beam width b_p.
    pub beam_phrase: usize,
    /// Sentence beam width b_s.
    pub beam_sentence: usize,
    /// Score threshold T for non-best NPs of a last-word group.
    pub threshold: f64,
    /// Longest NP the phrase decoder may emit.
    pub max_np_len: usize,
    /// Most slots an abbreviated sentence may have before END is forced.
    pub max_as_len: usize,
    /// NP scoring strategy name.
    pub np_scorer: String,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        let t = TruncationPolicy::default();
        Self {
            beam_phrase: 30,
            beam_sentence: 20,
            threshold: -1.5,
            max_np_len: t.np_limit,
            max_as_len: t.as_limit,
            np_scorer: "normalized".into(),
        }
    }
}

impl InferenceConfig {
    pub fn with_truncation(mut self, policy: &TruncationPolicy) -> Self {
        self.max_np_len = policy.np_limit;
        self.max_as_len = policy.as_limit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_phrase == 0 || self.beam_sentence == 0 {
            return Err(Error::Contract("beam widths must be at least 1".into()));
        }
        if self.max_np_len == 0 || self.max_as_len == 0 {
            return Err(Error::Contract("maximum lengths must be at least 1".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Contract("threshold must be finite".into()));
        }
        super::scorer_registry().create(&self.np_scorer).map(|_| ())
    }
}
