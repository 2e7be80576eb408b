use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phrasing::{AsNpPair, Slot};

/// Length caps applied after refinement. Overlong NPs lose their *leading*
/// words; overlong abbreviated sentences lose their trailing slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    pub as_limit: usize,
    pub np_limit: usize,
}

impl TruncationPolicy {
    pub fn new(as_limit: usize, np_limit: usize) -> Result<Self> {
        let p = Self { as_limit, np_limit };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_limit == 0 || self.np_limit == 0 {
            return Err(Error::Contract(
                "truncation limits must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn flickr8k() -> Self {
        Self { as_limit: 20, np_limit: 7 }
    }

    pub fn flickr30k() -> Self {
        Self { as_limit: 30, np_limit: 7 }
    }

    pub fn mscoco() -> Self {
        Self { as_limit: 18, np_limit: 7 }
    }

    pub fn affects(&self, pair: &AsNpPair) -> bool {
        pair.slots.len() > self.as_limit || pair.nps.iter().any(|np| np.tokens.len() > self.np_limit)
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self::flickr8k()
    }
}

pub fn truncate(pair: &AsNpPair, policy: &TruncationPolicy) -> AsNpPair {
    let mut out = AsNpPair::default();
    for slot in pair.slots.iter().take(policy.as_limit) {
        match slot {
            Slot::Word(w) => out.slots.push(Slot::Word(w.clone())),
            Slot::Phrase(i) => {
                let mut np = pair.nps[*i].clone();
                if np.tokens.len() > policy.np_limit {
                    let cut = np.tokens.len() - policy.np_limit;
                    np.tokens.drain(..cut);
                    np.span.0 += cut;
                }
                out.slots.push(Slot::Phrase(out.nps.len()));
                out.nps.push(np);
            }
        }
    }
    out
}
