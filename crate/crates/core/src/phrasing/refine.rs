//! NP refinement against the phrases a trained phrase decoder actually
//! produces for the same image.
//!
//! Leading words that never start a generated NP are moved back into the
//! abbreviated sentence, then trailing words that never end one. An NP that
//! shrinks below the allowed size is dissolved: all of its original words
//! become plain words again.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::pair::{AsNpPair, NounPhrase, Slot};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementContext {
    /// First words of generated NPs.
    pub starts: BTreeSet<String>,
    /// Last words of generated NPs.
    pub ends: BTreeSet<String>,
}

impl RefinementContext {
    pub fn from_phrases<I, P, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut ctx = Self::default();
        for p in phrases {
            let p = p.as_ref();
            if let (Some(first), Some(last)) = (p.first(), p.last()) {
                ctx.starts.insert(first.as_ref().to_string());
                ctx.ends.insert(last.as_ref().to_string());
            }
        }
        ctx
    }

    pub fn with_sets<S: AsRef<str>>(starts: &[S], ends: &[S]) -> Self {
        Self {
            starts: starts.iter().map(|s| s.as_ref().to_string()).collect(),
            ends: ends.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Outcome {
    Dissolve,
    /// Kept core `[start, end)` of the NP's tokens.
    Keep { start: usize, end: usize },
}

fn refine_np(tokens: &[String], ctx: &RefinementContext) -> Outcome {
    let (mut start, mut end) = (0, tokens.len());

    while start < end && !ctx.starts.contains(&tokens[start]) {
        start += 1;
    }
    if start > 0 && end - start == 1 {
        return Outcome::Dissolve;
    }
    // an emptied NP falls through to the second step, which dissolves it

    while end > start && !ctx.ends.contains(&tokens[end - 1]) {
        end -= 1;
    }
    let stripped = start > 0 || end < tokens.len();
    if stripped && end - start < 2 {
        return Outcome::Dissolve;
    }
    Outcome::Keep { start, end }
}

/// Applies both refinement steps to every NP of `pair`.
pub fn refine(pair: &AsNpPair, ctx: &RefinementContext) -> AsNpPair {
    let mut out = AsNpPair::default();
    for slot in &pair.slots {
        match slot {
            Slot::Word(w) => out.slots.push(Slot::Word(w.clone())),
            Slot::Phrase(i) => {
                let np = &pair.nps[*i];
                match refine_np(&np.tokens, ctx) {
                    Outcome::Dissolve => {
                        out.slots
                            .extend(np.tokens.iter().cloned().map(Slot::Word));
                    }
                    Outcome::Keep { start, end } => {
                        out.slots
                            .extend(np.tokens[..start].iter().cloned().map(Slot::Word));
                        out.slots.push(Slot::Phrase(out.nps.len()));
                        out.nps.push(NounPhrase {
                            tokens: np.tokens[start..end].to_vec(),
                            span: (np.span.0 + start, np.span.0 + end),
                        });
                        out.slots
                            .extend(np.tokens[end..].iter().cloned().map(Slot::Word));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn pair(caption: &str, spans: &[(usize, usize)]) -> AsNpPair {
        AsNpPair::from_spans(&words(caption), spans).unwrap()
    }

    #[test]
    fn covered_words_leave_pair_unchanged() {
        let p = pair("a brown dog runs", &[(0, 3)]);
        let ctx = RefinementContext::with_sets(&["a"], &["dog"]);
        assert_eq!(refine(&p, &ctx), p);
    }

    #[test]
    fn leading_words_move_before_the_slot() {
        let p = pair("box is full of a variety of foods", &[(2, 8)]);
        let ctx = RefinementContext::with_sets(&["a"], &["foods"]);
        let r = refine(&p, &ctx);
        assert_eq!(r.np_strings(), vec!["a variety of foods"]);
        assert_eq!(r.abbreviated_string(), "box is full of foods");
        assert_eq!(r.nps[0].span, (4, 8));
        assert_eq!(r.flatten(), p.flatten());
    }

    #[test]
    fn trailing_words_move_after_the_slot() {
        let p = pair("a blue shirt standing here", &[(0, 4)]);
        let ctx = RefinementContext::with_sets(&["a"], &["shirt"]);
        let r = refine(&p, &ctx);
        assert_eq!(r.np_strings(), vec!["a blue shirt"]);
        assert_eq!(r.abbreviated_string(), "shirt standing here");
    }

    #[test]
    fn stripping_to_one_word_in_first_step_dissolves() {
        let p = pair("in front points", &[(1, 3)]);
        let ctx = RefinementContext::with_sets(&["a"], &["points"]);
        let r = refine(&p, &ctx);
        assert!(r.nps.is_empty());
        assert_eq!(r.abbreviated_string(), "in front points");
    }

    #[test]
    fn stripping_to_empty_dissolves_original_words() {
        let p = pair("while the one", &[(1, 3)]);
        let ctx = RefinementContext::with_sets(&["the"], &["camera"]);
        let r = refine(&p, &ctx);
        assert!(r.nps.is_empty());
        assert_eq!(r.abbreviated_string(), "while the one");
    }

    #[test]
    fn first_step_dissolution_restores_prefix_once() {
        // prefix stripped in step 1, then everything stripped in step 2
        let p = pair("his index finger", &[(0, 3)]);
        let ctx = RefinementContext::with_sets(&["index"], &["man"]);
        let r = refine(&p, &ctx);
        assert_eq!(r.flatten(), words("his index finger"));
        assert!(r.nps.is_empty());
    }

    #[test]
    fn unstripped_single_word_np_survives() {
        let p = pair("dogs run", &[(0, 1)]);
        let ctx = RefinementContext::with_sets(&["dogs"], &["dogs"]);
        assert_eq!(refine(&p, &ctx), p);
    }

    #[test]
    fn context_from_generated_phrases() {
        let ctx = RefinementContext::from_phrases(vec![words("a dog"), words("the red ball")]);
        assert!(ctx.starts.contains("a") && ctx.starts.contains("the"));
        assert!(ctx.ends.contains("dog") && ctx.ends.contains("ball"));
        assert_eq!(ctx.starts.len(), 2);
    }
}
