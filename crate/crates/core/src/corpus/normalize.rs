use crate::error::{Error, Result};
use crate::phrasing::DependencyTriplet;

/// Lowercases a token and strips punctuation from its edges. Apostrophes
/// and intra-word hyphens survive; tokens that are pure punctuation vanish.
pub fn clean_token(token: &str) -> Option<String> {
    let trimmed = token.trim_matches(|c: char| c.is_ascii_punctuation() && c != '\'');
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Whitespace-tokenizes a raw caption and cleans every token.
pub fn normalize(caption: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = caption.split_whitespace().filter_map(clean_token).collect();
    if tokens.is_empty() {
        return Err(Error::InvalidRecord(format!(
            "caption {caption:?} is empty after normalization"
        )));
    }
    Ok(tokens)
}

/// Cleans parser tokens and re-indexes the triplets onto the surviving
/// tokens. Triplets that touch a removed token (punctuation) are dropped.
pub fn normalize_parsed<S: AsRef<str>>(
    tokens: &[S],
    triplets: &[DependencyTriplet],
) -> Result<(Vec<String>, Vec<DependencyTriplet>)> {
    let mut kept = Vec::with_capacity(tokens.len());
    let mut remap = Vec::with_capacity(tokens.len());
    for tok in tokens {
        match clean_token(tok.as_ref()) {
            Some(t) => {
                remap.push(Some(kept.len()));
                kept.push(t);
            }
            None => remap.push(None),
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidRecord(
            "token list is empty after normalization".into(),
        ));
    }
    let mut out = Vec::with_capacity(triplets.len());
    for t in triplets {
        t.validate(tokens.len())?;
        if let (Some(g), Some(d)) = (remap[t.governor], remap[t.dependent]) {
            out.push(DependencyTriplet {
                relation: t.relation.clone(),
                governor: g,
                dependent: d,
            });
        }
    }
    Ok((kept, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_terminal_period_and_lowercases() {
        assert_eq!(
            normalize("A man in a blue shirt standing in a garden.").unwrap(),
            vec!["a", "man", "in", "a", "blue", "shirt", "standing", "in", "a", "garden"]
        );
        assert_eq!(normalize("DOG").unwrap(), vec!["dog"]);
    }

    #[test]
    fn keeps_hyphens_and_apostrophes() {
        assert_eq!(
            normalize("a tree-lined street").unwrap(),
            vec!["a", "tree-lined", "street"]
        );
        assert_eq!(normalize("the dog's ball,").unwrap(), vec!["the", "dog's", "ball"]);
    }

    #[test]
    fn empty_caption_rejected() {
        assert!(normalize(" . , ").is_err());
    }

    #[test]
    fn punctuation_tokens_removed_and_triplets_reindexed() {
        let toks = ["Men", "look", ",", "while", "the", "one", "points", "."];
        let trips = [
            DependencyTriplet::new("punct", 1, 2),
            DependencyTriplet::new("det", 5, 4),
            DependencyTriplet::new("nsubj", 6, 5),
        ];
        let (t, tr) = normalize_parsed(&toks, &trips).unwrap();
        assert_eq!(t, vec!["men", "look", "while", "the", "one", "points"]);
        assert_eq!(
            tr,
            vec![
                DependencyTriplet::new("det", 4, 3),
                DependencyTriplet::new("nsubj", 5, 4)
            ]
        );
    }
}
