//! Noun-phrase chunking from dependency triplets.
//!
//! Selected relations are grouped when they share a token and their covered
//! tokens form one contiguous run of the caption. Each group becomes an NP;
//! everything else stays a plain word of the abbreviated sentence.

use std::collections::BTreeMap;

use super::pair::{AsNpPair, DependencyTriplet};
use crate::error::Result;

const ALWAYS_SELECTED: &[&str] = &["det", "nummod", "amod", "compound", "nmod:of", "nmod:poss"];

/// Per-relation count of triplets that ended up inside an NP.
pub type RelationCounts = BTreeMap<String, usize>;

#[derive(Clone, Debug, PartialEq)]
pub struct ChunkOutcome {
    pub pair: AsNpPair,
    pub relations: RelationCounts,
}

pub fn chunk<S: AsRef<str>>(tokens: &[S], triplets: &[DependencyTriplet]) -> Result<AsNpPair> {
    chunk_with_stats(tokens, triplets).map(|o| o.pair)
}

pub fn chunk_with_stats<S: AsRef<str>>(
    tokens: &[S],
    triplets: &[DependencyTriplet],
) -> Result<ChunkOutcome> {
    for t in triplets {
        t.validate(tokens.len())?;
    }
    let selected = select(triplets);

    // (first, last) inclusive token range plus the triplets inside it
    let mut groups: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for component in components(&selected, |t| covered(t)) {
        if let Some(range) = contiguous_range(component.iter().map(|&i| &selected[i])) {
            groups.push((range, component));
            continue;
        }
        groups.extend(contiguous_groups(&selected, component));
    }

    // groups whose ranges overlap share tokens and are merged
    groups.sort_by_key(|(r, _)| *r);
    let mut merged: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for (range, members) in groups {
        match merged.last_mut() {
            Some((last, m)) if range.0 <= last.1 => {
                last.1 = last.1.max(range.1);
                m.extend(members);
            }
            _ => merged.push((range, members)),
        }
    }

    let spans: Vec<(usize, usize)> = merged.iter().map(|((a, b), _)| (*a, b + 1)).collect();
    let pair = AsNpPair::from_spans(tokens, &spans)?;
    let mut relations = RelationCounts::new();
    for (_, members) in &merged {
        for &i in members {
            *relations.entry(selected[i].relation.clone()).or_default() += 1;
        }
    }
    Ok(ChunkOutcome { pair, relations })
}

/// Within a component whose full coverage has a gap, repeatedly joins two
/// groups that share a token when their union stays contiguous. Groups that
/// are still gapped at the fixpoint are dropped.
fn contiguous_groups(
    selected: &[&DependencyTriplet],
    component: Vec<usize>,
) -> Vec<((usize, usize), Vec<usize>)> {
    let mut groups: Vec<Vec<usize>> = component.into_iter().map(|i| vec![i]).collect();
    let cover = |g: &[usize]| -> Vec<usize> {
        let mut toks: Vec<usize> = g.iter().flat_map(|&i| covered(selected[i])).collect();
        toks.sort_unstable();
        toks.dedup();
        toks
    };
    'outer: loop {
        for a in 0..groups.len() {
            for b in (a + 1)..groups.len() {
                let (ca, cb) = (cover(&groups[a]), cover(&groups[b]));
                if !ca.iter().any(|t| cb.contains(t)) {
                    continue;
                }
                let mut union: Vec<usize> = groups[a].iter().chain(&groups[b]).copied().collect();
                union.sort_unstable();
                if contiguous_range(union.iter().map(|&i| &selected[i])).is_some() {
                    groups.remove(b);
                    groups[a] = union;
                    continue 'outer;
                }
            }
        }
        break;
    }
    groups
        .into_iter()
        .filter_map(|g| contiguous_range(g.iter().map(|&i| &selected[i])).map(|r| (r, g)))
        .collect()
}

/// Applies the relation filter. `advmod` is kept only when it modifies a word
/// that is itself an adjectival modifier (e.g. "dimly lit room").
fn select(triplets: &[DependencyTriplet]) -> Vec<&DependencyTriplet> {
    let amod_dependents: Vec<usize> = triplets
        .iter()
        .filter(|t| t.relation == "amod")
        .map(|t| t.dependent)
        .collect();
    triplets
        .iter()
        .filter(|t| {
            ALWAYS_SELECTED.contains(&t.relation.as_str())
                || (t.relation == "advmod" && amod_dependents.contains(&t.governor))
        })
        .collect()
}

/// Tokens a selected triplet covers. An `of`-modifier spans everything from
/// its governor to its dependent, so the case word and any coordinated
/// material in between belong to the phrase.
fn covered(t: &DependencyTriplet) -> Vec<usize> {
    let (lo, hi) = (t.governor.min(t.dependent), t.governor.max(t.dependent));
    if t.relation == "nmod:of" {
        (lo..=hi).collect()
    } else {
        vec![lo, hi]
    }
}

fn contiguous_range<'a>(
    triplets: impl Iterator<Item = &'a &'a DependencyTriplet>,
) -> Option<(usize, usize)> {
    let mut toks: Vec<usize> = triplets.flat_map(|t| covered(t)).collect();
    toks.sort_unstable();
    toks.dedup();
    let (&first, &last) = (toks.first()?, toks.last()?);
    (last - first + 1 == toks.len()).then_some((first, last))
}

/// Connected components of triplets that share at least one covered token.
fn components<T>(items: &[T], cover: impl Fn(&T) -> Vec<usize>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..items.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let covers: Vec<Vec<usize>> = items.iter().map(&cover).collect();
    for a in 0..items.len() {
        for b in (a + 1)..items.len() {
            if covers[a].iter().any(|t| covers[b].contains(t)) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb] = ra;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..items.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}
