use std::collections::HashMap;

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(|s| s.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped n-gram matches and total candidate n-grams of one caption.
pub fn clipped_matches<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
    for r in references {
        for (g, c) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Reference length closest to `len`, shorter on ties.
fn closest_ref_len<S>(len: usize, references: &[Vec<S>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(len), r))
        .unwrap_or(0)
}

/// Corpus BLEU-n: geometric mean of micro-averaged clipped precisions for
/// orders 1..=n, times the brevity penalty when enabled.
pub fn bleu<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<Vec<S>>],
    n: usize,
    brevity_penalty: bool,
) -> f64 {
    assert!(n >= 1, "BLEU order must be at least 1");
    assert_eq!(candidates.len(), references.len(), "one reference set per candidate");
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, refs) in candidates.iter().zip(references) {
        for k in 1..=n {
            let (m, t) = clipped_matches(c, refs, k);
            matched[k - 1] += m;
            total[k - 1] += t;
        }
        c_len += c.len();
        r_len += closest_ref_len(c.len(), refs);
    }
    let mut log_sum = 0.0;
    for k in 0..n {
        if matched[k] == 0 || total[k] == 0 {
            return 0.0;
        }
        log_sum += (matched[k] as f64 / total[k] as f64).ln();
    }
    let precision = (log_sum / n as f64).exp();
    let bp = if !brevity_penalty || c_len >= r_len {
        1.0
    } else if c_len == 0 {
        0.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    bp * precision
}

pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Balanced LCS F-measure against the best-matching reference.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>]) -> f64 {
    references
        .iter()
        .map(|r| {
            let l = lcs_len(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / candidate.len() as f64;
            let rec = l / r.len() as f64;
            2.0 * p * rec / (p + rec)
        })
        .fold(0.0, f64::max)
}

/// Mean ROUGE-L over a corpus.
pub fn corpus_rouge_l<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<Vec<S>>]) -> f64 {
    if candidates.is_empty() {
        return 0.0;
    }
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_l(c, r))
        .sum();
    sum / candidates.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_caption_scores_one() {
        let c = vec![t("a dog runs on the grass")];
        let r = vec![vec![t("a dog runs on the grass")]];
        for n in 1..=4 {
            assert!((bleu(&c, &r, n, false) - 1.0).abs() < 1e-12);
        }
        assert!((rouge_l(&c[0], &r[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_hand_case() {
        let (m, total) = clipped_matches(&t("the the the"), &[t("the cat")], 1);
        assert_eq!((m, total), (1, 3));
        let c = vec![t("the the the")];
        let r = vec![vec![t("the cat")]];
        assert!((bleu(&c, &r, 1, false) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_half_length() {
        let c = vec![t("a dog")];
        let r = vec![vec![t("a dog runs fast")]];
        let plain = bleu(&c, &r, 1, false);
        let bp = bleu(&c, &r, 1, true);
        assert!((plain - 1.0).abs() < 1e-12);
        assert!((bp - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_hand_case() {
        let f = rouge_l(&t("a b c d"), &[t("a c d")]);
        let (p, r) = (0.75, 1.0);
        assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert_eq!(rouge_l(&t("x y"), &[t("a b")]), 0.0);
    }

    #[test]
    fn missing_order_gives_zero() {
        let c = vec![t("a b")];
        let r = vec![vec![t("a b")]];
        assert_eq!(bleu(&c, &r, 3, false), 0.0);
    }
}
