//! Word error rate under a minimal-cost Levenshtein alignment.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_words: usize,
}

impl WerBreakdown {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / N`. `None` for an empty reference with a non-empty
    /// hypothesis; zero when both are empty.
    pub fn rate(&self) -> Option<f64> {
        match (self.reference_words, self.errors()) {
            (0, 0) => Some(0.0),
            (0, _) => None,
            (n, e) => Some(e as f64 / n as f64),
        }
    }
}

impl AddAssign for WerBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
        self.reference_words += rhs.reference_words;
    }
}

/// Aligns `hypothesis` against `reference` with unit costs.
///
/// Among minimal alignments the one with the fewest insertions plus
/// deletions wins, i.e. substitutions are preferred over an
/// insertion/deletion pair.
pub fn wer<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T]) -> WerBreakdown {
    let (n, m) = (reference.len(), hypothesis.len());
    // (cost, insertions + deletions, S, I, D) per cell; compared on the first two.
    type Cell = (usize, usize, usize, usize, usize);
    let mut prev: Vec<Cell> = (0..=m).map(|j| (j, j, 0, j, 0)).collect();
    let mut cur: Vec<Cell> = vec![(0, 0, 0, 0, 0); m + 1];
    for i in 1..=n {
        cur[0] = (i, i, 0, 0, i);
        for j in 1..=m {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            let d = prev[j - 1];
            let diag = if same {
                d
            } else {
                (d.0 + 1, d.1, d.2 + 1, d.3, d.4)
            };
            let u = prev[j];
            let del = (u.0 + 1, u.1 + 1, u.2, u.3, u.4 + 1);
            let l = cur[j - 1];
            let ins = (l.0 + 1, l.1 + 1, l.2, l.3 + 1, l.4);
            let mut best = diag;
            for cand in [del, ins] {
                if (cand.0, cand.1) < (best.0, best.1) {
                    best = cand;
                }
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (_, _, s, ins, del) = prev[m];
    WerBreakdown {
        substitutions: s,
        insertions: ins,
        deletions: del,
        reference_words: n,
    }
}

/// Lowercases, strips punctuation (apostrophes kept) and splits on whitespace.
pub fn normalize_words(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '\'' || *c == '\u{FFFD}')
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// WER of two raw texts after [`normalize_words`].
pub fn text_wer(reference: &str, hypothesis: &str) -> WerBreakdown {
    wer(&normalize_words(reference), &normalize_words(hypothesis))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn examples() {
        let b = wer(&w("a b c"), &w("a x c"));
        assert_eq!((b.substitutions, b.insertions, b.deletions), (1, 0, 0));
        assert!((b.rate().unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let b = wer(&w("a b c"), &w("a b c"));
        assert_eq!(b.errors(), 0);
        assert_eq!(b.rate(), Some(0.0));

        let b = wer(&w("a b"), &w("a b b b"));
        assert_eq!((b.substitutions, b.insertions, b.deletions), (0, 2, 0));
        assert_eq!(b.rate(), Some(1.0));
    }

    #[test]
    fn prefers_substitution() {
        let b = wer(&w("a b"), &w("b c"));
        assert_eq!((b.substitutions, b.insertions, b.deletions), (2, 0, 0));
    }

    #[test]
    fn empty_reference() {
        let none: Vec<&str> = Vec::new();
        let b = wer(&none, &w("x y"));
        assert_eq!(b.insertions, 2);
        assert_eq!(b.rate(), None);
        assert_eq!(wer(&none, &none).rate(), Some(0.0));
        let b = wer(&w("x y"), &none);
        assert_eq!(b.deletions, 2);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_words("Hello, World!  it's"), vec!["hello", "world", "it's"]);
        let b = text_wer("The cat.", "the  CAT");
        assert_eq!(b.errors(), 0);
    }

    #[test]
    fn accumulates() {
        let mut total = WerBreakdown::default();
        total += wer(&w("a b"), &w("a"));
        total += wer(&w("c d e"), &w("c x e"));
        assert_eq!(total.errors(), 2);
        assert_eq!(total.reference_words, 5);
    }
}
