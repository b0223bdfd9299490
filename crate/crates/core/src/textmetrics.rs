//! Word-level edit distance and word error rate.
//!
//! Text is normalized before alignment: lowercased, every character that is
//! not a letter, digit or apostrophe is dropped, and the result is split on
//! whitespace. The reserved ASR noise token [`NOISE_TOKEN`] is passed through
//! untouched so that it can never collapse into a real reference word.

use std::fmt;

/// Token emitted by the simulated ASR channel in place of a garbled word.
pub const NOISE_TOKEN: &str = "~noise~";

/// Normalized word tokens. Every token is non-empty and whitespace-free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// Builds a sequence from tokens that are already normalized.
    ///
    /// Each token is re-normalized, so the result is valid even if the input
    /// was not; tokens that vanish are dropped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        for t in tokens {
            out.extend(normalize_tokens(t.as_ref()).0);
        }
        TokenSequence(out)
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Lowercase, strip everything but letters/digits/apostrophes, split on whitespace.
pub fn normalize_tokens(text: &str) -> TokenSequence {
    let tokens = text
        .split_whitespace()
        .filter_map(|chunk| {
            if chunk == NOISE_TOKEN {
                return Some(NOISE_TOKEN.to_string());
            }
            let word: String = chunk
                .to_lowercase()
                .chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .collect();
            (!word.is_empty()).then_some(word)
        })
        .collect();
    TokenSequence(tokens)
}

/// Substitution/insertion/deletion counts of one minimum-cost alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Error rate under the empty-reference convention: with no reference
    /// words the denominator is taken as 1, so `WER(∅, ∅) = 0` and
    /// `WER(∅, hyp) = |hyp|`.
    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.reference_length.max(1) as f64
    }
}

fn cost_table(reference: &[String], hypothesis: &[String]) -> Vec<Vec<usize>> {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d
}

/// Token-level Levenshtein distance with unit costs.
pub fn levenshtein(a: &TokenSequence, b: &TokenSequence) -> usize {
    // Two-row variant; the full table is only needed for backtracking.
    let (a, b) = (&a.0, &b.0);
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Aligns `hypothesis` against `reference` and decomposes the distance.
///
/// When several optimal alignments exist the backtrace prefers the diagonal
/// move, then deletion, then insertion. Only the total is guaranteed to be
/// alignment-independent.
pub fn edit_counts(reference: &TokenSequence, hypothesis: &TokenSequence) -> EditCounts {
    let (r, h) = (&reference.0, &hypothesis.0);
    let d = cost_table(r, h);
    let mut counts = EditCounts {
        reference_length: r.len(),
        ..EditCounts::default()
    };
    let (mut i, mut j) = (r.len(), h.len());
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let mismatch = usize::from(r[i - 1] != h[j - 1]);
            if d[i][j] == d[i - 1][j - 1] + mismatch {
                counts.substitutions += mismatch;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// Word error rate between two raw texts after normalization.
pub fn wer(reference_text: &str, hypothesis_text: &str) -> f64 {
    edit_counts(
        &normalize_tokens(reference_text),
        &normalize_tokens(hypothesis_text),
    )
    .rate()
}
