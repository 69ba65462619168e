//! Transcript normalization and edit-distance metrics (WER, CER, LCP).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A normalized transcript: lowercase, no punctuation but apostrophes,
/// single spaces between words.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript(String);

impl Transcript {
    pub fn new(raw: &str) -> Self {
        normalize_text(raw)
    }

    pub fn empty() -> Self {
        Self(String::new())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.0.split(' ').filter(|w| !w.is_empty()).collect()
    }

    pub fn word_count(&self) -> usize {
        self.words().len()
    }

    pub fn chars(&self) -> Vec<char> {
        self.0.chars().collect()
    }

    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }

    /// First `n` words.
    pub fn first_words(&self, n: usize) -> Transcript {
        Transcript(self.words().into_iter().take(n).collect::<Vec<_>>().join(" "))
    }

    /// First `n` characters, re-normalized (a trailing space is dropped).
    pub fn first_chars(&self, n: usize) -> Transcript {
        normalize_text(&self.0.chars().take(n).collect::<String>())
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Transcript {
    fn from(raw: &str) -> Self {
        normalize_text(raw)
    }
}

/// Lowercases, deletes punctuation (apostrophes survive) and collapses
/// whitespace runs to single spaces.
pub fn normalize_text(raw: &str) -> Transcript {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        let c = c.to_ascii_lowercase();
        if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '\'' {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    Transcript(out)
}

/// Substitution, deletion and insertion counts of a minimal alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditDistanceDetail {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    /// Reference length `N`.
    pub reference_len: usize,
}

impl EditDistanceDetail {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`.
    pub fn error_rate(&self) -> Result<f64> {
        if self.reference_len == 0 {
            return Err(Error::EmptyReference);
        }
        Ok(self.distance() as f64 / self.reference_len as f64)
    }
}

/// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
/// prefers substitution, then insertion, then deletion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditDistanceDetail {
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let mut cost = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        cost[i * width] = i;
    }
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * width + j - 1]
                + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = cost[(i - 1) * width + j] + 1;
            let ins = cost[i * width + j - 1] + 1;
            cost[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut detail = EditDistanceDetail {
        reference_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = cost[(i - 1) * width + j - 1];
            if same && here == diag {
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && here == diag + 1 {
                detail.substitutions += 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && here == cost[i * width + j - 1] + 1 {
            detail.insertions += 1;
            j -= 1;
        } else {
            detail.deletions += 1;
            i -= 1;
        }
    }
    detail
}

pub fn word_edit_distance(reference: &Transcript, hypothesis: &Transcript) -> EditDistanceDetail {
    edit_distance(&reference.words(), &hypothesis.words())
}

pub fn char_edit_distance(reference: &Transcript, hypothesis: &Transcript) -> EditDistanceDetail {
    edit_distance(&reference.chars(), &hypothesis.chars())
}

/// Word error rate. Values above 1 are possible and are not clamped.
pub fn wer(reference: &Transcript, hypothesis: &Transcript) -> Result<f64> {
    word_edit_distance(reference, hypothesis).error_rate()
}

/// Character error rate; spaces count as characters.
pub fn cer(reference: &Transcript, hypothesis: &Transcript) -> Result<f64> {
    char_edit_distance(reference, hypothesis).error_rate()
}

/// Length in characters of the longest common prefix.
pub fn lcp(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

/// `R = D(g(T(x)), y) / D(g(x), y)`.
pub fn effectiveness_ratio(d_transformed: f64, d_plain: f64) -> Result<f64> {
    if d_plain <= 0.0 || !d_plain.is_finite() {
        return Err(Error::UndefinedRatio);
    }
    Ok(d_transformed / d_plain)
}
