//! Payload correction by edit distance to high-frequency keywords.
//!
//! Every token of a generated payload gets the Levenshtein distance `d` to its
//! nearest keyword. Tokens with `d <= LT` are left alone, tokens with
//! `LT < d <= UT` are pulled toward that keyword by replaying its optimal edit
//! script until `d < LT`, and tokens with `d > UT` are treated as ordinary
//! literals. A payload with no token within `UT` of any keyword, or with fewer
//! than `min_tokens` tokens, is discarded.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Origin, Payload, Result};

pub const DEFAULT_KEYWORDS: usize = 5;

/// Most frequent case-folded tokens of a malicious corpus, ordered by rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    keywords: Vec<(String, usize)>,
}

impl KeywordSet {
    pub fn from_ranked(keywords: Vec<(String, usize)>) -> Result<Self> {
        if keywords.is_empty() {
            return Err(Error::InvalidArgument("keyword set is empty".into()));
        }
        let keywords = keywords
            .into_iter()
            .map(|(k, n)| (k.to_lowercase(), n))
            .collect::<Vec<_>>();
        if keywords
            .iter()
            .any(|(k, _)| k.is_empty() || k.chars().any(char::is_whitespace))
        {
            return Err(Error::InvalidArgument(
                "keywords must be non-empty single tokens".into(),
            ));
        }
        Ok(KeywordSet { keywords })
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> + '_ {
        self.keywords.iter().map(|(k, _)| k.as_str())
    }

    pub fn ranked(&self) -> &[(String, usize)] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    /// Nearest keyword and its distance; ties go to the higher-ranked keyword.
    pub fn nearest(&self, token: &str) -> (&str, usize) {
        self.keywords
            .iter()
            .map(|(k, _)| (k.as_str(), levenshtein(token, k)))
            .min_by_key(|&(_, d)| d)
            .expect("keyword set is never empty")
    }

    /// One `keyword<TAB>count` line per keyword.
    pub fn to_text(&self) -> String {
        self.keywords.iter().map(|(k, n)| format!("{k}\t{n}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let keywords = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (k, n) = l.split_once('\t').unwrap_or((l, "0"));
                let n = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad keyword count in line `{l}`")))?;
                Ok((k.trim().to_owned(), n))
            })
            .collect::<Result<Vec<_>>>()?;
        KeywordSet::from_ranked(keywords)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Top-`k` case-folded tokens by frequency; equal counts rank alphabetically.
pub fn extract_keywords<'a>(corpus: impl IntoIterator<Item = &'a Payload>, k: usize) -> Result<KeywordSet> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in corpus {
        for t in p.token_texts() {
            *counts.entry(t.to_lowercase()).or_default() += 1;
        }
    }
    if counts.len() < k || k == 0 {
        return Err(Error::NotEnoughTokens {
            needed: k.max(1),
            found: counts.len(),
        });
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    KeywordSet::from_ranked(ranked)
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + usize::from(ca != cb));
            diag = above;
        }
    }
    row[b.len()]
}

/// One column of an optimal alignment between two strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditStep {
    Keep(char),
    Substitute { from: char, to: char },
    Insert(char),
    Delete(char),
}

impl EditStep {
    fn is_edit(self) -> bool {
        !matches!(self, EditStep::Keep(_))
    }
}

/// Optimal left-to-right edit script from `a` to `b`. Its number of edits
/// equals `levenshtein(a, b)`.
pub fn edit_script(a: &str, b: &str) -> Vec<EditStep> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]) {
            steps.push(if a[i - 1] == b[j - 1] {
                EditStep::Keep(a[i - 1])
            } else {
                EditStep::Substitute {
                    from: a[i - 1],
                    to: b[j - 1],
                }
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            steps.push(EditStep::Delete(a[i - 1]));
            i -= 1;
        } else {
            steps.push(EditStep::Insert(b[j - 1]));
            j -= 1;
        }
    }
    steps.reverse();
    steps
}

/// The string obtained after applying the first `k` edits of `script`.
pub fn apply_edits(script: &[EditStep], k: usize) -> String {
    let mut out = String::new();
    let mut done = 0;
    for &step in script {
        let apply = step.is_edit() && done < k;
        if step.is_edit() {
            done += 1;
        }
        match step {
            EditStep::Keep(c) => out.push(c),
            EditStep::Substitute { from, to } => out.push(if apply { to } else { from }),
            EditStep::Insert(c) => {
                if apply {
                    out.push(c)
                }
            }
            EditStep::Delete(c) => {
                if !apply {
                    out.push(c)
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectorConfig {
    pub lower_threshold: usize,
    pub upper_threshold: usize,
    pub min_tokens: usize,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        CorrectorConfig {
            lower_threshold: 4,
            upper_threshold: 8,
            min_tokens: 3,
        }
    }
}

impl CorrectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lower_threshold == 0 || self.lower_threshold >= self.upper_threshold {
            return Err(Error::InvalidArgument(format!(
                "thresholds must satisfy 0 < LT < UT (got LT={}, UT={})",
                self.lower_threshold, self.upper_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiscardReason {
    TooShort { tokens: usize, min: usize },
    NoKeywordLikeToken,
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiscardReason::TooShort { tokens, min } => write!(f, "too-short:{tokens}<{min}"),
            DiscardReason::NoKeywordLikeToken => f.write_str("no-keyword-like-token"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Correction {
    Kept(Payload),
    Corrected(Payload),
    Discarded(DiscardReason),
}

impl Correction {
    pub fn payload(&self) -> Option<&Payload> {
        match self {
            Correction::Kept(p) | Correction::Corrected(p) => Some(p),
            Correction::Discarded(_) => None,
        }
    }

    pub fn into_payload(self) -> Option<Payload> {
        match self {
            Correction::Kept(p) | Correction::Corrected(p) => Some(p),
            Correction::Discarded(_) => None,
        }
    }
}

/// Pulls `token` toward `keyword` until its distance drops below `lt`.
fn pull_toward(token: &str, keyword: &str, distance: usize, lt: usize) -> String {
    let script = edit_script(token, keyword);
    let mut k = distance + 1 - lt;
    loop {
        let out = apply_edits(&script, k);
        if !out.is_empty() || k >= distance {
            return out;
        }
        k += 1;
    }
}

pub fn correct(payload: &Payload, keywords: &KeywordSet, cfg: &CorrectorConfig) -> Correction {
    let n = payload.len();
    if n < cfg.min_tokens {
        return Correction::Discarded(DiscardReason::TooShort {
            tokens: n,
            min: cfg.min_tokens,
        });
    }
    let folded: Vec<String> = payload.token_texts().map(str::to_lowercase).collect();
    let nearest: Vec<(&str, usize)> = folded.iter().map(|t| keywords.nearest(t)).collect();
    if nearest.iter().all(|&(_, d)| d > cfg.upper_threshold) {
        return Correction::Discarded(DiscardReason::NoKeywordLikeToken);
    }
    let mut rewritten = false;
    let tokens: Vec<String> = payload
        .token_texts()
        .zip(&folded)
        .zip(&nearest)
        .map(|((orig, folded), &(kw, d))| {
            if d > cfg.lower_threshold && d <= cfg.upper_threshold {
                rewritten = true;
                pull_toward(folded, kw, d, cfg.lower_threshold)
            } else {
                orig.to_owned()
            }
        })
        .collect();
    if rewritten {
        Correction::Corrected(Payload::from_tokens(&tokens, Origin::Corrected))
    } else {
        Correction::Kept(Payload::from_tokens(&tokens, payload.origin()))
    }
}
