//! Gap-penalized common-subsequence alignment.
//!
//! The score of a common subsequence with matched index pairs
//! `(m_1, n_1) < ... < (m_k, n_k)` is `k - g_p * gaps`, where a gap is any
//! consecutive pair of matches that is not adjacent in both strings. Leading
//! and trailing unmatched characters cost nothing, so the alignment is local
//! in the Smith-Waterman sense and every gap region costs `g_p` regardless
//! of its length.
//!
//! The dynamic program keeps, for every cell `(i, j)` with `a[i] == b[j]`, the
//! best alignment ending with that match. An alignment either extends the one
//! ending at `(i-1, j-1)` for free or jumps from anywhere strictly up-left at a
//! cost of `g_p`; the jump source is read from a running 2-D prefix maximum, so
//! the whole table is `O(|a| * |b|)` cells.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::Signature;
use crate::{Error, Result};

pub const GAP_PENALTY: f64 = 0.8;

const SCORE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignResult {
    /// Matched characters in order.
    pub subsequence: String,
    /// Maximal runs of the subsequence that were contiguous in every aligned
    /// source; concatenated they equal `subsequence`.
    pub segments: Vec<String>,
    pub matches: usize,
    pub gaps: usize,
    pub score: f64,
}

impl AlignResult {
    pub fn empty() -> Self {
        AlignResult {
            subsequence: String::new(),
            segments: Vec::new(),
            matches: 0,
            gaps: 0,
            score: 0.0,
        }
    }

    fn from_segments(segments: Vec<String>, gap_penalty: f64) -> Self {
        let subsequence: String = segments.concat();
        let matches = subsequence.chars().count();
        let gaps = segments.len().saturating_sub(1);
        AlignResult {
            subsequence,
            segments,
            matches,
            gaps,
            score: match_score(matches, gaps, gap_penalty),
        }
    }
}

pub fn match_score(matches: usize, gaps: usize, gap_penalty: f64) -> f64 {
    matches as f64 - gap_penalty * gaps as f64
}

#[derive(Debug, Clone)]
struct Cand {
    score: f64,
    matches: usize,
    seq: Vec<char>,
    /// `breaks[k]` is true when a gap sits between `seq[k]` and `seq[k + 1]`.
    breaks: Vec<bool>,
}

impl Cand {
    /// Higher score wins, then more matches, then the lexicographically
    /// smaller subsequence. `Greater` means `self` is preferred.
    fn rank(&self, other: &Cand) -> Ordering {
        let ds = self.score - other.score;
        if ds.abs() > SCORE_EPS {
            return if ds > 0.0 { Ordering::Greater } else { Ordering::Less };
        }
        self.matches.cmp(&other.matches).then_with(|| other.seq.cmp(&self.seq))
    }

    fn extend(&self, c: char, gap: bool, gap_penalty: f64) -> Cand {
        let mut seq = self.seq.clone();
        seq.push(c);
        let mut breaks = self.breaks.clone();
        breaks.push(gap);
        Cand {
            score: self.score + 1.0 - if gap { gap_penalty } else { 0.0 },
            matches: self.matches + 1,
            seq,
            breaks,
        }
    }

    fn into_result(self, gap_penalty: f64) -> AlignResult {
        let mut segments = Vec::new();
        let mut cur = String::new();
        for (k, c) in self.seq.iter().enumerate() {
            if k > 0 && self.breaks[k - 1] {
                segments.push(std::mem::take(&mut cur));
            }
            cur.push(*c);
        }
        if !cur.is_empty() {
            segments.push(cur);
        }
        AlignResult::from_segments(segments, gap_penalty)
    }
}

fn better<'a>(x: Option<&'a Cand>, y: Option<&'a Cand>) -> Option<&'a Cand> {
    match (x, y) {
        (Some(x), Some(y)) => Some(if y.rank(x) == Ordering::Greater { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Core table. `a_breaks[k]` marks a forced gap between `a[k]` and `a[k+1]`
/// (used when `a` is itself the result of an earlier alignment).
fn align_chars(a: &[char], a_breaks: &[bool], b: &[char], gap_penalty: f64) -> AlignResult {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return AlignResult::empty();
    }
    let w = m + 1;
    let idx = |i: usize, j: usize| i * w + j;
    let mut end: Vec<Option<Cand>> = vec![None; (n + 1) * w];
    // prefix[i][j] = best alignment ending at any (i', j') with i' <= i, j' <= j.
    let mut prefix: Vec<Option<Cand>> = vec![None; (n + 1) * w];
    for i in 1..=n {
        for j in 1..=m {
            if a[i - 1] == b[j - 1] {
                let c = a[i - 1];
                let mut best = Cand {
                    score: 1.0,
                    matches: 1,
                    seq: vec![c],
                    breaks: Vec::new(),
                };
                if let Some(prev) = &end[idx(i - 1, j - 1)] {
                    let forced = i >= 2 && a_breaks.get(i - 2).copied().unwrap_or(false);
                    let cand = prev.extend(c, forced, gap_penalty);
                    if cand.rank(&best) == Ordering::Greater {
                        best = cand;
                    }
                }
                let jump_from = better(
                    if i >= 2 {
                        prefix[idx(i - 2, j - 1)].as_ref()
                    } else {
                        None
                    },
                    if j >= 2 {
                        prefix[idx(i - 1, j - 2)].as_ref()
                    } else {
                        None
                    },
                );
                if let Some(src) = jump_from {
                    let cand = src.extend(c, true, gap_penalty);
                    if cand.rank(&best) == Ordering::Greater {
                        best = cand;
                    }
                }
                end[idx(i, j)] = Some(best);
            }
            let p = better(
                better(prefix[idx(i - 1, j)].as_ref(), prefix[idx(i, j - 1)].as_ref()),
                end[idx(i, j)].as_ref(),
            )
            .cloned();
            prefix[idx(i, j)] = p;
        }
    }
    match prefix[idx(n, m)].take() {
        Some(c) => c.into_result(gap_penalty),
        None => AlignResult::empty(),
    }
}

/// Best-scoring common subsequence of `a` and `b`.
pub fn align_pair(a: &str, b: &str, gap_penalty: f64) -> AlignResult {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    align_chars(&a, &[], &b, gap_penalty)
}

/// Progressive fold: aligns the first two members, then aligns the running
/// result against each further member in order. Gaps found in earlier steps
/// stay gaps, so the result's segments are contiguous in every member. The
/// fold is order dependent and not guaranteed to be score-optimal over the
/// whole group.
pub fn align_group<S: AsRef<str>>(group: &[S], gap_penalty: f64) -> Result<AlignResult> {
    let (first, rest) = group
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("align_group needs a non-empty group".into()))?;
    let first = first.as_ref();
    let mut acc = if first.is_empty() {
        AlignResult::empty()
    } else {
        AlignResult::from_segments(vec![first.to_owned()], gap_penalty)
    };
    for member in rest {
        if acc.matches == 0 {
            break;
        }
        let (chars, breaks) = flatten(&acc.segments);
        let b: Vec<char> = member.as_ref().chars().collect();
        acc = align_chars(&chars, &breaks, &b, gap_penalty);
    }
    Ok(acc)
}

fn flatten(segments: &[String]) -> (Vec<char>, Vec<bool>) {
    let mut chars = Vec::new();
    let mut breaks = Vec::new();
    for seg in segments {
        if !chars.is_empty() {
            *breaks.last_mut().unwrap() = true;
        }
        for c in seg.chars() {
            chars.push(c);
            breaks.push(false);
        }
    }
    breaks.pop();
    (chars, breaks)
}

/// Best placement of a fixed subsequence `sub` inside both strings, or `None`
/// when it is not a common subsequence.
pub fn placement_score(a: &str, b: &str, sub: &str, gap_penalty: f64) -> Option<AlignResult> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let s: Vec<char> = sub.chars().collect();
    if s.is_empty() {
        return Some(AlignResult::empty());
    }
    // layer[(i, j)] = (score, breaks) with s[k] matched at a[i], b[j].
    type Cell = Option<(f64, Vec<bool>)>;
    let mut layer: Vec<Cell> = vec![None; a.len() * b.len()];
    let at = |i: usize, j: usize| i * b.len() + j;
    for i in 0..a.len() {
        for j in 0..b.len() {
            if a[i] == s[0] && b[j] == s[0] {
                layer[at(i, j)] = Some((1.0, Vec::new()));
            }
        }
    }
    for &c in &s[1..] {
        let mut next: Vec<Cell> = vec![None; a.len() * b.len()];
        for i in 0..a.len() {
            for j in 0..b.len() {
                if a[i] != c || b[j] != c {
                    continue;
                }
                let mut best: Cell = None;
                for pi in 0..i {
                    for pj in 0..j {
                        if let Some((sc, br)) = &layer[at(pi, pj)] {
                            let gap = !(pi + 1 == i && pj + 1 == j);
                            let score = sc + 1.0 - if gap { gap_penalty } else { 0.0 };
                            if best.as_ref().is_none_or(|(bs, _)| score > *bs + SCORE_EPS) {
                                let mut br = br.clone();
                                br.push(gap);
                                best = Some((score, br));
                            }
                        }
                    }
                }
                next[at(i, j)] = best;
            }
        }
        layer = next;
    }
    let (_, breaks) = layer
        .into_iter()
        .flatten()
        .fold(None::<(f64, Vec<bool>)>, |acc, cur| match acc {
            Some(a) if a.0 + SCORE_EPS >= cur.0 => Some(a),
            _ => Some(cur),
        })?;
    let cand = Cand {
        score: 0.0,
        matches: s.len(),
        seq: s,
        breaks,
    };
    Some(cand.into_result(gap_penalty))
}

/// Renders an alignment as a signature: `\S*` before, between and after the
/// contiguous segments.
pub fn emit_signature(ar: &AlignResult) -> Result<Signature> {
    if ar.subsequence.is_empty() || ar.segments.is_empty() {
        return Err(Error::NothingToEmit);
    }
    Signature::new(&ar.segments)
}
