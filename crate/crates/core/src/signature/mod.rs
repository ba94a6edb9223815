//! Signature mining from bypassing payloads.
//!
//! Tokens are scored by how much perturbing them changes a decider's verdict,
//! the frequently decisive ones are clustered by edit distance, each cluster
//! is reduced to a gap-penalized common subsequence, and that subsequence is
//! rendered as a `\S*`-separated pattern. Candidates are only kept when they
//! match no benign payload.

mod align;
mod cluster;
mod pattern;
mod scoring;
mod validate;

use serde::{Deserialize, Serialize};

pub use align::{align_group, align_pair, emit_signature, match_score, placement_score, AlignResult, GAP_PENALTY};
pub use cluster::{cluster, DEFAULT_RADIUS};
pub use pattern::{match_signature, Signature, WILDCARD};
pub use scoring::{
    score_tokens, select_important, Decider, ImportantToken, ScoreVector, SelectParams, REPLACEMENT_TOKEN,
};
pub use validate::{validate_signatures, SignatureVerdict, ValidationReport};

use crate::{Payload, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningParams {
    pub select: SelectParams,
    pub radius: usize,
    pub gap_penalty: f64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            select: SelectParams::default(),
            radius: DEFAULT_RADIUS,
            gap_penalty: GAP_PENALTY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningOutput {
    pub scores: Vec<Vec<ScoreVector>>,
    pub important: Vec<ImportantToken>,
    pub groups: Vec<Vec<String>>,
    pub alignments: Vec<AlignResult>,
    /// Distinct emitted signatures in group order, not yet validated.
    pub signatures: Vec<Signature>,
}

/// Score, select, cluster, align and emit. Empty payloads are skipped.
pub fn mine<'a>(
    decider: &dyn Decider,
    payloads: impl IntoIterator<Item = &'a Payload>,
    params: &MiningParams,
) -> Result<MiningOutput> {
    let scores = payloads
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(|p| score_tokens(decider, p))
        .collect::<Result<Vec<_>>>()?;
    let important = select_important(&scores, &params.select);
    let tokens: Vec<&str> = important.iter().map(|t| t.token.as_str()).collect();
    let groups = if tokens.is_empty() {
        Vec::new()
    } else {
        cluster(&tokens, params.radius)
    };
    let mut alignments = Vec::with_capacity(groups.len());
    let mut signatures: Vec<Signature> = Vec::new();
    for group in &groups {
        let ar = align_group(group, params.gap_penalty)?;
        if let Ok(sig) = emit_signature(&ar) {
            if !signatures.contains(&sig) {
                signatures.push(sig);
            }
        }
        alignments.push(ar);
    }
    Ok(MiningOutput {
        scores,
        important,
        groups,
        alignments,
        signatures,
    })
}

/// Signatures of the individual members of every multi-token group that
/// produced no accepted signature, either because the members share no
/// subsequence or because the group's signature was rejected. Members already
/// covered by an accepted signature are left out.
pub fn split_rejected(mined: &MiningOutput, report: &ValidationReport) -> Vec<Signature> {
    let accepted = report.accepted();
    let mut out: Vec<Signature> = Vec::new();
    for (group, ar) in mined.groups.iter().zip(&mined.alignments) {
        if group.len() < 2 {
            continue;
        }
        if let Ok(sig) = emit_signature(ar) {
            if accepted.contains(&sig) {
                continue;
            }
        }
        for token in group {
            if let Ok(s) = Signature::new(&[token.as_str()]) {
                if !accepted.contains(&s) && !out.contains(&s) && !mined.signatures.contains(&s) {
                    out.push(s);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mockwaf::{Rule, RuleSet};
    use crate::{Label, Origin};

    #[test]
    fn mines_tautology_signature() {
        let waf = RuleSet::new(
            vec![Rule {
                id: "t".into(),
                pattern: Signature::parse(r"\S*1=1\S*").unwrap(),
                description: String::new(),
            }],
            1,
        )
        .unwrap();
        let payloads: Vec<Payload> = (0..5)
            .map(|i| Payload::new(format!("SELECT f{i} FROM t WHERE a=1 or 1=1 #c{i}"), Origin::Malicious))
            .collect();
        assert!(payloads.iter().all(|p| waf.classify(p) == Label::Rejected));
        let out = mine(&waf, &payloads, &MiningParams::default()).unwrap();
        assert_eq!(out.important[0].token, "1=1");
        assert_eq!(out.signatures[0].render(), r"\S*1=1\S*");
    }

    #[test]
    fn splits_groups_that_hit_benign() {
        let sig = |s: &str| Signature::parse(s).unwrap();
        let mined = MiningOutput {
            scores: Vec::new(),
            important: Vec::new(),
            groups: vec![vec!["where".into(), "er".into()], vec!["limit".into()]],
            alignments: vec![
                align_group(&["where", "er"], GAP_PENALTY).unwrap(),
                align_group(&["limit"], GAP_PENALTY).unwrap(),
            ],
            signatures: vec![sig(r"\S*er\S*"), sig(r"\S*limit\S*")],
        };
        let benign = [Payload::new("peter", Origin::Benign)];
        let bypass = [Payload::new("where x limit 1", Origin::Corrected)];
        let report = validate_signatures(&mined.signatures, &benign, &bypass).unwrap();
        assert_eq!(report.accepted(), [sig(r"\S*limit\S*")]);
        assert_eq!(split_rejected(&mined, &report), [sig(r"\S*where\S*")]);
    }

    #[test]
    fn splits_groups_without_common_subsequence() {
        let mined = MiningOutput {
            scores: Vec::new(),
            important: Vec::new(),
            groups: vec![vec!["ab".into(), "cd".into()]],
            alignments: vec![align_group(&["ab", "cd"], GAP_PENALTY).unwrap()],
            signatures: Vec::new(),
        };
        let report = ValidationReport { verdicts: Vec::new() };
        let sig = |s: &str| Signature::parse(s).unwrap();
        assert_eq!(split_rejected(&mined, &report), [sig(r"\S*ab\S*"), sig(r"\S*cd\S*")]);
    }
}
