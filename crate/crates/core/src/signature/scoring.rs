use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Label, Origin, Payload, Result, Token};

/// Token substituted by the replace score.
pub const REPLACEMENT_TOKEN: &str = "unknown";

/// Anything that turns a payload into an accept/reject decision.
pub trait Decider {
    fn decide(&self, payload: &Payload) -> Label;
}

impl<F: Fn(&Payload) -> Label> Decider for F {
    fn decide(&self, payload: &Payload) -> Label {
        self(payload)
    }
}

impl Decider for crate::mockwaf::RuleSet {
    fn decide(&self, payload: &Payload) -> Label {
        self.classify(payload)
    }
}

impl Decider for crate::shadow::ShadowModel {
    fn decide(&self, payload: &Payload) -> Label {
        self.predict(payload).1
    }
}

/// Delete, replace, head and tail scores of one token. Each component is 1
/// when perturbing the token flips the decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub token: Token,
    pub ds: u8,
    pub rs: u8,
    pub hs: u8,
    pub ts: u8,
}

impl ScoreVector {
    pub fn total(&self) -> u8 {
        self.ds + self.rs + self.hs + self.ts
    }
}

fn decide_tokens(decider: &dyn Decider, tokens: &[&str]) -> Label {
    if tokens.is_empty() {
        // The empty payload is accepted by convention; the decider is not asked.
        return Label::Accepted;
    }
    decider.decide(&Payload::from_tokens(tokens, Origin::Generated))
}

/// Scores every token of `payload`. The decider is called at most `4n - 1`
/// times for an `n`-token payload.
pub fn score_tokens(decider: &dyn Decider, payload: &Payload) -> Result<Vec<ScoreVector>> {
    let tokens: Vec<&str> = payload.token_texts().collect();
    let n = tokens.len();
    if n == 0 {
        return Err(Error::EmptyPayload);
    }
    let full = decide_tokens(decider, &tokens);
    // prefix[k] decides tokens[..k], suffix[k] decides tokens[k..].
    let prefix: Vec<Label> = (0..=n)
        .map(|k| {
            if k == n {
                full
            } else {
                decide_tokens(decider, &tokens[..k])
            }
        })
        .collect();
    let suffix: Vec<Label> = (0..=n)
        .map(|k| {
            if k == 0 {
                full
            } else {
                decide_tokens(decider, &tokens[k..])
            }
        })
        .collect();
    let flip = |a: Label, b: Label| u8::from(a != b);
    Ok(payload
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, token)| {
            let mut without = tokens.clone();
            without.remove(i);
            let mut replaced = tokens.clone();
            replaced[i] = REPLACEMENT_TOKEN;
            ScoreVector {
                token: token.clone(),
                ds: flip(full, decide_tokens(decider, &without)),
                rs: flip(full, decide_tokens(decider, &replaced)),
                hs: flip(prefix[i + 1], prefix[i]),
                ts: flip(suffix[i], suffix[i + 1]),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectParams {
    /// Per-payload score a token needs for that payload to count.
    pub min_total: u32,
    /// Number of distinct payloads in which the token must reach `min_total`.
    pub min_freq: usize,
    pub top_m: usize,
}

impl Default for SelectParams {
    fn default() -> Self {
        SelectParams {
            min_total: 2,
            min_freq: 3,
            top_m: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportantToken {
    pub token: String,
    pub aggregate: u32,
    pub payloads: usize,
}

/// Tokens (case-folded) that score at least `min_total` in at least
/// `min_freq` payloads, ranked by aggregate score, then payload count, then
/// alphabetically, and cut to `top_m`.
pub fn select_important(scored: &[Vec<ScoreVector>], params: &SelectParams) -> Vec<ImportantToken> {
    let mut stats: BTreeMap<String, (u32, usize)> = BTreeMap::new();
    for payload in scored {
        let mut per_payload: BTreeMap<String, u32> = BTreeMap::new();
        for sv in payload {
            *per_payload.entry(sv.token.text.to_lowercase()).or_default() += u32::from(sv.total());
        }
        for (token, total) in per_payload {
            if total >= params.min_total && total > 0 {
                let e = stats.entry(token).or_default();
                e.0 += total;
                e.1 += 1;
            }
        }
    }
    let mut ranked: Vec<ImportantToken> = stats
        .into_iter()
        .filter(|(_, (_, freq))| *freq >= params.min_freq)
        .map(|(token, (aggregate, payloads))| ImportantToken {
            token,
            aggregate,
            payloads,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.aggregate
            .cmp(&a.aggregate)
            .then(b.payloads.cmp(&a.payloads))
            .then_with(|| a.token.cmp(&b.token))
    });
    ranked.truncate(params.top_m);
    ranked
}
