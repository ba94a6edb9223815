//! Payloads, tokens and decision labels shared by every stage.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Where a payload came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Benign,
    Malicious,
    Generated,
    Corrected,
}

/// A WAF (or WAF-like classifier) decision. `Rejected` means classified malicious.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Accepted,
    Rejected,
}

impl Label {
    pub fn is_rejected(self) -> bool {
        self == Label::Rejected
    }

    pub fn from_rejected(rejected: bool) -> Self {
        if rejected {
            Label::Rejected
        } else {
            Label::Accepted
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Accepted => Label::Rejected,
            Label::Rejected => Label::Accepted,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Accepted => "accepted",
            Label::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackType {
    #[default]
    #[serde(rename = "sqli")]
    Sqli,
    #[serde(rename = "xss")]
    Xss,
    #[serde(rename = "ci")]
    CommandInjection,
}

impl std::str::FromStr for AttackType {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sqli" | "sql" => Ok(AttackType::Sqli),
            "xss" => Ok(AttackType::Xss),
            "ci" | "cmdi" | "command-injection" => Ok(AttackType::CommandInjection),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown attack type `{other}` (expected sqli, xss or ci)"
            ))),
        }
    }
}

impl fmt::Display for AttackType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackType::Sqli => "sqli",
            AttackType::Xss => "xss",
            AttackType::CommandInjection => "ci",
        })
    }
}

/// A maximal run of non-whitespace characters inside a payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

/// A decoded request string together with its whitespace tokens.
///
/// The token list is always the whitespace split of `raw`; construct through
/// [`Payload::new`] so the two cannot drift apart.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Payload {
    raw: String,
    tokens: Vec<Token>,
    origin: Origin,
}

impl Payload {
    /// Builds a payload from an already-decoded string.
    pub fn new(raw: impl Into<String>, origin: Origin) -> Self {
        let raw = raw.into();
        let tokens = crate::ingest::tokenize(&raw);
        Payload { raw, tokens, origin }
    }

    /// Joins tokens with single spaces.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], origin: Origin) -> Self {
        let raw = tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
        Payload::new(raw, origin)
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token_texts(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Lower-cased payload with every whitespace character removed. This is the
    /// form signatures are matched against.
    pub fn normalized(&self) -> String {
        normalize(&self.raw)
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

pub fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_track_raw() {
        let p = Payload::new("  select *\tfrom  t ", Origin::Malicious);
        let texts: Vec<_> = p.token_texts().collect();
        assert_eq!(texts, ["select", "*", "from", "t"]);
        assert_eq!(p.tokens()[3].index, 3);
        assert_eq!(p.normalized(), "select*fromt");
    }

    #[test]
    fn label_flip() {
        assert_eq!(Label::Accepted.flipped(), Label::Rejected);
        assert!(Label::from_rejected(true).is_rejected());
    }
}
