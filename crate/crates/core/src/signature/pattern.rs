use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Payload, Result};

/// The only qualifier in the pattern language: a run of non-whitespace characters.
pub const WILDCARD: &str = r"\S*";

/// A simplified regular expression: literal segments separated (and surrounded)
/// by `\S*`, e.g. `\S*select\S*from\S*`.
///
/// Segments are stored case-folded. A signature matches a payload when the
/// payload, lower-cased and with all whitespace removed, contains every segment
/// in order without overlap.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    segments: Vec<String>,
}

impl Signature {
    pub fn new<S: AsRef<str>>(segments: &[S]) -> Result<Self> {
        let segments: Vec<String> = segments
            .iter()
            .map(|s| s.as_ref().chars().flat_map(char::to_lowercase).collect())
            .collect();
        let invalid = |reason: &str| Error::InvalidSignature {
            pattern: render(&segments),
            reason: reason.to_owned(),
        };
        if segments.is_empty() {
            return Err(invalid("no literal segments"));
        }
        for seg in &segments {
            if seg.is_empty() {
                return Err(invalid("empty literal segment"));
            }
            if seg.chars().any(char::is_whitespace) {
                return Err(invalid("literal segment contains whitespace"));
            }
            if seg.contains(WILDCARD) {
                return Err(invalid("literal segment contains the wildcard"));
            }
        }
        Ok(Signature { segments })
    }

    pub fn parse(pattern: &str) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidSignature {
            pattern: pattern.to_owned(),
            reason: reason.to_owned(),
        };
        let inner = pattern
            .strip_prefix(WILDCARD)
            .and_then(|p| p.strip_suffix(WILDCARD))
            .ok_or_else(|| invalid("pattern must start and end with \\S*"))?;
        let segments: Vec<&str> = inner.split(WILDCARD).filter(|s| !s.is_empty()).collect();
        Signature::new(&segments).map_err(|_| invalid("malformed literal segments"))
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn render(&self) -> String {
        render(&self.segments)
    }

    pub fn matches(&self, payload: &Payload) -> bool {
        self.matches_normalized(&payload.normalized())
    }

    /// Greedy leftmost placement. Taking the earliest occurrence of each
    /// segment leaves the longest possible suffix for the rest, so if any
    /// placement exists this one finds it.
    pub fn matches_normalized(&self, haystack: &str) -> bool {
        let mut rest = haystack;
        for seg in &self.segments {
            match rest.find(seg.as_str()) {
                Some(at) => rest = &rest[at + seg.len()..],
                None => return false,
            }
        }
        true
    }
}

fn render(segments: &[String]) -> String {
    let mut out = String::from(WILDCARD);
    for seg in segments {
        out.push_str(seg);
        out.push_str(WILDCARD);
    }
    out
}

pub fn match_signature(sig: &Signature, payload: &Payload) -> bool {
    sig.matches(payload)
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for Signature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Signature::parse(s)
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Signature::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
pub(crate) mod brute {
    /// Backtracking matcher: tries every occurrence of every segment.
    pub fn matches(segments: &[String], haystack: &str) -> bool {
        fn go(segs: &[String], hay: &[char], from: usize) -> bool {
            let Some((first, rest)) = segs.split_first() else {
                return true;
            };
            let seg: Vec<char> = first.chars().collect();
            if seg.len() > hay.len() {
                return false;
            }
            (from..=hay.len() - seg.len())
                .filter(|&i| hay[i..i + seg.len()] == seg[..])
                .any(|i| go(rest, hay, i + seg.len()))
        }
        let hay: Vec<char> = haystack.chars().collect();
        go(segments, &hay, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Origin;
    use proptest::prelude::*;

    #[test]
    fn render_and_parse() {
        let sig = Signature::new(&["select", "from"]).unwrap();
        assert_eq!(sig.render(), r"\S*select\S*from\S*");
        assert_eq!(Signature::parse(r"\S*select\S*from\S*").unwrap(), sig);
        assert_eq!(Signature::new(&["x"]).unwrap().render(), r"\S*x\S*");
    }

    #[test]
    fn parse_errors() {
        assert!(Signature::parse("select").is_err());
        assert!(Signature::parse(r"\S*").is_err());
        assert!(Signature::parse(r"\S*a b\S*").is_err());
        assert!(Signature::new::<&str>(&[]).is_err());
        assert!(Signature::new(&["a", ""]).is_err());
    }

    #[test]
    fn matches_across_tokens_case_folded() {
        let sig = Signature::parse(r"\S*select\S*from\S*").unwrap();
        assert!(sig.matches(&Payload::new("SELECT name FROM users", Origin::Malicious)));
        assert!(sig.matches(&Payload::new("selectXfrom", Origin::Malicious)));
        assert!(!sig.matches(&Payload::new("from x select", Origin::Malicious)));
        assert!(!Signature::parse(r"\S*from\S*")
            .unwrap()
            .matches(&Payload::new("", Origin::Benign)));
    }

    #[test]
    fn segments_do_not_overlap() {
        let sig = Signature::new(&["aba", "ba"]).unwrap();
        assert!(!sig.matches_normalized("abab"));
        assert!(sig.matches_normalized("ababa"));
    }

    proptest! {
        #[test]
        fn greedy_equals_backtracking(
            segs in proptest::collection::vec("[ab]{1,3}", 1..4),
            hay in "[abc]{0,14}",
        ) {
            let sig = Signature::new(&segs).unwrap();
            prop_assert_eq!(sig.matches_normalized(&hay), brute::matches(sig.segments(), &hay));
        }

        #[test]
        fn render_parse_round_trip(segs in proptest::collection::vec("[a-z0-9=<>'(]{1,5}", 1..5)) {
            let sig = Signature::new(&segs).unwrap();
            prop_assert_eq!(Signature::parse(&sig.render()).unwrap(), sig);
        }
    }
}
