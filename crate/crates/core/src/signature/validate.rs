use serde::{Deserialize, Serialize};

use super::Signature;
use crate::{Error, Payload, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureVerdict {
    pub signature: Signature,
    pub benign_hits: usize,
    /// First benign payload the signature matched, if any.
    pub offending_benign: Option<String>,
    pub malicious_hits: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdicts: Vec<SignatureVerdict>,
}

impl ValidationReport {
    pub fn accepted(&self) -> Vec<Signature> {
        self.verdicts
            .iter()
            .filter(|v| v.accepted)
            .map(|v| v.signature.clone())
            .collect()
    }
}

/// Keeps a signature only if it matches no benign payload and at least one
/// bypassing malicious payload.
pub fn validate_signatures<'a, 'b>(
    sigs: &[Signature],
    benign: impl IntoIterator<Item = &'a Payload>,
    bypassing: impl IntoIterator<Item = &'b Payload>,
) -> Result<ValidationReport> {
    let benign: Vec<(String, &str)> = benign.into_iter().map(|p| (p.normalized(), p.raw())).collect();
    if benign.is_empty() {
        return Err(Error::InvalidArgument("benign corpus for validation is empty".into()));
    }
    let bypassing: Vec<String> = bypassing.into_iter().map(Payload::normalized).collect();
    let verdicts = sigs
        .iter()
        .map(|sig| {
            let hits: Vec<&str> = benign
                .iter()
                .filter(|(n, _)| sig.matches_normalized(n))
                .map(|(_, raw)| *raw)
                .collect();
            let malicious_hits = bypassing.iter().filter(|n| sig.matches_normalized(n)).count();
            SignatureVerdict {
                signature: sig.clone(),
                benign_hits: hits.len(),
                offending_benign: hits.first().map(|s| (*s).to_owned()),
                malicious_hits,
                accepted: hits.is_empty() && malicious_hits > 0,
            }
        })
        .collect();
    Ok(ValidationReport { verdicts })
}
