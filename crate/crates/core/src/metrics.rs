//! Rejection and acceptance rates over malicious and benign observations.

use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result};

/// TRR/FAR over malicious payloads and TAR/FRR over benign payloads.
///
/// A ratio whose class has no observations is `None`, never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub trr: Option<f64>,
    pub far: Option<f64>,
    pub tar: Option<f64>,
    pub frr: Option<f64>,
    pub n_malicious: usize,
    pub n_benign: usize,
    pub rejected_malicious: usize,
    pub accepted_benign: usize,
}

pub fn compute_metrics(malicious: &[Label], benign: &[Label]) -> Result<Metrics> {
    if malicious.is_empty() && benign.is_empty() {
        return Err(Error::NoObservations);
    }
    let rejected_malicious = malicious.iter().filter(|l| l.is_rejected()).count();
    let accepted_benign = benign.iter().filter(|l| !l.is_rejected()).count();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let trr = ratio(rejected_malicious, malicious.len());
    let tar = ratio(accepted_benign, benign.len());
    Ok(Metrics {
        trr,
        far: trr.map(|r| 1.0 - r),
        tar,
        frr: tar.map(|r| 1.0 - r),
        n_malicious: malicious.len(),
        n_benign: benign.len(),
        rejected_malicious,
        accepted_benign,
    })
}
