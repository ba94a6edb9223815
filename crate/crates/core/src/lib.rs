//! Black-box WAF hardening: shadow a WAF with a local classifier, generate
//! mutated attack payloads, keep the ones that slip through, and mine
//! wildcard signatures that block them.

pub mod corrector;
pub mod error;
pub mod generator;
pub mod ingest;
pub mod metrics;
pub mod mockwaf;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod shadow;
pub mod signature;
pub mod types;

pub use error::{Error, Result};
pub use metrics::{compute_metrics, Metrics};
pub use types::{normalize, AttackType, Label, Origin, Payload, Token};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/payloads.md")]
    mod payloads {}
    #[doc = include_str!("../../../book/src/mockwaf.md")]
    mod mockwaf {}
    #[doc = include_str!("../../../book/src/shadow.md")]
    mod shadow {}
    #[doc = include_str!("../../../book/src/generator.md")]
    mod generator {}
    #[doc = include_str!("../../../book/src/corrector.md")]
    mod corrector {}
    #[doc = include_str!("../../../book/src/signatures.md")]
    mod signatures {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
