//! Run summary: funnel counts, shadow fidelity, and metrics before and after
//! the rule update, rendered as a text table or JSON.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{AttackType, Error, Metrics, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub generated: usize,
    pub discarded: usize,
    /// Payloads that survived correction, rewritten or not.
    pub corrected: usize,
    /// The subset of `corrected` whose tokens were actually rewritten.
    pub rewritten: usize,
    pub shadow_bypassing: usize,
    pub waf_bypassing: usize,
    /// Distinct WAF-bypassing payloads; the set signatures are mined from.
    pub unique_bypassing: usize,
    /// Candidates put through validation: group signatures plus the
    /// member signatures of groups that hit benign traffic.
    pub signatures_emitted: usize,
    pub signatures_validated: usize,
}

impl Funnel {
    pub fn is_monotone(&self) -> bool {
        self.generated == self.corrected + self.discarded
            && self.rewritten <= self.corrected
            && self.corrected >= self.shadow_bypassing
            && self.shadow_bypassing >= self.waf_bypassing
            && self.waf_bypassing >= self.unique_bypassing
            && self.signatures_emitted >= self.signatures_validated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub attack_type: AttackType,
    pub seed: u64,
    /// Shadow/WAF agreement on the validation split.
    pub shadow_fidelity: f64,
    pub shadow_retrained: bool,
    /// Agreement of the final shadow model on the test split.
    pub shadow_fidelity_test: f64,
    pub generator_final_loss: f64,
    pub keywords: Vec<String>,
    pub funnel: Funnel,
    /// Bypassing set against benign validation, before the update.
    pub pre: Metrics,
    pub post: Metrics,
    /// Held-out test split, before and after the update.
    pub test_pre: Metrics,
    pub test_post: Metrics,
    pub rules_before: usize,
    pub rules_after: usize,
    pub signatures: Vec<String>,
}

impl RunReport {
    pub fn from_json(text: &str) -> Result<RunReport> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

fn ratio(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

pub fn report_render(r: &RunReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(r)? + "\n"),
        ReportFormat::Text => Ok(render_text(r)),
    }
}

fn render_text(r: &RunReport) -> String {
    let mut s = String::new();
    let f = &r.funnel;
    let _ = writeln!(s, "attack type          {}", r.attack_type);
    let _ = writeln!(s, "seed                 {}", r.seed);
    let _ = writeln!(s, "shadow fidelity      {:.4} (validation)", r.shadow_fidelity);
    let _ = writeln!(s, "shadow fidelity      {:.4} (test)", r.shadow_fidelity_test);
    let _ = writeln!(s, "shadow retrained     {}", r.shadow_retrained);
    let _ = writeln!(s, "generator loss       {:.4}", r.generator_final_loss);
    let _ = writeln!(s, "keywords             {}", r.keywords.join(" "));
    let _ = writeln!(s);
    let _ = writeln!(s, "funnel");
    for (name, n) in [
        ("generated", f.generated),
        ("discarded", f.discarded),
        ("corrected", f.corrected),
        ("rewritten", f.rewritten),
        ("shadow-bypassing", f.shadow_bypassing),
        ("waf-bypassing", f.waf_bypassing),
        ("unique bypassing", f.unique_bypassing),
        ("signatures emitted", f.signatures_emitted),
        ("signatures validated", f.signatures_validated),
    ] {
        let _ = writeln!(s, "  {name:<22}{n:>8}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "rules                {} -> {}", r.rules_before, r.rules_after);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<24}{:>10}{:>10}", "metric", "before", "after");
    for (scope, pre, post) in [("bypass", &r.pre, &r.post), ("test", &r.test_pre, &r.test_post)] {
        for (name, a, b) in [
            ("TRR", pre.trr, post.trr),
            ("FAR", pre.far, post.far),
            ("TAR", pre.tar, post.tar),
            ("FRR", pre.frr, post.frr),
        ] {
            let _ = writeln!(s, "  {:<22}{:>10}{:>10}", format!("{scope} {name}"), ratio(a), ratio(b));
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "signatures");
    for sig in &r.signatures {
        let _ = writeln!(s, "  {sig}");
    }
    s
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::{compute_metrics, Label};

    pub(crate) fn sample_report() -> RunReport {
        let m = compute_metrics(&[Label::Accepted; 3], &[Label::Accepted; 2]).unwrap();
        let m2 = compute_metrics(
            &[Label::Rejected, Label::Rejected, Label::Accepted],
            &[Label::Accepted; 2],
        )
        .unwrap();
        RunReport {
            attack_type: AttackType::Sqli,
            seed: 7,
            shadow_fidelity: 0.97,
            shadow_retrained: false,
            shadow_fidelity_test: 0.1 + 0.2,
            generator_final_loss: 1.25,
            keywords: vec!["select".into(), "from".into()],
            funnel: Funnel {
                generated: 500,
                discarded: 20,
                corrected: 480,
                rewritten: 12,
                shadow_bypassing: 300,
                waf_bypassing: 250,
                unique_bypassing: 200,
                signatures_emitted: 9,
                signatures_validated: 6,
            },
            pre: m.clone(),
            post: m2.clone(),
            test_pre: m,
            test_post: m2,
            rules_before: 22,
            rules_after: 28,
            signatures: vec![r"\S*where\S*".into()],
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample_report();
        let text = report_render(&r, ReportFormat::Json).unwrap();
        assert_eq!(RunReport::from_json(&text).unwrap(), r);
        assert_eq!(text, report_render(&r, ReportFormat::Json).unwrap());
    }

    #[test]
    fn text_shows_funnel_fields() {
        let r = sample_report();
        let text = report_render(&r, ReportFormat::Text).unwrap();
        assert_eq!(text, report_render(&r, ReportFormat::Text).unwrap());
        let row = |name: &str| -> usize {
            let line = text.lines().find(|l| l.trim_start().starts_with(name)).unwrap();
            line.split_whitespace().last().unwrap().parse().unwrap()
        };
        assert_eq!(row("generated"), r.funnel.generated);
        assert_eq!(row("waf-bypassing"), r.funnel.waf_bypassing);
        assert_eq!(row("signatures validated"), r.funnel.signatures_validated);
        assert!(text.contains("bypass TRR"));
        assert!(r.funnel.is_monotone());
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("yaml".parse::<ReportFormat>(), Err(Error::UnknownFormat(_))));
        assert_eq!("json".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
    }
}
