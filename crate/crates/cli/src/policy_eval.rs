//! Applies a policy file to every stored normal-mode ad.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use adscope_core::detector::AdClass;
use adscope_core::policy::{decide, AdAnnotation, Decision, PolicySet};
use adscope_core::profiles::Scenario;
use adscope_core::taxonomy::{CategoryId, Taxonomy};
use serde::{Deserialize, Serialize};

use crate::report::evaluate;
use crate::state::{Alphabet, State};

pub const POLICY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub show: u64,
    pub hide: u64,
    pub undecidable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdVerdict {
    pub ts: f64,
    pub selector: String,
    pub landing: String,
    pub category: Option<String>,
    pub detected: Option<AdClass>,
    pub retargeted: bool,
    pub verdict: Decision,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub counts: VerdictCounts,
    pub ads: Vec<AdVerdict>,
}

/// `percentiles` maps selector ids to their uniqueness percentile, if known.
pub fn evaluate_policies(
    state: &State,
    scenario: Scenario,
    seed: u64,
    policies: &PolicySet,
    taxonomy: &Taxonomy,
    percentiles: &BTreeMap<String, f64>,
) -> PolicyReport {
    let eval = evaluate(state, scenario, seed);
    let errors: BTreeMap<&str, f64> = eval
        .report
        .selectors
        .iter()
        .filter_map(|r| r.rule.as_ref().map(|x| (r.selector.as_str(), x.minimax_error)))
        .collect();
    let mut counts = VerdictCounts::default();
    let ads = state
        .ads
        .iter()
        .zip(&eval.decisions)
        .map(|(ad, &detected)| {
            let mut a = AdAnnotation {
                selector_id: ad.selector.clone(),
                decision: detected,
                retargeted: ad.retargeted,
                worst_case_error: errors.get(ad.selector.as_str()).copied(),
                uniqueness_percentile: percentiles.get(&ad.selector).copied(),
                ..AdAnnotation::default()
            };
            let mut name = None;
            if let Some(c) = ad.category {
                let id = CategoryId::bottom(c);
                match state.alphabet {
                    Alphabet::Taxonomy { .. } => {
                        a = a.with_category(id, taxonomy);
                        name = Some(taxonomy.name(id).to_string());
                    }
                    Alphabet::Raw { .. } => {
                        a.category = Some(id);
                        name = Some(format!("#{c}"));
                    }
                }
            }
            let v = decide(policies, &a);
            match v.decision {
                Decision::Show => counts.show += 1,
                Decision::Hide => counts.hide += 1,
                Decision::Undecidable => counts.undecidable += 1,
            }
            AdVerdict {
                ts: ad.ts,
                selector: ad.selector.clone(),
                landing: ad.landing.clone(),
                category: name,
                detected,
                retargeted: ad.retargeted,
                verdict: v.decision,
                reasons: v.reasons,
            }
        })
        .collect();
    PolicyReport { schema_version: POLICY_SCHEMA_VERSION, scenario, counts, ads }
}

impl PolicyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let c = self.counts;
        let _ = writeln!(out, "show: {}  hide: {}  undecidable: {}", c.show, c.hide, c.undecidable);
        for a in &self.ads {
            let detected = match a.detected {
                Some(AdClass::InterestBased) => "interest",
                Some(AdClass::NonInterestBased) => "noninterest",
                None => "-",
            };
            let _ = writeln!(
                out,
                "{:>10.1} {:<24} {:<24} {:<28} {:<11} {:<11} {}",
                a.ts,
                a.selector,
                a.landing,
                a.category.as_deref().unwrap_or("-"),
                detected,
                a.verdict,
                a.reasons.join("; ")
            );
        }
        out
    }
}
