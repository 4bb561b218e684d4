//! Detection report: one row per selector, from the stored state.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use adscope_core::detector::{classify_ad, solve_minimax, worst_case_report, AdClass, DetectorRule, DEFAULT_BUDGET};
use adscope_core::profiles::{Scenario, SelectorState, UncertaintyClass};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::state::{Alphabet, State};

/// Bumped on any change to the report's fields.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// RNG stream for the randomized per-ad decisions.
const DECISION_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    InsufficientData,
    SolverFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub minimax_error: f64,
    pub zeta: f64,
    /// Worst-case miss probability over the class.
    pub p1_w: f64,
    /// False-alarm probability under `q_hat`.
    pub p2: f64,
    /// Probability of flagging an ad of each category as interest-based.
    pub d_tilde: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub interest_based: u64,
    pub non_interest_based: u64,
    pub undecidable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorReport {
    pub selector: String,
    pub status: Status,
    pub reason: Option<String>,
    pub pages_observed: u64,
    pub incognito_ads: u64,
    pub uncategorized_incognito_ads: u64,
    pub q_hat: Option<Vec<f64>>,
    pub p_min: Option<Vec<f64>>,
    pub p_max: Option<Vec<f64>>,
    pub rule: Option<RuleSummary>,
    pub decisions: DecisionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub alphabet: Alphabet,
    pub w_min: usize,
    pub w_max: usize,
    pub seed: u64,
    pub selectors: Vec<SelectorReport>,
}

/// Report plus the per-selector rules and per-ad decisions behind it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: DetectionReport,
    pub rules: BTreeMap<String, DetectorRule<f64>>,
    /// Parallel to `State::ads`; `None` where no decision was possible.
    pub decisions: Vec<Option<AdClass>>,
}

/// The class a selector is assumed to know under `scenario`.
pub fn selector_class<'a>(state: &'a State, sel: &'a SelectorState<f64>, scenario: Scenario) -> (Option<&'a UncertaintyClass<f64>>, u64) {
    match scenario {
        Scenario::Baseline => (sel.uclass.as_ref(), sel.pages_observed),
        Scenario::Paranoid => (state.actual.uclass.as_ref(), state.actual.pages_observed),
    }
}

pub fn evaluate(state: &State, scenario: Scenario, seed: u64) -> Evaluation {
    let w_min = state.window.w_min;
    let mut rules = BTreeMap::new();
    let mut rows = Vec::with_capacity(state.selectors.len());
    for (id, sel) in &state.selectors {
        let (class, pages) = selector_class(state, sel, scenario);
        let mut row = SelectorReport {
            selector: id.clone(),
            status: Status::Ok,
            reason: None,
            pages_observed: pages,
            incognito_ads: sel.incognito_ads,
            uncategorized_incognito_ads: sel.undecidable_ads,
            q_hat: sel.q_hat.as_ref().map(|q| q.as_slice().to_vec()),
            p_min: class.map(|u| u.p_min.clone()),
            p_max: class.map(|u| u.p_max.clone()),
            rule: None,
            decisions: DecisionCounts::default(),
        };
        match (class, &sel.q_hat) {
            (None, _) => {
                row.status = Status::InsufficientData;
                row.reason = Some(format!("insufficient data: {pages} of {w_min} pages observed"));
            }
            (_, None) => {
                row.status = Status::InsufficientData;
                row.reason = Some(format!("insufficient data: {} of {w_min} incognito ads", sel.incognito_ads));
            }
            (Some(u), Some(q)) => match solve_minimax(u, q, DEFAULT_BUDGET).and_then(|r| worst_case_report(&r, u, q).map(|w| (r, w))) {
                Ok((rule, w)) => {
                    row.rule = Some(RuleSummary {
                        minimax_error: w.minimax_error,
                        zeta: rule.zeta,
                        p1_w: w.p1_w,
                        p2: w.p2,
                        d_tilde: rule.d_tilde.clone(),
                    });
                    rules.insert(id.clone(), rule);
                }
                Err(e) => {
                    row.status = Status::SolverFailed;
                    row.reason = Some(e.to_string());
                }
            },
        }
        rows.push(row);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DECISION_STREAM);
    let index: BTreeMap<String, usize> = rows.iter().enumerate().map(|(i, r)| (r.selector.clone(), i)).collect();
    let decisions = state
        .ads
        .iter()
        .map(|ad| {
            let decision = match (rules.get(&ad.selector), ad.category) {
                (Some(rule), Some(c)) => Some(classify_ad(rule, c, &mut rng)),
                _ => None,
            };
            if let Some(&i) = index.get(&ad.selector) {
                let counts = &mut rows[i].decisions;
                match decision {
                    Some(AdClass::InterestBased) => counts.interest_based += 1,
                    Some(AdClass::NonInterestBased) => counts.non_interest_based += 1,
                    None => counts.undecidable += 1,
                }
            }
            decision
        })
        .collect();

    Evaluation {
        report: DetectionReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario,
            alphabet: state.alphabet,
            w_min,
            w_max: state.window.w_max,
            seed,
            selectors: rows,
        },
        rules,
        decisions,
    }
}

impl DetectionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario: {}  w_min: {}  selectors: {}", self.scenario, self.w_min, self.selectors.len());
        let _ = writeln!(
            out,
            "{:<28} {:>8} {:>8} {:>9} {:>8} {:>8} {:>7} {:>7} {:>7}  status",
            "selector", "pages", "incog", "error", "p1_w", "p2", "ib", "nib", "undec"
        );
        for r in &self.selectors {
            let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let status = r.reason.clone().unwrap_or_else(|| "ok".into());
            let _ = writeln!(
                out,
                "{:<28} {:>8} {:>8} {:>9} {:>8} {:>8} {:>7} {:>7} {:>7}  {status}",
                r.selector,
                r.pages_observed,
                r.incognito_ads,
                num(r.rule.as_ref().map(|x| x.minimax_error)),
                num(r.rule.as_ref().map(|x| x.p1_w)),
                num(r.rule.as_ref().map(|x| x.p2)),
                r.decisions.interest_based,
                r.decisions.non_interest_based,
                r.decisions.undecidable,
            );
        }
        out
    }
}
