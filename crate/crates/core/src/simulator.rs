//! Ground-truth ad-serving simulator.
//!
//! A user browses with profile `t`. Every selector serves ads that are
//! interest-based with probability `alpha`, with categories drawn from what the
//! selector knows about the user, and otherwise drawn from that selector's
//! ground-truth `q`. A `rho` fraction of visits is replayed in an untracked
//! session, where every ad comes from `q`.
//!
//! [`run_experiment`] pushes the streams through the same profile → minimax
//! detector path the command-line tools use and scores the decisions against
//! the labels.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::detector::{classify_ad, solve_minimax, worst_case_report, AdClass, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::events::{AdRecord, CategoryRef, EventRecord, VisitRecord};
use crate::pmf::Pmf;
use crate::profiles::{AdObservation, CategoryWindow, Mode, PageVisit, Scenario, SelectorState, WindowConfig};

/// Smallest entry of a generated `q` (for `n ≤ 5000`).
pub const Q_FLOOR: f64 = 1e-4;

const STREAM_PROFILE: u64 = 1;
const STREAM_CLICKS: u64 = 2;
const STREAM_ADS: u64 = 3;
const STREAM_DECISIONS: u64 = 4;
const STREAM_Q_BASE: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorSpec {
    pub id: String,
    /// Probability that a visit is tracked by this selector.
    pub coverage: f64,
    /// Probability that a served ad is interest-based.
    pub alpha: f64,
    /// Expected ads per visit; the fractional part is a Bernoulli extra ad.
    pub ad_rate: f64,
    /// Ads collected per untracked replay; defaults to `ad_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incognito_ad_rate: Option<f64>,
    /// Fixed ground-truth `q`; drawn at random when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    /// The user's browsing profile; drawn at random when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    pub selectors: Vec<SelectorSpec>,
    #[serde(default)]
    pub scenario: Scenario,
    /// Fraction of visits replayed in an untracked session.
    pub rho: f64,
    pub stream_length: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_w_min")]
    pub w_min: usize,
    #[serde(default = "default_w_max")]
    pub w_max: usize,
}

fn default_w_min() -> usize {
    WindowConfig::default().w_min
}

fn default_w_max() -> usize {
    WindowConfig::default().w_max
}

impl ScenarioConfig {
    pub fn window(&self) -> WindowConfig {
        WindowConfig { w_min: self.w_min, w_max: self.w_max, rho: self.rho }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return bad("n: must be positive".into());
        }
        self.window().validate()?;
        if self.stream_length < self.w_min {
            return bad(format!("stream_length: {} is below w_min = {}", self.stream_length, self.w_min));
        }
        if let Some(t) = &self.t {
            check_pmf("t", t, self.n)?;
        }
        if self.selectors.is_empty() {
            return bad("selectors: at least one selector is required".into());
        }
        let mut ids = BTreeSet::new();
        for (i, s) in self.selectors.iter().enumerate() {
            if s.id.trim().is_empty() {
                return bad(format!("selectors[{i}].id: must be nonempty"));
            }
            if !ids.insert(s.id.as_str()) {
                return bad(format!("selectors[{i}].id: duplicate `{}`", s.id));
            }
            for (name, v) in [("coverage", s.coverage), ("alpha", s.alpha)] {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("selectors[{i}].{name}: {v} is outside [0, 1]"));
                }
            }
            for (name, v) in [("ad_rate", Some(s.ad_rate)), ("incognito_ad_rate", s.incognito_ad_rate)] {
                if let Some(v) = v.filter(|v| !(v.is_finite() && *v >= 0.0)) {
                    return bad(format!("selectors[{i}].{name}: {v} must be a nonnegative number"));
                }
            }
            if let Some(q) = &s.q {
                check_pmf(&format!("selectors[{i}].q"), q, self.n)?;
            }
        }
        Ok(())
    }
}

fn check_pmf(field: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidConfig(format!("{field}: expected {n} entries, got {}", v.len())));
    }
    Pmf::new(v.to_vec()).map(|_| ()).map_err(|e| Error::InvalidConfig(format!("{field}: {e}")))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Flat Dirichlet draw, floored so that every entry is at least `floor`.
fn floored_simplex_draw<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> Pmf<f64> {
    let floor = floor.min(0.5 / n as f64);
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let scale = 1.0 - n as f64 * floor;
    Pmf::normalized(raw.into_iter().map(|x| scale * x / total + floor).collect()).expect("positive mass")
}

/// The user's profile `t`: configured, or drawn from the seed.
pub fn user_profile(cfg: &ScenarioConfig) -> Pmf<f64> {
    match &cfg.t {
        Some(t) => Pmf::new(t.clone()).expect("validated"),
        None => floored_simplex_draw(cfg.n, 0.0, &mut stream_rng(cfg.seed, STREAM_PROFILE)),
    }
}

/// `stream_length` visits, categories i.i.d. from `t`; each selector tracks a
/// visit independently with probability `coverage`.
pub fn generate_clickstream<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<PageVisit> {
    let t = user_profile(cfg);
    let categories = WeightedIndex::new(t.as_slice()).expect("t is a pmf");
    (0..cfg.stream_length)
        .map(|k| {
            let category = categories.sample(rng);
            let tracked_by = cfg
                .selectors
                .iter()
                .filter(|s| rng.random_bool(s.coverage))
                .map(|s| s.id.clone())
                .collect();
            PageVisit { timestamp: k as f64, category, tracked_by, mode: Mode::Normal }
        })
        .collect()
}

/// Strictly positive `q` for one selector, fixed per seed.
pub fn generate_ground_truth_q<R: Rng + ?Sized>(cfg: &ScenarioConfig, selector: usize, rng: &mut R) -> Pmf<f64> {
    match &cfg.selectors[selector].q {
        Some(q) => Pmf::new(q.clone()).expect("validated"),
        None => floored_simplex_draw(cfg.n, Q_FLOOR, rng),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAd {
    pub ad: AdObservation,
    pub true_class: AdClass,
}

fn ad_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> usize {
    let whole = rate.floor();
    whole as usize + usize::from(rng.random_bool(rate - whole))
}

/// Serves ads along the clickstream.
///
/// Interest-based categories come from the selector's current observed
/// window (baseline) or from `t` (paranoid). A selector has no profile to
/// target until it has observed `w_min` pages; until then it only serves
/// non-interest-based ads.
pub fn serve_ads<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    visits: &[PageVisit],
    qs: &[Pmf<f64>],
    rng: &mut R,
) -> Vec<GroundTruthAd> {
    let t = user_profile(cfg);
    let t_dist = WeightedIndex::new(t.as_slice()).expect("t is a pmf");
    let q_dists: Vec<_> = qs.iter().map(|q| WeightedIndex::new(q.as_slice()).expect("q is a pmf")).collect();
    let mut windows: Vec<CategoryWindow> = cfg.selectors.iter().map(|_| CategoryWindow::new(cfg.n)).collect();
    let mut ads = Vec::new();

    for (k, visit) in visits.iter().enumerate() {
        for (s, spec) in cfg.selectors.iter().enumerate() {
            if visit.tracked_by.contains(&spec.id) {
                windows[s].push(visit.category, cfg.w_max);
            }
            let profiled = match cfg.scenario {
                Scenario::Baseline => windows[s].len() >= cfg.w_min,
                Scenario::Paranoid => k + 1 >= cfg.w_min,
            };
            for _ in 0..ad_count(spec.ad_rate, rng) {
                let interest = rng.random_bool(spec.alpha) && profiled;
                let (category, true_class) = if interest {
                    let c = match cfg.scenario {
                        Scenario::Baseline => windows[s].get(rng.random_range(0..windows[s].len())).expect("nonempty"),
                        Scenario::Paranoid => t_dist.sample(rng),
                    };
                    (c, AdClass::InterestBased)
                } else {
                    (q_dists[s].sample(rng), AdClass::NonInterestBased)
                };
                ads.push(ground_truth_ad(visit.timestamp, spec, category, Mode::Normal, true_class));
            }
        }
        if rng.random_bool(cfg.rho) {
            for (s, spec) in cfg.selectors.iter().enumerate() {
                for _ in 0..ad_count(spec.incognito_ad_rate.unwrap_or(spec.ad_rate), rng) {
                    let category = q_dists[s].sample(rng);
                    ads.push(ground_truth_ad(visit.timestamp, spec, category, Mode::Incognito, AdClass::NonInterestBased));
                }
            }
        }
    }
    ads
}

fn ground_truth_ad(ts: f64, spec: &SelectorSpec, category: usize, mode: Mode, true_class: AdClass) -> GroundTruthAd {
    GroundTruthAd {
        ad: AdObservation {
            timestamp: ts,
            selector_id: spec.id.clone(),
            category: Some(category),
            landing_domain: format!("brand{category}.example"),
            mode,
        },
        true_class,
    }
}

/// Everything one seeded run generates.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub t: Pmf<f64>,
    pub qs: Vec<Pmf<f64>>,
    pub visits: Vec<PageVisit>,
    pub ads: Vec<GroundTruthAd>,
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<Simulation> {
    cfg.validate()?;
    let t = user_profile(cfg);
    let qs = (0..cfg.selectors.len())
        .map(|s| generate_ground_truth_q(cfg, s, &mut stream_rng(cfg.seed, STREAM_Q_BASE + s as u64)))
        .collect::<Vec<_>>();
    let visits = generate_clickstream(cfg, &mut stream_rng(cfg.seed, STREAM_CLICKS));
    let ads = serve_ads(cfg, &visits, &qs, &mut stream_rng(cfg.seed, STREAM_ADS));
    Ok(Simulation { t, qs, visits, ads })
}

impl Simulation {
    /// The run as a time-ordered event log; each visit precedes its ads.
    pub fn events(&self) -> Vec<EventRecord> {
        let mut out = Vec::with_capacity(self.visits.len() + self.ads.len());
        let mut ads = self.ads.iter().peekable();
        for v in &self.visits {
            out.push(EventRecord::Visit(VisitRecord {
                ts: v.timestamp,
                url: None,
                category: Some(CategoryRef::Index(v.category)),
                tracked_by: v.tracked_by.iter().cloned().collect(),
                mode: v.mode,
            }));
            while let Some(a) = ads.next_if(|a| a.ad.timestamp <= v.timestamp) {
                out.push(EventRecord::Ad(AdRecord {
                    ts: a.ad.timestamp,
                    selector: a.ad.selector_id.clone(),
                    landing: a.ad.landing_domain.clone(),
                    url: None,
                    category: a.ad.category.map(CategoryRef::Index),
                    mode: a.ad.mode,
                    truth: Some(a.true_class),
                }));
            }
        }
        out
    }
}

/// Rows are truth, columns decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// Interest-based, detected.
    pub true_positive: u64,
    /// Interest-based, missed.
    pub false_negative: u64,
    /// Non-interest-based, flagged.
    pub false_positive: u64,
    pub true_negative: u64,
}

impl Confusion {
    pub fn record(&mut self, truth: AdClass, decision: AdClass) {
        use AdClass::*;
        match (truth, decision) {
            (InterestBased, InterestBased) => self.true_positive += 1,
            (InterestBased, NonInterestBased) => self.false_negative += 1,
            (NonInterestBased, InterestBased) => self.false_positive += 1,
            (NonInterestBased, NonInterestBased) => self.true_negative += 1,
        }
    }

    pub fn add(&mut self, other: &Confusion) {
        self.true_positive += other.true_positive;
        self.false_negative += other.false_negative;
        self.false_positive += other.false_positive;
        self.true_negative += other.true_negative;
    }

    pub fn interest_based(&self) -> u64 {
        self.true_positive + self.false_negative
    }

    pub fn non_interest_based(&self) -> u64 {
        self.false_positive + self.true_negative
    }

    /// Missed share of interest-based ads.
    pub fn false_negative_rate(&self) -> Option<f64> {
        rate(self.false_negative, self.interest_based())
    }

    /// Flagged share of non-interest-based ads.
    pub fn false_positive_rate(&self) -> Option<f64> {
        rate(self.false_positive, self.non_interest_based())
    }
}

fn rate(k: u64, n: u64) -> Option<f64> {
    (n > 0).then(|| k as f64 / n as f64)
}

/// `e + 3·sqrt(e(1−e)/N)`: what an error rate measured on `N` ads may reach
/// when the true rate is at most `e`.
pub fn binomial_bound(e: f64, trials: u64) -> f64 {
    let e = e.clamp(0.0, 1.0);
    if trials == 0 {
        return 1.0;
    }
    e + 3.0 * (e * (1.0 - e) / trials as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorOutcome {
    pub selector_id: String,
    /// `None` when the selector never got a class or a `q` estimate.
    pub predicted_error: Option<f64>,
    pub p1_w: Option<f64>,
    pub p2: Option<f64>,
    pub confusion: Confusion,
    pub false_negative_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    /// Normal-mode ads left without a decision.
    pub undecidable: u64,
    pub incognito_ads: u64,
    pub pages_observed: u64,
    pub bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    pub stream_length: usize,
    pub selectors: Vec<SelectorOutcome>,
    pub totals: Confusion,
    pub undecidable: u64,
}

impl ExperimentReport {
    /// Every decided selector respects the worst-case bound under both hypotheses.
    pub fn bound_holds(&self) -> bool {
        self.selectors.iter().all(|s| s.bound_holds)
    }
}

pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    let sim = simulate(cfg)?;
    evaluate(cfg, &sim)
}

/// Builds per-selector profiles from the whole run, solves each selector's
/// rule once, then classifies its normal-mode ads.
pub fn evaluate(cfg: &ScenarioConfig, sim: &Simulation) -> Result<ExperimentReport> {
    let window = cfg.window();
    let mut states: Vec<SelectorState<f64>> =
        cfg.selectors.iter().map(|s| SelectorState::new(s.id.clone(), cfg.n)).collect();
    let index_of = |id: &str| cfg.selectors.iter().position(|s| s.id == id).expect("ad from a configured selector");

    for v in &sim.visits {
        for st in &mut states {
            st.observe_visit(v, &window, cfg.scenario)?;
        }
    }
    for a in sim.ads.iter().filter(|a| a.ad.mode == Mode::Incognito) {
        states[index_of(&a.ad.selector_id)].observe_incognito_ad(&a.ad, &window)?;
    }

    let rules: Vec<_> = states
        .iter()
        .map(|st| match (&st.uclass, &st.q_hat) {
            (Some(u), Some(q)) => solve_minimax(u, q, DEFAULT_BUDGET)
                .and_then(|rule| worst_case_report(&rule, u, q).map(|w| (rule, w)))
                .ok(),
            _ => None,
        })
        .collect();

    let mut rng = stream_rng(cfg.seed, STREAM_DECISIONS);
    let mut confusion = vec![Confusion::default(); states.len()];
    let mut undecidable = vec![0u64; states.len()];
    for a in sim.ads.iter().filter(|a| a.ad.mode == Mode::Normal) {
        let s = index_of(&a.ad.selector_id);
        match (&rules[s], a.ad.category) {
            (Some((rule, _)), Some(c)) => confusion[s].record(a.true_class, classify_ad(rule, c, &mut rng)),
            _ => undecidable[s] += 1,
        }
    }

    let mut totals = Confusion::default();
    let selectors = states
        .iter()
        .enumerate()
        .map(|(s, st)| {
            let c = confusion[s];
            totals.add(&c);
            let report = rules[s].as_ref().map(|(_, w)| *w);
            let predicted = report.map(|w| w.minimax_error);
            let bound_holds = match predicted {
                None => true,
                Some(e) => {
                    let within = |r: Option<f64>, n: u64| r.is_none_or(|r| r <= binomial_bound(e, n) + 1e-12);
                    within(c.false_negative_rate(), c.interest_based())
                        && within(c.false_positive_rate(), c.non_interest_based())
                }
            };
            SelectorOutcome {
                selector_id: st.selector_id.clone(),
                predicted_error: predicted,
                p1_w: report.map(|w| w.p1_w),
                p2: report.map(|w| w.p2),
                confusion: c,
                false_negative_rate: c.false_negative_rate(),
                false_positive_rate: c.false_positive_rate(),
                undecidable: undecidable[s],
                incognito_ads: st.incognito_ads,
                pages_observed: st.pages_observed,
                bound_holds,
            }
        })
        .collect();

    Ok(ExperimentReport {
        scenario: cfg.scenario,
        n: cfg.n,
        seed: cfg.seed,
        stream_length: cfg.stream_length,
        selectors,
        totals,
        undecidable: undecidable.iter().sum(),
    })
}
