//! User ad-blocking policies.
//!
//! Matching is three-valued: a constraint field whose evidence is missing
//! from the annotation evaluates to [`Tri::Unknown`]. Negative policies
//! prevail over positive ones, and an unknown match only leads to
//! [`Decision::Undecidable`] when it could actually change the outcome.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::categorizer::hostname;
use crate::detector::AdClass;
use crate::error::{Error, Result};
use crate::taxonomy::{CategoryId, Taxonomy};
use crate::uniqueness::VERY_UNIQUE_PERCENTILE;

/// Kleene truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tri {
    False,
    Unknown,
    True,
}

impl Tri {
    pub fn and(self, other: Tri) -> Tri {
        self.min(other)
    }

    pub fn or(self, other: Tri) -> Tri {
        self.max(other)
    }
}

// False < Unknown < True, so AND is min and OR is max.
impl PartialOrd for Tri {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tri {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

impl From<bool> for Tri {
    fn from(b: bool) -> Self {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }
}

/// The `(I, i, u)` triple; absent fields are unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdConstraint {
    pub interest: Option<AdClass>,
    pub category: Option<CategoryId>,
    /// Minimum uniqueness percentile, in `[0, 100]`.
    pub min_percentile: Option<f64>,
}

impl AdConstraint {
    pub fn new(interest: Option<AdClass>, category: Option<CategoryId>, min_percentile: Option<f64>) -> Result<Self> {
        if interest.is_none() && category.is_none() && min_percentile.is_none() {
            return Err(Error::InvalidConfig("ad constraint needs at least one field".into()));
        }
        if let Some(pct) = min_percentile {
            if !(0.0..=100.0).contains(&pct) {
                return Err(Error::InvalidConfig(format!("percentile {pct} outside [0, 100]")));
            }
        }
        Ok(Self { interest, category, min_percentile })
    }
}

impl fmt::Display for AdConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        match self.interest {
            Some(AdClass::InterestBased) => parts.push("interest".to_string()),
            Some(AdClass::NonInterestBased) => parts.push("noninterest".to_string()),
            None => {}
        }
        if let Some(c) = self.category {
            parts.push(format!("cat:{c}"));
        }
        if let Some(p) = self.min_percentile {
            parts.push(format!("unique>={p}"));
        }
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    /// Display the ad.
    #[serde(rename = "+")]
    Allow,
    /// Block the ad.
    #[serde(rename = "-")]
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub constraint: AdConstraint,
    pub sign: Sign,
}

impl Policy {
    pub fn allow(constraint: AdConstraint) -> Self {
        Self { constraint, sign: Sign::Allow }
    }

    pub fn block(constraint: AdConstraint) -> Self {
        Self { constraint, sign: Sign::Block }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = match self.sign {
            Sign::Allow => "allow",
            Sign::Block => "block",
        };
        write!(f, "{verb} {}", self.constraint)
    }
}

/// What the pipeline knows about one ad.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdAnnotation {
    pub selector_id: String,
    /// Category of the ad, usually bottom-level.
    pub category: Option<CategoryId>,
    /// Top-level ancestor of `category`, so top-level constraints can match.
    pub category_parent: Option<CategoryId>,
    pub decision: Option<AdClass>,
    pub retargeted: bool,
    pub worst_case_error: Option<f64>,
    pub uniqueness_percentile: Option<f64>,
}

impl AdAnnotation {
    /// Sets `category` and derives its parent from the taxonomy.
    pub fn with_category(mut self, category: CategoryId, taxonomy: &Taxonomy) -> Self {
        self.category = Some(category);
        self.category_parent = Some(taxonomy.to_top(category));
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    pub policies: Vec<Policy>,
    pub block_retargeted: bool,
    /// Block when the selector's uniqueness percentile is at least 90.
    pub block_very_unique: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Show,
    Hide,
    Undecidable,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Show => "show",
            Decision::Hide => "hide",
            Decision::Undecidable => "undecidable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    /// Policies and shortcuts behind the decision, sorted.
    pub reasons: Vec<String>,
}

pub fn matches(c: &AdConstraint, a: &AdAnnotation) -> Tri {
    let mut out = Tri::True;
    if let Some(want) = c.interest {
        out = out.and(a.decision.map_or(Tri::Unknown, |d| Tri::from(d == want)));
    }
    if let Some(want) = c.category {
        out = out.and(match (a.category, a.category_parent) {
            (None, None) => Tri::Unknown,
            (cat, parent) => Tri::from(cat == Some(want) || parent == Some(want)),
        });
    }
    if let Some(min) = c.min_percentile {
        out = out.and(a.uniqueness_percentile.map_or(Tri::Unknown, |p| Tri::from(p >= min)));
    }
    out
}

/// Applies the set to one ad.
///
/// Negative policies and shortcuts prevail. When positive policies exist
/// they act as an allow-list: an ad none of them admits is hidden.
///
/// Missing evidence only yields [`Decision::Undecidable`] if some way of
/// filling it in changes the outcome. Three-valued evaluation settles most
/// cases; the rest are resolved by trying every completion the policies can
/// tell apart (`block X` with `allow X` hides the ad whether or not it is
/// in `X`).
pub fn decide(ps: &PolicySet, a: &AdAnnotation) -> Verdict {
    let kleene = decide_three_valued(ps, a);
    if kleene.decision != Decision::Undecidable {
        return kleene;
    }
    let mut outcome: Option<Decision> = None;
    let mut reasons = BTreeSet::new();
    for world in completions(ps, a) {
        let v = decide_three_valued(ps, &world);
        debug_assert_ne!(v.decision, Decision::Undecidable);
        if outcome.is_some_and(|d| d != v.decision) {
            return kleene;
        }
        outcome = Some(v.decision);
        reasons.extend(v.reasons);
    }
    match outcome {
        Some(decision) => Verdict { decision, reasons: reasons.into_iter().collect() },
        None => kleene,
    }
}

/// Matches no category a policy can name.
const NO_CATEGORY: CategoryId = CategoryId { index: usize::MAX, level: crate::taxonomy::Level::Bottom };

/// Fully specified variants of `a`, one per distinguishable assignment of its
/// missing fields. Without a category, any named bottom category may pair
/// with any named top category, since the taxonomy is not consulted here.
fn completions(ps: &PolicySet, a: &AdAnnotation) -> Vec<AdAnnotation> {
    let decisions = match a.decision {
        Some(d) => vec![Some(d)],
        None => vec![Some(AdClass::InterestBased), Some(AdClass::NonInterestBased)],
    };
    let percentiles = match a.uniqueness_percentile {
        Some(p) => vec![Some(p)],
        None => {
            let mut cuts: Vec<f64> = ps.policies.iter().filter_map(|p| p.constraint.min_percentile).collect();
            if ps.block_very_unique {
                cuts.push(VERY_UNIQUE_PERCENTILE);
            }
            cuts.push(f64::NEG_INFINITY);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            cuts.into_iter().map(Some).collect()
        }
    };
    let categories = match (a.category, a.category_parent) {
        (None, None) => {
            let named: BTreeSet<CategoryId> = ps.policies.iter().filter_map(|p| p.constraint.category).collect();
            let pick = |level| std::iter::once(NO_CATEGORY).chain(named.iter().copied().filter(move |c| c.level == level));
            let mut out = Vec::new();
            for bottom in pick(crate::taxonomy::Level::Bottom) {
                for top in pick(crate::taxonomy::Level::Top) {
                    out.push((Some(bottom), Some(top)));
                }
            }
            out
        }
        known => vec![known],
    };
    let mut out = Vec::with_capacity(decisions.len() * percentiles.len() * categories.len());
    for &decision in &decisions {
        for &uniqueness_percentile in &percentiles {
            for &(category, category_parent) in &categories {
                out.push(AdAnnotation { decision, uniqueness_percentile, category, category_parent, ..a.clone() });
            }
        }
    }
    out
}

fn decide_three_valued(ps: &PolicySet, a: &AdAnnotation) -> Verdict {
    let mut block = Tri::False;
    let mut block_hits = BTreeSet::new();
    let mut block_maybe = BTreeSet::new();
    let mut allow = Tri::False;
    let mut allow_hits = BTreeSet::new();
    let mut allow_maybe = BTreeSet::new();
    let mut has_allow = false;

    let note = |m: Tri, label: String, hits: &mut BTreeSet<String>, maybe: &mut BTreeSet<String>| match m {
        Tri::True => {
            hits.insert(label);
        }
        Tri::Unknown => {
            maybe.insert(label);
        }
        Tri::False => {}
    };

    if ps.block_retargeted && a.retargeted {
        block = Tri::True;
        note(Tri::True, "block-retargeted".into(), &mut block_hits, &mut block_maybe);
    }
    if ps.block_very_unique {
        let m = a.uniqueness_percentile.map_or(Tri::Unknown, |p| Tri::from(p >= VERY_UNIQUE_PERCENTILE));
        block = block.or(m);
        note(m, "block-very-unique".into(), &mut block_hits, &mut block_maybe);
    }
    for p in &ps.policies {
        let m = matches(&p.constraint, a);
        match p.sign {
            Sign::Block => {
                block = block.or(m);
                note(m, p.to_string(), &mut block_hits, &mut block_maybe);
            }
            Sign::Allow => {
                has_allow = true;
                allow = allow.or(m);
                note(m, p.to_string(), &mut allow_hits, &mut allow_maybe);
            }
        }
    }

    let collect = |sets: &[&BTreeSet<String>]| -> Vec<String> {
        sets.iter().flat_map(|s| s.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect()
    };
    let hide_unlisted = || vec!["not admitted by any allow policy".to_string()];

    if block == Tri::True {
        return Verdict { decision: Decision::Hide, reasons: collect(&[&block_hits]) };
    }
    let (decision, reasons) = match (block, has_allow, allow) {
        (Tri::False, false, _) => (Decision::Show, Vec::new()),
        (Tri::False, true, Tri::True) => (Decision::Show, collect(&[&allow_hits])),
        (Tri::False, true, Tri::False) => (Decision::Hide, hide_unlisted()),
        (Tri::False, true, Tri::Unknown) => (Decision::Undecidable, collect(&[&allow_maybe])),
        // A possible block only matters if the ad could otherwise be shown.
        (_, true, Tri::False) => (Decision::Hide, hide_unlisted()),
        _ => (Decision::Undecidable, collect(&[&block_maybe, &allow_maybe])),
    };
    Verdict { decision, reasons }
}

/// Registrable suffixes, longest match wins.
#[derive(Debug, Clone)]
pub struct SuffixList {
    suffixes: HashSet<String>,
}

impl SuffixList {
    pub fn bundled() -> &'static SuffixList {
        static LIST: OnceLock<SuffixList> = OnceLock::new();
        LIST.get_or_init(|| SuffixList::parse(include_str!("../data/public_suffixes.txt")))
    }

    pub fn parse(text: &str) -> Self {
        let suffixes = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().trim_start_matches('.').to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Self { suffixes }
    }

    /// `store.apple.co.uk` → `apple.co.uk`. Hosts that are themselves a
    /// suffix, or have an unlisted suffix, fall back to the last two labels.
    pub fn registrable_domain(&self, host: &str) -> String {
        let host = host.trim().trim_end_matches('.').to_lowercase();
        let labels: Vec<&str> = host.split('.').filter(|l| !l.is_empty()).collect();
        if labels.len() <= 1 {
            return host;
        }
        for start in 1..labels.len() {
            let suffix = labels[start..].join(".");
            if self.suffixes.contains(&suffix) {
                return labels[start - 1..].join(".");
            }
        }
        labels[labels.len() - 2..].join(".")
    }
}

/// Accepts bare hosts as well as URLs.
pub fn registrable_domain(domain_or_url: &str) -> String {
    let host = hostname(domain_or_url).unwrap_or_else(|| domain_or_url.trim().to_lowercase());
    SuffixList::bundled().registrable_domain(&host)
}

/// Whether the ad's advertiser is a site the user already visited.
pub fn is_retargeted<S: AsRef<str>>(landing_domain: &str, visited_advertisers: impl IntoIterator<Item = S>) -> bool {
    if landing_domain.trim().is_empty() {
        return false;
    }
    let landing = registrable_domain(landing_domain);
    visited_advertisers.into_iter().any(|v| registrable_domain(v.as_ref()) == landing)
}

/// Parses a policy file.
///
/// ```text
/// # comments and blank lines are ignored
/// block interest cat:health & fitness unique>=25
/// block noninterest
/// block-retargeted
/// block-very-unique
/// ```
///
/// Category names may contain spaces; they run until the next keyword.
pub fn parse_policy_file(text: &str, taxonomy: &Taxonomy) -> Result<PolicySet> {
    let mut set = PolicySet::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        let mut tokens = line.split_whitespace().peekable();
        match tokens.next() {
            Some("block-retargeted") if tokens.peek().is_none() => set.block_retargeted = true,
            Some("block-very-unique") if tokens.peek().is_none() => set.block_very_unique = true,
            Some("block") => {
                let (mut interest, mut category, mut pct) = (None, None, None);
                while let Some(tok) = tokens.next() {
                    if tok == "interest" || tok == "noninterest" {
                        if interest.is_some() {
                            return Err(err("ad class given twice".into()));
                        }
                        interest =
                            Some(if tok == "interest" { AdClass::InterestBased } else { AdClass::NonInterestBased });
                    } else if let Some(rest) = tok.strip_prefix("unique>=") {
                        let value = rest.trim_end_matches('%');
                        let v: f64 = value.parse().map_err(|_| err(format!("bad percentile `{rest}`")))?;
                        pct = Some(v);
                    } else if let Some(first) = tok.strip_prefix("cat:") {
                        let mut name = first.to_string();
                        while let Some(next) = tokens.peek() {
                            if is_keyword(next) {
                                break;
                            }
                            name.push(' ');
                            name.push_str(next);
                            tokens.next();
                        }
                        let name = name.trim().trim_matches('"');
                        let id = taxonomy.resolve(name).ok_or_else(|| err(format!("unknown category `{name}`")))?;
                        category = Some(id);
                    } else {
                        return Err(err(format!("unexpected token `{tok}`")));
                    }
                }
                let c = AdConstraint::new(interest, category, pct).map_err(|e| err(e.to_string()))?;
                set.policies.push(Policy::block(c));
            }
            Some(other) => return Err(err(format!("unknown directive `{other}`"))),
            None => unreachable!(),
        }
    }
    Ok(set)
}

fn is_keyword(tok: &str) -> bool {
    tok == "interest" || tok == "noninterest" || tok.starts_with("unique>=") || tok.starts_with("cat:")
}

pub fn load_policy_file(path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<PolicySet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_policy_file(&text, taxonomy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::Level;

    fn tax() -> Taxonomy {
        Taxonomy::bundled()
    }

    fn bottom(t: &Taxonomy, name: &str) -> CategoryId {
        CategoryId::bottom(t.bottom_index(name).unwrap())
    }

    fn ad(t: &Taxonomy, cat: &str, decision: Option<AdClass>) -> AdAnnotation {
        AdAnnotation { selector_id: "s".into(), decision, ..Default::default() }.with_category(bottom(t, cat), t)
    }

    #[test]
    fn kleene_tables() {
        use Tri::*;
        assert_eq!(True.and(Unknown), Unknown);
        assert_eq!(False.and(Unknown), False);
        assert_eq!(True.or(Unknown), True);
        assert_eq!(False.or(Unknown), Unknown);
    }

    #[test]
    fn constraint_needs_a_field() {
        assert!(AdConstraint::new(None, None, None).is_err());
        assert!(AdConstraint::new(None, None, Some(101.0)).is_err());
    }

    #[test]
    fn matching_examples() {
        let t = tax();
        let trains = bottom(&t, "trains");
        let c = AdConstraint::new(Some(AdClass::InterestBased), Some(trains), None).unwrap();
        assert_eq!(matches(&c, &ad(&t, "trains", Some(AdClass::InterestBased))), Tri::True);

        let c = AdConstraint::new(Some(AdClass::InterestBased), None, None).unwrap();
        assert_eq!(matches(&c, &AdAnnotation::default()), Tri::Unknown);

        let health = CategoryId::top(t.top_index("health & fitness").unwrap());
        let c = AdConstraint::new(None, Some(health), Some(25.0)).unwrap();
        let mut a = ad(&t, "cancer", None);
        a.uniqueness_percentile = Some(30.0);
        assert_eq!(matches(&c, &a), Tri::True);
        a.uniqueness_percentile = Some(20.0);
        assert_eq!(matches(&c, &a), Tri::False);
    }

    #[test]
    fn empty_set_shows() {
        assert_eq!(decide(&PolicySet::default(), &AdAnnotation::default()).decision, Decision::Show);
    }

    #[test]
    fn negative_prevails() {
        let t = tax();
        let trains = bottom(&t, "trains");
        let c = AdConstraint::new(Some(AdClass::InterestBased), Some(trains), None).unwrap();
        let ps = PolicySet { policies: vec![Policy::allow(c.clone()), Policy::block(c)], ..Default::default() };
        let v = decide(&ps, &ad(&t, "trains", Some(AdClass::InterestBased)));
        assert_eq!(v.decision, Decision::Hide);
        assert_eq!(v.reasons.len(), 1);
        assert!(v.reasons[0].starts_with("block"));
    }

    #[test]
    fn retargeting_shortcut() {
        let ps = PolicySet { block_retargeted: true, ..Default::default() };
        let a = AdAnnotation { retargeted: true, ..Default::default() };
        assert_eq!(decide(&ps, &a).reasons, vec!["block-retargeted".to_string()]);
        assert_eq!(decide(&ps, &AdAnnotation::default()).decision, Decision::Show);
    }

    #[test]
    fn very_unique_shortcut() {
        let ps = PolicySet { block_very_unique: true, ..Default::default() };
        let mut a = AdAnnotation { uniqueness_percentile: Some(90.0), ..Default::default() };
        assert_eq!(decide(&ps, &a).decision, Decision::Hide);
        a.uniqueness_percentile = Some(89.9);
        assert_eq!(decide(&ps, &a).decision, Decision::Show);
        a.uniqueness_percentile = None;
        assert_eq!(decide(&ps, &a).decision, Decision::Undecidable);
    }

    #[test]
    fn unknown_only_matters_when_outcome_depends_on_it() {
        let t = tax();
        let c = AdConstraint::new(Some(AdClass::InterestBased), None, None).unwrap();
        let ps = PolicySet { policies: vec![Policy::block(c)], ..Default::default() };
        let v = decide(&ps, &ad(&t, "hotels", None));
        assert_eq!(v.decision, Decision::Undecidable);
        assert_eq!(v.reasons, vec!["block interest".to_string()]);

        // An independent true block settles it regardless.
        let mut ps2 = ps.clone();
        ps2.block_retargeted = true;
        let mut a = ad(&t, "hotels", None);
        a.retargeted = true;
        assert_eq!(decide(&ps2, &a).decision, Decision::Hide);
    }

    #[test]
    fn correlated_unknowns_are_resolved() {
        let t = tax();
        let travel = CategoryId::top(t.top_index("travel").unwrap());
        let c = AdConstraint::new(None, Some(travel), None).unwrap();
        let ps = PolicySet { policies: vec![Policy::allow(c.clone()), Policy::block(c)], ..Default::default() };
        // In travel: blocked. Not in travel: not admitted. Hidden either way.
        let v = decide(&ps, &AdAnnotation::default());
        assert_eq!(v.decision, Decision::Hide);
        assert!(!v.reasons.is_empty());
    }

    #[test]
    fn suffixes() {
        let list = SuffixList::bundled();
        assert_eq!(list.registrable_domain("store.apple.com"), "apple.com");
        assert_eq!(list.registrable_domain("www.bbc.co.uk"), "bbc.co.uk");
        assert_eq!(list.registrable_domain("localhost"), "localhost");
        assert_eq!(list.registrable_domain("a.b.example.zz"), "example.zz");
    }

    #[test]
    fn retargeting_examples() {
        assert!(is_retargeted("apple.com", ["apple.com"]));
        assert!(is_retargeted("store.apple.com", ["apple.com"]));
        assert!(is_retargeted("https://store.apple.com/iphone", ["www.apple.com"]));
        assert!(!is_retargeted("samsung.com", ["apple.com"]));
        assert!(!is_retargeted("apple.co.uk", ["apple.com"]));
        assert!(!is_retargeted("", ["apple.com"]));
        assert!(!is_retargeted::<&str>("apple.com", []));
    }

    #[test]
    fn policy_file() {
        let t = tax();
        let text = "# Bob\nblock interest cat:health & fitness unique>=25\nblock-retargeted\n\nblock noninterest cat:hotels\n";
        let ps = parse_policy_file(text, &t).unwrap();
        assert!(ps.block_retargeted && !ps.block_very_unique);
        assert_eq!(ps.policies.len(), 2);
        let health = CategoryId::top(t.top_index("health & fitness").unwrap());
        assert_eq!(
            ps.policies[0].constraint,
            AdConstraint { interest: Some(AdClass::InterestBased), category: Some(health), min_percentile: Some(25.0) }
        );
        assert!(ps.policies.iter().all(|p| p.sign == Sign::Block));
        assert_eq!(health.level, Level::Top);
    }

    #[test]
    fn policy_file_errors_carry_line_numbers() {
        let t = tax();
        assert!(matches!(parse_policy_file("block\n", &t), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_policy_file("\nblock cat:nowhere\n", &t), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_policy_file("allow interest\n", &t), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_policy_file("block unique>=abc\n", &t), Err(Error::Parse { line: 1, .. })));
    }
}
