//! Per-selector profile state: the clickstream-derived uncertainty class and
//! the estimate of the untracked ad distribution.
//!
//! The class is built from maximum-likelihood estimates over the most recent
//! `min(m, w_max)` observed pages, evaluated at every arrival once at least
//! `w_min` pages have been observed. `p_min`/`p_max` are the running
//! componentwise min/max of those estimates, so each estimate lies inside the
//! class and the class stays feasible.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::{ml_estimate, Pmf};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Normal,
    Incognito,
}

/// Tracking assumption used when building a selector's observed clickstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// A selector only sees the pages it is present on.
    #[default]
    Baseline,
    /// Every selector sees every page.
    Paranoid,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "paranoid" => Ok(Self::Paranoid),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::Paranoid => "paranoid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageVisit {
    pub timestamp: f64,
    /// Index into the profile alphabet.
    pub category: usize,
    pub tracked_by: BTreeSet<String>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdObservation {
    pub timestamp: f64,
    pub selector_id: String,
    pub category: Option<usize>,
    pub landing_domain: String,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub w_min: usize,
    pub w_max: usize,
    pub rho: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { w_min: 87, w_max: 3915, rho: 0.25 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_min < 1 || self.w_min > self.w_max {
            return Err(Error::InvalidConfig(format!(
                "window bounds must satisfy 1 <= w_min <= w_max, got w_min={} w_max={}",
                self.w_min, self.w_max
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        Ok(())
    }
}

/// Componentwise bounds `p_min ≤ p ≤ p_max` on a PMF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyClass<T> {
    pub p_min: Vec<T>,
    pub p_max: Vec<T>,
    pub samples_seen: u64,
}

impl<T: Scalar> UncertaintyClass<T> {
    pub fn new(p_min: Vec<T>, p_max: Vec<T>) -> Result<Self> {
        if p_min.len() != p_max.len() {
            return Err(Error::Dimension { expected: p_min.len(), got: p_max.len() });
        }
        if p_min.is_empty() {
            return Err(Error::Empty("uncertainty class has no categories"));
        }
        for (i, (&lo, &hi)) in p_min.iter().zip(&p_max).enumerate() {
            if !(lo >= T::zero() && lo <= hi && hi <= T::one()) {
                return Err(Error::Normalization(format!("bounds at {i} violate 0 <= {lo} <= {hi} <= 1")));
            }
        }
        Ok(Self { p_min, p_max, samples_seen: 0 })
    }

    /// The class `{p}`.
    pub fn singleton(p: &Pmf<T>) -> Self {
        Self { p_min: p.as_slice().to_vec(), p_max: p.as_slice().to_vec(), samples_seen: 0 }
    }

    pub fn dim(&self) -> usize {
        self.p_min.len()
    }

    pub fn is_feasible(&self) -> bool {
        check_feasible(self)
    }

    /// Whether `p` satisfies the bounds within `tol`.
    pub fn contains(&self, p: &[T], tol: T) -> bool {
        p.len() == self.dim()
            && p.iter().zip(self.p_min.iter().zip(&self.p_max)).all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    fn widen(&mut self, p: &[T]) {
        for ((lo, hi), &v) in self.p_min.iter_mut().zip(self.p_max.iter_mut()).zip(p) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }
}

/// `Σ p_min ≤ 1 ≤ Σ p_max` and `p_min ≤ p_max`, with 1e-9 slack on the sums.
pub fn check_feasible<T: Scalar>(u: &UncertaintyClass<T>) -> bool {
    let tol = T::mass_tolerance();
    if u.p_min.len() != u.p_max.len() || u.p_min.is_empty() {
        return false;
    }
    let ordered = u.p_min.iter().zip(&u.p_max).all(|(&lo, &hi)| lo <= hi);
    let lo_sum: T = u.p_min.iter().copied().sum();
    let hi_sum: T = u.p_max.iter().copied().sum();
    ordered && lo_sum <= T::one() + tol && hi_sum >= T::one() - tol
}

/// Bounded category window with running counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryWindow {
    items: VecDeque<usize>,
    counts: Vec<u64>,
}

impl CategoryWindow {
    pub fn new(n: usize) -> Self {
        Self { items: VecDeque::new(), counts: vec![0; n] }
    }

    pub fn push(&mut self, category: usize, cap: usize) {
        self.items.push_back(category);
        self.counts[category] += 1;
        while self.items.len() > cap {
            let old = self.items.pop_front().expect("window is nonempty");
            self.counts[old] -= 1;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn items(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.items.iter().copied()
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.items.get(i).copied()
    }

    pub fn estimate<T: Scalar>(&self) -> Result<Pmf<T>> {
        ml_estimate(&self.counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorState<T> {
    pub selector_id: String,
    pub clickstream: CategoryWindow,
    pub q_window: CategoryWindow,
    pub uclass: Option<UncertaintyClass<T>>,
    pub q_hat: Option<Pmf<T>>,
    /// Pages appended to the clickstream over the state's lifetime.
    pub pages_observed: u64,
    /// Categorized incognito ads appended to `q_window`.
    pub incognito_ads: u64,
    /// Incognito ads skipped because they had no category.
    pub undecidable_ads: u64,
}

impl<T: Scalar> SelectorState<T> {
    pub fn new(selector_id: impl Into<String>, n: usize) -> Self {
        assert!(n > 0, "profile alphabet must be nonempty");
        Self {
            selector_id: selector_id.into(),
            clickstream: CategoryWindow::new(n),
            q_window: CategoryWindow::new(n),
            uclass: None,
            q_hat: None,
            pages_observed: 0,
            incognito_ads: 0,
            undecidable_ads: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.clickstream.counts().len()
    }

    /// Most recent windowed estimate of the observed profile, if any page was seen.
    pub fn current_estimate(&self) -> Option<Pmf<T>> {
        self.clickstream.estimate().ok()
    }

    /// Applies a tracked page visit. Returns whether the clickstream grew.
    pub fn observe_visit(&mut self, visit: &PageVisit, cfg: &WindowConfig, scenario: Scenario) -> Result<bool> {
        if visit.mode != Mode::Normal {
            return Err(Error::ModeMismatch("incognito visits never extend a clickstream"));
        }
        if visit.category >= self.n() {
            return Err(Error::Dimension { expected: self.n(), got: visit.category + 1 });
        }
        let observed = match scenario {
            Scenario::Paranoid => true,
            Scenario::Baseline => visit.tracked_by.contains(&self.selector_id),
        };
        if !observed {
            return Ok(false);
        }
        self.clickstream.push(visit.category, cfg.w_max);
        self.pages_observed += 1;
        if self.clickstream.len() >= cfg.w_min {
            let mle: Pmf<T> = self.clickstream.estimate()?;
            match &mut self.uclass {
                Some(u) => u.widen(mle.as_slice()),
                None => self.uclass = Some(UncertaintyClass::singleton(&mle)),
            }
        }
        if let Some(u) = &mut self.uclass {
            u.samples_seen = self.pages_observed;
        }
        Ok(true)
    }

    /// Feeds an ad received in an untracked session into the `q` estimate.
    pub fn observe_incognito_ad(&mut self, ad: &AdObservation, cfg: &WindowConfig) -> Result<bool> {
        if ad.mode != Mode::Incognito {
            return Err(Error::ModeMismatch("q is estimated from incognito ads only"));
        }
        if ad.selector_id != self.selector_id {
            return Err(Error::InvalidConfig(format!(
                "ad from selector `{}` routed to `{}`",
                ad.selector_id, self.selector_id
            )));
        }
        let Some(category) = ad.category else {
            self.undecidable_ads += 1;
            return Ok(false);
        };
        if category >= self.n() {
            return Err(Error::Dimension { expected: self.n(), got: category + 1 });
        }
        self.q_window.push(category, cfg.w_max);
        self.incognito_ads += 1;
        if self.q_window.len() >= cfg.w_min {
            self.q_hat = Some(self.q_window.estimate()?);
        }
        Ok(true)
    }
}
