//! Event-log ingestion. Appends to the state: ingesting a file twice counts
//! its events twice.

use std::io::BufRead;

use adscope_core::categorizer::{CategoryCache, PageText};
use adscope_core::events::{AdRecord, CategoryRef, EventRecord, VisitRecord};
use adscope_core::policy::{is_retargeted, registrable_domain};
use adscope_core::profiles::{AdObservation, Mode, PageVisit, Scenario};
use log::warn;
use serde::Serialize;

use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::state::{Alphabet, State, StateLock, StoredAd};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub applied: u64,
    pub skipped: u64,
    pub uncategorized: u64,
}

/// Ingests one JSONL stream into the state directory named by `settings`.
/// Bad lines are logged with their line number and skipped.
pub fn ingest(settings: &Settings, input: impl BufRead, source: &str) -> Result<IngestSummary> {
    let _lock = StateLock::acquire(&settings.state_dir)?;
    let mut state = match State::load(&settings.state_dir)? {
        Some(s) => s,
        None => State::new(requested_alphabet(settings), settings.window),
    };
    check_alphabet(&state, settings)?;
    if state.window != settings.window {
        warn!(
            "state was built with w_min={} w_max={} rho={}; keeping those over the configured window",
            state.window.w_min, state.window.w_max, state.window.rho
        );
    }

    let mut ingester = Ingester { settings, cache: CategoryCache::default(), last_ts: f64::NEG_INFINITY };
    let mut summary = IngestSummary::default();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CliError::Data(format!("{source}: line {lineno}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<EventRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|ev| ingester.apply(&mut state, ev));
        match outcome {
            Ok(categorized) => {
                summary.applied += 1;
                state.tallies.events += 1;
                if !categorized {
                    summary.uncategorized += 1;
                }
            }
            Err(msg) => {
                warn!("{source}: line {lineno}: skipped: {msg}");
                summary.skipped += 1;
                state.tallies.malformed_lines += 1;
            }
        }
    }
    state.save(&settings.state_dir)?;
    Ok(summary)
}

fn requested_alphabet(settings: &Settings) -> Alphabet {
    match settings.categories {
        Some(n) => Alphabet::Raw { n },
        None => Alphabet::Taxonomy { n: settings.taxonomy.bottom_len() },
    }
}

fn check_alphabet(state: &State, settings: &Settings) -> Result<()> {
    let want = requested_alphabet(settings);
    if state.alphabet != want {
        return Err(CliError::Data(format!(
            "state in {} uses {:?}, but this run asks for {:?}",
            settings.state_dir.display(),
            state.alphabet,
            want
        )));
    }
    Ok(())
}

struct Ingester<'a> {
    settings: &'a Settings,
    cache: CategoryCache,
    last_ts: f64,
}

impl Ingester<'_> {
    /// Applies one event; `Ok(false)` when it had to be left uncategorized.
    fn apply(&mut self, state: &mut State, ev: EventRecord) -> Result<bool, String> {
        let ts = ev.ts();
        if !ts.is_finite() {
            return Err(format!("timestamp {ts} is not finite"));
        }
        if ts < self.last_ts {
            return Err(format!("timestamp {ts} precedes the previous event ({})", self.last_ts));
        }
        let categorized = match ev {
            EventRecord::Visit(v) => self.visit(state, v)?,
            EventRecord::Ad(a) => self.ad(state, a)?,
        };
        self.last_ts = ts;
        Ok(categorized)
    }

    fn visit(&mut self, state: &mut State, v: VisitRecord) -> Result<bool, String> {
        let category = self.category(state, v.category.as_ref(), v.url.as_deref())?;
        if v.mode == Mode::Incognito {
            state.tallies.incognito_visits += 1;
            return Ok(true);
        }
        state.tallies.visits += 1;
        if let Some(url) = &v.url {
            state.visited.insert(registrable_domain(url));
        }
        let Some(category) = category else {
            state.tallies.uncategorized_visits += 1;
            return Ok(false);
        };
        let visit = PageVisit { timestamp: v.ts, category, tracked_by: v.tracked_by.into_iter().collect(), mode: v.mode };
        let window = state.window;
        state.actual.observe_visit(&visit, &window, Scenario::Paranoid).map_err(|e| e.to_string())?;
        for id in &visit.tracked_by {
            state.selector_mut(id).observe_visit(&visit, &window, Scenario::Baseline).map_err(|e| e.to_string())?;
        }
        Ok(true)
    }

    fn ad(&mut self, state: &mut State, a: AdRecord) -> Result<bool, String> {
        if a.selector.is_empty() {
            return Err("ad without a selector".into());
        }
        let landing = match (a.landing.is_empty(), &a.url) {
            (false, _) => registrable_domain(&a.landing),
            (true, Some(url)) => registrable_domain(url),
            (true, None) => return Err("ad without a landing domain or url".into()),
        };
        let page = a.url.clone().unwrap_or_else(|| format!("https://{landing}/"));
        let category = self.category(state, a.category.as_ref(), Some(&page))?;
        match a.mode {
            Mode::Normal => {
                state.tallies.normal_ads += 1;
                if category.is_none() {
                    state.tallies.uncategorized_ads += 1;
                }
                let retargeted = is_retargeted(&landing, &state.visited);
                state.selector_mut(&a.selector);
                state.ads.push(StoredAd { ts: a.ts, selector: a.selector, landing, category, retargeted, truth: a.truth });
            }
            Mode::Incognito => {
                state.tallies.incognito_ads += 1;
                if category.is_none() {
                    state.tallies.uncategorized_ads += 1;
                }
                let obs = AdObservation {
                    timestamp: a.ts,
                    selector_id: a.selector.clone(),
                    category,
                    landing_domain: landing,
                    mode: Mode::Incognito,
                };
                let window = state.window;
                state.selector_mut(&a.selector).observe_incognito_ad(&obs, &window).map_err(|e| e.to_string())?;
            }
        }
        Ok(category.is_some())
    }

    /// Explicit category if given, else the categorizer's verdict on `url`.
    fn category(&mut self, state: &State, given: Option<&CategoryRef>, url: Option<&str>) -> Result<Option<usize>, String> {
        let n = state.alphabet.n();
        let taxonomy = &self.settings.taxonomy;
        match (given, state.alphabet) {
            (Some(CategoryRef::Index(i)), _) if *i < n => Ok(Some(*i)),
            (Some(CategoryRef::Index(i)), _) => Err(format!("category index {i} out of range (n = {n})")),
            (Some(CategoryRef::Name(name)), Alphabet::Taxonomy { .. }) => match taxonomy.bottom_index(name) {
                Some(i) => Ok(Some(i)),
                None if taxonomy.top_index(name).is_some() => {
                    Err(format!("`{name}` is a top-level category; profiles use bottom-level ones"))
                }
                None => Err(format!("unknown category `{name}`")),
            },
            (Some(CategoryRef::Name(name)), Alphabet::Raw { .. }) => {
                Err(format!("category name `{name}` given, but this state uses raw category indices"))
            }
            (None, Alphabet::Taxonomy { .. }) => Ok(url.and_then(|u| {
                self.settings.categorizer.classify_page(&PageText::from_url(u), Some(&mut self.cache)).map(|c| c.index)
            })),
            (None, Alphabet::Raw { .. }) => Ok(None),
        }
    }
}
