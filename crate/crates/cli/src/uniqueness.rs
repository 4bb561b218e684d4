//! Profile uniqueness against a population, and the aggregation that
//! produces the population statistics.
//!
//! Taxonomy-based profiles are compared at the top level; raw-index profiles
//! as they are.

use std::fmt::Write as _;
use std::path::Path;

use adscope_core::detector::DEFAULT_BUDGET;
use adscope_core::pmf::Pmf;
use adscope_core::profiles::{Scenario, UncertaintyClass};
use adscope_core::taxonomy::Taxonomy;
use adscope_core::uniqueness::{average_profile, class_to_top, min_uniqueness};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::report::selector_class;
use crate::state::{Alphabet, State, ACTUAL};

pub const POPULATION_SCHEMA_VERSION: u32 = 1;
pub const UNIQUENESS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Top-level taxonomy categories.
    Top,
    /// Raw category indices.
    Raw,
}

/// Population statistics shared between users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationFile {
    pub schema_version: u32,
    pub level: Level,
    pub snapshots: usize,
    pub p_bar: Vec<f64>,
    /// Minimum uniqueness of each snapshot against `p_bar`, in bits.
    pub u_values: Vec<f64>,
}

impl PopulationFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        let pop: Self = serde_json::from_str(&text).map_err(|e| CliError::read(path, e))?;
        if pop.schema_version != POPULATION_SCHEMA_VERSION {
            return Err(CliError::Data(format!("{}: unsupported schema version {}", path.display(), pop.schema_version)));
        }
        Ok(pop)
    }

    pub fn p_bar(&self) -> Result<Pmf<f64>> {
        Ok(Pmf::new(self.p_bar.clone())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("population serializes") + "\n"
    }
}

pub fn level_of(alphabet: Alphabet) -> Level {
    match alphabet {
        Alphabet::Taxonomy { .. } => Level::Top,
        Alphabet::Raw { .. } => Level::Raw,
    }
}

/// A class in the space uniqueness is measured in.
pub fn lift_class(u: &UncertaintyClass<f64>, alphabet: Alphabet, taxonomy: &Taxonomy) -> Result<UncertaintyClass<f64>> {
    match alphabet {
        Alphabet::Taxonomy { .. } => Ok(class_to_top(u, taxonomy)?),
        Alphabet::Raw { .. } => Ok(u.clone()),
    }
}

fn lift_profile(p: &Pmf<f64>, alphabet: Alphabet, taxonomy: &Taxonomy) -> Result<Pmf<f64>> {
    match alphabet {
        Alphabet::Taxonomy { .. } => Ok(taxonomy.project_to_top(p)?),
        Alphabet::Raw { .. } => Ok(p.clone()),
    }
}

fn check_taxonomy(alphabet: Alphabet, taxonomy: &Taxonomy) -> Result<()> {
    match alphabet {
        Alphabet::Taxonomy { n } if n != taxonomy.bottom_len() => Err(CliError::Data(format!(
            "state has {n} categories but the taxonomy has {} bottom categories",
            taxonomy.bottom_len()
        ))),
        _ => Ok(()),
    }
}

/// Builds population statistics from user snapshots (state directories or
/// `state.json` files). Each snapshot contributes its full clickstream estimate.
pub fn aggregate(snapshots: &[impl AsRef<Path>], taxonomy: &Taxonomy) -> Result<PopulationFile> {
    if snapshots.is_empty() {
        return Err(CliError::Data("aggregate needs at least one snapshot".into()));
    }
    let mut level = None;
    let mut profiles = Vec::new();
    let mut classes = Vec::new();
    for path in snapshots {
        let path = path.as_ref();
        let state = State::load_snapshot(path)?;
        check_taxonomy(state.alphabet, taxonomy)?;
        let l = level_of(state.alphabet);
        if level.is_some_and(|x| x != l) {
            return Err(CliError::Data(format!("{}: snapshot mixes taxonomy and raw categories", path.display())));
        }
        level = Some(l);
        let Some(mle) = state.actual.current_estimate() else {
            warn!("{}: no pages observed; snapshot ignored", path.display());
            continue;
        };
        profiles.push(lift_profile(&mle, state.alphabet, taxonomy)?);
        match &state.actual.uclass {
            Some(u) => classes.push(lift_class(u, state.alphabet, taxonomy)?),
            None => warn!("{}: fewer than w_min pages; contributes to the mean profile only", path.display()),
        }
    }
    if profiles.is_empty() {
        return Err(CliError::Data("no snapshot has any observed pages".into()));
    }
    if profiles.iter().any(|p| p.len() != profiles[0].len()) {
        return Err(CliError::Data("snapshots have different category counts".into()));
    }
    let p_bar = average_profile(&profiles)?;
    let u_values = classes
        .iter()
        .map(|u| min_uniqueness(u, &p_bar, &[], DEFAULT_BUDGET).map(|r| r.u_min))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(PopulationFile {
        schema_version: POPULATION_SCHEMA_VERSION,
        level: level.expect("at least one snapshot"),
        snapshots: profiles.len(),
        p_bar: p_bar.into_vec(),
        u_values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessRow {
    /// `*` is the user's full browsing profile.
    pub selector: String,
    pub u_min: Option<f64>,
    pub percentile: Option<f64>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub level: Level,
    pub population_size: usize,
    pub rows: Vec<UniquenessRow>,
}

/// Worst-case uniqueness of the full profile and of each selector's view of it.
pub fn uniqueness(state: &State, scenario: Scenario, taxonomy: &Taxonomy, pop: &PopulationFile) -> Result<UniquenessReport> {
    check_taxonomy(state.alphabet, taxonomy)?;
    let level = level_of(state.alphabet);
    if level != pop.level {
        return Err(CliError::Data(format!("population is at {:?} level but the state needs {:?}", pop.level, level)));
    }
    let p_bar = pop.p_bar()?;
    let mut rows = Vec::with_capacity(state.selectors.len() + 1);
    let mut row = |selector: &str, class: Option<&UncertaintyClass<f64>>| -> Result<()> {
        let Some(u) = class else {
            rows.push(UniquenessRow {
                selector: selector.to_string(),
                u_min: None,
                percentile: None,
                reason: Some(format!("insufficient data: fewer than {} pages observed", state.window.w_min)),
            });
            return Ok(());
        };
        let lifted = lift_class(u, state.alphabet, taxonomy)?;
        if lifted.dim() != p_bar.len() {
            return Err(CliError::Data(format!(
                "population has {} categories, profiles have {}",
                p_bar.len(),
                lifted.dim()
            )));
        }
        let r = min_uniqueness(&lifted, &p_bar, &pop.u_values, DEFAULT_BUDGET)?;
        rows.push(UniquenessRow {
            selector: selector.to_string(),
            u_min: Some(r.u_min),
            percentile: r.percentile,
            reason: r.percentile.is_none().then(|| "percentile unavailable: empty population".to_string()),
        });
        Ok(())
    };
    row(ACTUAL, state.actual.uclass.as_ref())?;
    for (id, sel) in &state.selectors {
        row(id, selector_class(state, sel, scenario).0)?;
    }
    Ok(UniquenessReport {
        schema_version: UNIQUENESS_SCHEMA_VERSION,
        scenario,
        level,
        population_size: pop.u_values.len(),
        rows,
    })
}

/// Percentile of each selector's view, for policy evaluation.
pub fn selector_percentiles(report: &UniquenessReport) -> impl Iterator<Item = (&str, Option<f64>)> {
    report.rows.iter().map(|r| (r.selector.as_str(), r.percentile))
}

impl UniquenessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario: {}  population: {}", self.scenario, self.population_size);
        let _ = writeln!(out, "{:<28} {:>10} {:>10}  note", "selector", "u_min", "percentile");
        for r in &self.rows {
            let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{:<28} {:>10} {:>10}  {}",
                r.selector,
                num(r.u_min),
                num(r.percentile),
                r.reason.as_deref().unwrap_or("")
            );
        }
        out
    }
}
