//! Run configuration: a TOML file, overridden by command-line flags, with
//! `ADSCOPE_STATE_DIR` as the fallback for the state directory.

use std::path::{Path, PathBuf};

use adscope_core::categorizer::{Categorizer, FieldWeights, Lexicon};
use adscope_core::profiles::{Scenario, WindowConfig};
use adscope_core::taxonomy::Taxonomy;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const STATE_DIR_ENV: &str = "ADSCOPE_STATE_DIR";
pub const DEFAULT_STATE_DIR: &str = ".adscope";

/// On-disk form. Relative paths are taken relative to the file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub taxonomy: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub scenario: Option<Scenario>,
    pub window: Option<WindowConfig>,
    pub policy: Option<PathBuf>,
    pub state_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Profile alphabet size for logs that carry raw category indices
    /// instead of taxonomy categories.
    pub categories: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.taxonomy, &mut cfg.lexicon, &mut cfg.policy, &mut cfg.state_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub state_dir: Option<PathBuf>,
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub categories: Option<usize>,
}

/// Everything a command needs, resolved and loaded.
pub struct Settings {
    pub taxonomy: Taxonomy,
    pub categorizer: Categorizer,
    pub scenario: Scenario,
    pub window: WindowConfig,
    pub policy: Option<PathBuf>,
    pub state_dir: PathBuf,
    pub seed: u64,
    pub categories: Option<usize>,
}

impl Settings {
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let file = match &o.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let taxonomy = match &file.taxonomy {
            Some(p) => Taxonomy::load(p).map_err(|e| CliError::read(p, e))?,
            None => Taxonomy::bundled(),
        };
        let lexicon = match &file.lexicon {
            Some(p) => Lexicon::load(p, &taxonomy).map_err(|e| CliError::read(p, e))?,
            None => Lexicon::bundled(&taxonomy)?,
        };
        let window = file.window.unwrap_or_default();
        window.validate()?;
        let categories = o.categories.or(file.categories);
        if categories == Some(0) {
            return Err(CliError::Usage("categories must be positive".into()));
        }
        let state_dir = o
            .state_dir
            .clone()
            .or(file.state_dir)
            .or_else(|| std::env::var_os(STATE_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STATE_DIR));
        Ok(Self {
            categorizer: Categorizer::new(lexicon, FieldWeights::default())?,
            taxonomy,
            scenario: o.scenario.or(file.scenario).unwrap_or_default(),
            window,
            policy: file.policy,
            state_dir,
            seed: o.seed.or(file.seed).unwrap_or(0),
            categories,
        })
    }
}
