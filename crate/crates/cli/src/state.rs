//! Persistent per-user state: a versioned JSON document in the state
//! directory, guarded by a lock file while a command mutates it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use adscope_core::detector::AdClass;
use adscope_core::profiles::{SelectorState, WindowConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const STATE_VERSION: u32 = 1;
pub const STATE_FILE: &str = "state.json";
pub const LOCK_FILE: &str = "state.lock";

/// Id of the pseudo-selector that sees every normal-mode page.
pub const ACTUAL: &str = "*";

/// What the profile indices mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alphabet {
    /// Bottom-level categories of the configured taxonomy.
    Taxonomy { n: usize },
    /// Opaque indices `0..n`.
    Raw { n: usize },
}

impl Alphabet {
    pub fn n(&self) -> usize {
        match *self {
            Alphabet::Taxonomy { n } | Alphabet::Raw { n } => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAd {
    pub ts: f64,
    pub selector: String,
    pub landing: String,
    pub category: Option<usize>,
    /// Whether the advertiser's site had been visited before the ad arrived.
    pub retargeted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<AdClass>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub events: u64,
    pub visits: u64,
    pub incognito_visits: u64,
    pub normal_ads: u64,
    pub incognito_ads: u64,
    pub malformed_lines: u64,
    pub uncategorized_visits: u64,
    pub uncategorized_ads: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub version: u32,
    pub alphabet: Alphabet,
    pub window: WindowConfig,
    /// Every normal-mode page, as a selector present everywhere would see it.
    pub actual: SelectorState<f64>,
    /// Pages each selector actually tracked, plus its incognito ads.
    pub selectors: BTreeMap<String, SelectorState<f64>>,
    /// Registrable domains of visited pages.
    pub visited: BTreeSet<String>,
    /// Normal-mode ads, in arrival order.
    pub ads: Vec<StoredAd>,
    pub tallies: Tallies,
}

impl State {
    pub fn new(alphabet: Alphabet, window: WindowConfig) -> Self {
        Self {
            version: STATE_VERSION,
            alphabet,
            window,
            actual: SelectorState::new(ACTUAL, alphabet.n()),
            selectors: BTreeMap::new(),
            visited: BTreeSet::new(),
            ads: Vec::new(),
            tallies: Tallies::default(),
        }
    }

    pub fn selector_mut(&mut self, id: &str) -> &mut SelectorState<f64> {
        let n = self.alphabet.n();
        self.selectors.entry(id.to_string()).or_insert_with(|| SelectorState::new(id, n))
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join(STATE_FILE)
    }

    /// `Ok(None)` when the directory holds no state yet.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = Self::path(dir);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(CliError::read(&path, e)),
        };
        Self::from_json(&text).map(Some).map_err(|e| match e {
            CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Loads state from a directory or a `state.json` path; missing state is an error.
    pub fn load_snapshot(path: &Path) -> Result<Self> {
        if path.is_dir() {
            return Self::load(path)?.ok_or_else(|| CliError::Data(format!("{}: no state found", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| CliError::Data(format!("unreadable state: {e}")))?;
        if header.version != STATE_VERSION {
            return Err(CliError::Data(format!(
                "state version {} is not supported (expected {STATE_VERSION})",
                header.version
            )));
        }
        serde_json::from_str(text).map_err(|e| CliError::Data(format!("unreadable state: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serializes")
    }

    /// Writes through a temporary file so a crash never leaves half a state.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = Self::path(dir);
        let tmp = dir.join(format!("{STATE_FILE}.tmp"));
        std::fs::write(&tmp, self.to_json()).map_err(|e| CliError::write(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::write(&path, e))
    }
}

/// Exclusive hold on a state directory; released on drop.
#[derive(Debug)]
pub struct StateLock {
    path: PathBuf,
}

impl StateLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Data(format!(
                "state directory {} is in use (remove {} if no other run is active)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::write(&path, e)),
        }
    }
}

impl Drop for StateLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
