//! JSONL event records shared by the simulator and the command-line tools.
//!
//! One record per line, tagged by `kind`:
//!
//! ```json
//! {"kind":"visit","ts":3.0,"url":"https://trains-guide.com/","tracked_by":["ads.example"],"mode":"normal"}
//! {"kind":"ad","ts":3.0,"selector":"ads.example","landing":"amtrak.com","category":"trains","mode":"normal"}
//! ```
//!
//! `category` is either a bottom-level index or a category name; when it is
//! missing, consumers fall back to categorizing `url`.

use serde::{Deserialize, Serialize};

use crate::detector::AdClass;
use crate::profiles::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CategoryRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventRecord {
    Visit(VisitRecord),
    Ad(AdRecord),
}

impl EventRecord {
    pub fn ts(&self) -> f64 {
        match self {
            EventRecord::Visit(v) => v.ts,
            EventRecord::Ad(a) => a.ts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<CategoryRef>,
    #[serde(default)]
    pub tracked_by: Vec<String>,
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRecord {
    pub ts: f64,
    pub selector: String,
    #[serde(default)]
    pub landing: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<CategoryRef>,
    #[serde(default)]
    pub mode: Mode,
    /// Ground-truth label, present in simulated logs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<AdClass>,
}
