//! Two-level interest taxonomy and mass projection between its levels.
//!
//! File format (UTF-8, `#` starts a comment):
//!
//! ```text
//! top:health & fitness
//! bottom:cancer<TAB>health & fitness
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::Pmf;
use crate::scalar::Scalar;

const BUNDLED: &str = include_str!("../data/taxonomy.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Top,
    Bottom,
}

/// Category identity. Names are display metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryId {
    pub index: usize,
    pub level: Level,
}

impl CategoryId {
    pub fn top(index: usize) -> Self {
        Self { index, level: Level::Top }
    }

    pub fn bottom(index: usize) -> Self {
        Self { index, level: Level::Bottom }
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level {
            Level::Top => write!(f, "top#{}", self.index),
            Level::Bottom => write!(f, "bottom#{}", self.index),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    top_names: Vec<String>,
    bottom_names: Vec<String>,
    parent: Vec<usize>,
    top_lookup: HashMap<String, usize>,
    bottom_lookup: HashMap<String, usize>,
}

impl Taxonomy {
    /// The taxonomy shipped with the crate (32 top, 330 bottom categories).
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled taxonomy is well formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Parse {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut top_names = Vec::new();
        let mut top_lookup = HashMap::new();
        let mut pending = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let line_no = lineno + 1;
            if let Some(name) = line.strip_prefix("top:") {
                let name = normalize_name(name);
                if name.is_empty() {
                    return Err(Error::Parse { line: line_no, message: "empty top-level name".into() });
                }
                if top_lookup.insert(name.clone(), top_names.len()).is_some() {
                    return Err(Error::DuplicateName(name));
                }
                top_names.push(name);
            } else if let Some(rest) = line.strip_prefix("bottom:") {
                let (name, parent) = match rest.split_once('\t') {
                    Some((n, p)) => (normalize_name(n), normalize_name(p)),
                    None => (normalize_name(rest), String::new()),
                };
                if name.is_empty() {
                    return Err(Error::Parse { line: line_no, message: "empty bottom-level name".into() });
                }
                pending.push((name, parent));
            } else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `top:` or `bottom:` prefix, found `{line}`"),
                });
            }
        }

        let mut bottom_names = Vec::with_capacity(pending.len());
        let mut bottom_lookup = HashMap::with_capacity(pending.len());
        let mut parent = Vec::with_capacity(pending.len());
        for (name, parent_name) in pending {
            let Some(&p) = top_lookup.get(&parent_name) else {
                return Err(Error::Orphan { name, parent: parent_name });
            };
            if bottom_lookup.insert(name.clone(), bottom_names.len()).is_some() {
                return Err(Error::DuplicateName(name));
            }
            bottom_names.push(name);
            parent.push(p);
        }
        if top_names.is_empty() {
            return Err(Error::Empty("taxonomy has no top-level categories"));
        }

        Ok(Self { top_names, bottom_names, parent, top_lookup, bottom_lookup })
    }

    pub fn top_len(&self) -> usize {
        self.top_names.len()
    }

    pub fn bottom_len(&self) -> usize {
        self.bottom_names.len()
    }

    pub fn top_names(&self) -> &[String] {
        &self.top_names
    }

    pub fn bottom_names(&self) -> &[String] {
        &self.bottom_names
    }

    /// Top-level index of a bottom category.
    pub fn parent_of(&self, bottom: usize) -> usize {
        self.parent[bottom]
    }

    pub fn children_of(&self, top: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent.iter().enumerate().filter(move |(_, &p)| p == top).map(|(i, _)| i)
    }

    pub fn name(&self, id: CategoryId) -> &str {
        match id.level {
            Level::Top => &self.top_names[id.index],
            Level::Bottom => &self.bottom_names[id.index],
        }
    }

    pub fn bottom_index(&self, name: &str) -> Option<usize> {
        self.bottom_lookup.get(&normalize_name(name)).copied()
    }

    pub fn top_index(&self, name: &str) -> Option<usize> {
        self.top_lookup.get(&normalize_name(name)).copied()
    }

    /// Resolves a name, preferring the bottom level.
    pub fn resolve(&self, name: &str) -> Option<CategoryId> {
        self.bottom_index(name)
            .map(CategoryId::bottom)
            .or_else(|| self.top_index(name).map(CategoryId::top))
    }

    /// Lifts any category to its top-level ancestor (identity for top categories).
    pub fn to_top(&self, id: CategoryId) -> CategoryId {
        match id.level {
            Level::Top => id,
            Level::Bottom => CategoryId::top(self.parent[id.index]),
        }
    }

    /// Sums a bottom-level vector into top-level buckets.
    pub fn aggregate<T: Scalar>(&self, values: &[T]) -> Result<Vec<T>> {
        if values.len() != self.bottom_len() {
            return Err(Error::Dimension { expected: self.bottom_len(), got: values.len() });
        }
        let mut out = vec![T::zero(); self.top_len()];
        for (j, &v) in values.iter().enumerate() {
            out[self.parent[j]] += v;
        }
        Ok(out)
    }

    /// Projects a bottom-level PMF onto the top level.
    pub fn project_to_top<T: Scalar>(&self, d: &Pmf<T>) -> Result<Pmf<T>> {
        let top = self.aggregate(d.as_slice())?;
        Pmf::new(top)
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}
