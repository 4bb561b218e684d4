//! Page and landing-page categorization.
//!
//! Lookup order: cache, then hostname (longest matching suffix), then a
//! weighted unigram/bigram TF-IDF score over the page's text fields.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{CategoryId, Taxonomy};

const BUNDLED: &str = include_str!("../data/lexicon.txt");

/// Number of page categorizations remembered by [`CategoryCache::default`].
pub const DEFAULT_CACHE_CAPACITY: usize = 500;

/// Hostname table plus n-gram weights.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    url_map: HashMap<String, CategoryId>,
    ngram_table: HashMap<String, Vec<(CategoryId, f64)>>,
}

impl Lexicon {
    pub fn bundled(taxonomy: &Taxonomy) -> Result<Self> {
        Self::parse(BUNDLED, taxonomy)
    }

    pub fn load(path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Parse {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::parse(&text, taxonomy)
    }

    /// Parses `url<TAB>domain<TAB>category` and
    /// `ngram<TAB>term<TAB>category<TAB>weight` lines. Categories must be
    /// bottom-level names of `taxonomy`.
    pub fn parse(text: &str, taxonomy: &Taxonomy) -> Result<Self> {
        let mut lex = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |message: String| Error::Parse { line: line_no, message };
            let resolve = |name: &str| {
                taxonomy
                    .bottom_index(name)
                    .map(CategoryId::bottom)
                    .ok_or_else(|| Error::UnknownCategory(name.to_string()))
            };
            match fields.as_slice() {
                ["url", domain, category] => {
                    let domain = domain.trim().to_lowercase();
                    if domain.is_empty() {
                        return Err(bad("empty domain".into()));
                    }
                    lex.url_map.insert(domain, resolve(category)?);
                }
                ["ngram", term, category, weight] => {
                    let weight: f64 = weight
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad weight `{weight}`")))?;
                    if !(weight >= 0.0) || !weight.is_finite() {
                        return Err(bad(format!("weight must be nonnegative, got {weight}")));
                    }
                    let tokens = tokenize(term);
                    if tokens.is_empty() || tokens.len() > 2 {
                        return Err(bad(format!("`{term}` is not a unigram or bigram")));
                    }
                    let entry = lex.ngram_table.entry(tokens.join(" ")).or_default();
                    entry.push((resolve(category)?, weight));
                }
                _ => return Err(bad(format!("unrecognized lexicon line `{line}`"))),
            }
        }
        Ok(lex)
    }

    pub fn insert_url(&mut self, domain: &str, category: CategoryId) {
        self.url_map.insert(domain.to_lowercase(), category);
    }

    pub fn insert_ngram(&mut self, term: &str, category: CategoryId, weight: f64) {
        assert!(weight >= 0.0);
        self.ngram_table.entry(tokenize(term).join(" ")).or_default().push((category, weight));
    }

    pub fn url_entries(&self) -> impl Iterator<Item = (&str, CategoryId)> {
        self.url_map.iter().map(|(d, &c)| (d.as_str(), c))
    }

    pub fn ngram_entries(&self) -> impl Iterator<Item = (&str, &[(CategoryId, f64)])> {
        self.ngram_table.iter().map(|(t, v)| (t.as_str(), v.as_slice()))
    }

    fn lookup_host(&self, host: &str) -> Option<CategoryId> {
        let mut rest = host;
        loop {
            if let Some(&c) = self.url_map.get(rest) {
                return Some(c);
            }
            rest = rest.split_once('.')?.1;
        }
    }
}

/// Text fields of a page or an ad landing page.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageText {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub content: String,
}

impl PageText {
    pub fn from_url(url: impl Into<String>) -> Self {
        Self { url: url.into(), ..Self::default() }
    }
}

/// Per-field multipliers applied to term evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldWeights {
    pub keywords: f64,
    pub title: f64,
    pub url: f64,
    pub content: f64,
}

impl Default for FieldWeights {
    fn default() -> Self {
        Self { keywords: 4.0, title: 3.0, url: 2.0, content: 1.0 }
    }
}

impl FieldWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("keywords", self.keywords),
            ("title", self.title),
            ("url", self.url),
            ("content", self.content),
        ] {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig(format!("field weight `{name}` must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Least-recently-used memo of url → category.
#[derive(Debug, Clone)]
pub struct CategoryCache {
    capacity: usize,
    tick: u64,
    entries: HashMap<String, (CategoryId, u64)>,
    recency: BTreeMap<u64, String>,
}

impl Default for CategoryCache {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_CACHE_CAPACITY)
    }
}

impl CategoryCache {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "cache capacity must be positive");
        Self { capacity, tick: 0, entries: HashMap::new(), recency: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&mut self, url: &str) -> Option<CategoryId> {
        self.tick += 1;
        let tick = self.tick;
        let (category, last) = self.entries.get_mut(url)?;
        self.recency.remove(last);
        *last = tick;
        self.recency.insert(tick, url.to_string());
        Some(*category)
    }

    pub fn insert(&mut self, url: &str, category: CategoryId) {
        self.tick += 1;
        if let Some((_, last)) = self.entries.remove(url) {
            self.recency.remove(&last);
        }
        while self.entries.len() >= self.capacity {
            let (_, oldest) = self.recency.pop_first().expect("recency tracks every entry");
            self.entries.remove(&oldest);
        }
        self.entries.insert(url.to_string(), (category, self.tick));
        self.recency.insert(self.tick, url.to_string());
    }

    pub fn contains(&self, url: &str) -> bool {
        self.entries.contains_key(url)
    }
}

/// Lexicon plus field weights.
#[derive(Debug, Clone)]
pub struct Categorizer {
    lexicon: Lexicon,
    weights: FieldWeights,
}

impl Categorizer {
    pub fn new(lexicon: Lexicon, weights: FieldWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self { lexicon, weights })
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn weights(&self) -> FieldWeights {
        self.weights
    }

    pub fn classify_url(&self, url: &str) -> Option<CategoryId> {
        classify_url(url, &self.lexicon)
    }

    pub fn classify_text(&self, page: &PageText) -> Option<(CategoryId, f64)> {
        classify_text(page, &self.lexicon, &self.weights)
    }

    /// Cache, then hostname lookup, then text fallback.
    pub fn classify_page(&self, page: &PageText, cache: Option<&mut CategoryCache>) -> Option<CategoryId> {
        match cache {
            Some(cache) => {
                if let Some(hit) = cache.get(&page.url) {
                    return Some(hit);
                }
                let found = self.classify_uncached(page);
                if let Some(c) = found {
                    cache.insert(&page.url, c);
                }
                found
            }
            None => self.classify_uncached(page),
        }
    }

    fn classify_uncached(&self, page: &PageText) -> Option<CategoryId> {
        self.classify_url(&page.url).or_else(|| self.classify_text(page).map(|(c, _)| c))
    }
}

/// Hostname of a URL, lowercased, without scheme, credentials, port or path.
pub fn hostname(url: &str) -> Option<String> {
    let url = url.trim();
    let rest = match url.find("://") {
        Some(i) => &url[i + 3..],
        None => url,
    };
    let authority = rest.split(['/', '?', '#']).next()?;
    let host = authority.rsplit('@').next()?;
    let host = host.split(':').next()?.trim_end_matches('.');
    if host.is_empty() {
        None
    } else {
        Some(host.to_lowercase())
    }
}

pub fn classify_url(url: &str, lex: &Lexicon) -> Option<CategoryId> {
    lex.lookup_host(&hostname(url)?)
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn accumulate(tokens: &[String], weight: f64, lex: &Lexicon, scores: &mut BTreeMap<CategoryId, f64>) {
    let mut add = |term: &str| {
        if let Some(entries) = lex.ngram_table.get(term) {
            for &(c, w) in entries {
                *scores.entry(c).or_insert(0.0) += weight * w;
            }
        }
    };
    for t in tokens {
        add(t);
    }
    for pair in tokens.windows(2) {
        add(&format!("{} {}", pair[0], pair[1]));
    }
}

/// Per-category TF-IDF scores of a page.
pub fn text_scores(page: &PageText, lex: &Lexicon, weights: &FieldWeights) -> BTreeMap<CategoryId, f64> {
    let mut scores = BTreeMap::new();
    for keyword in &page.keywords {
        accumulate(&tokenize(keyword), weights.keywords, lex, &mut scores);
    }
    accumulate(&tokenize(&page.title), weights.title, lex, &mut scores);
    accumulate(&tokenize(&page.url), weights.url, lex, &mut scores);
    accumulate(&tokenize(&page.content), weights.content, lex, &mut scores);
    scores
}

/// Highest-scoring category, ties to the smallest id; `None` without evidence.
pub fn classify_text(page: &PageText, lex: &Lexicon, weights: &FieldWeights) -> Option<(CategoryId, f64)> {
    let mut best: Option<(CategoryId, f64)> = None;
    // BTreeMap iterates in id order, so a strict `>` keeps the smallest id on ties.
    for (c, s) in text_scores(page, lex, weights) {
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best
}
