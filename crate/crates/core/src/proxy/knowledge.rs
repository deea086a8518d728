//! Entity knowledge lookup and news augmentation for the retrieval task.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

/// Short encyclopedic summaries by entity name.
pub trait KnowledgeSource: Send + Sync {
    /// `None` when the entity is unknown or the lookup failed.
    fn summary(&self, entity: &str) -> Option<String>;
}

/// Knows nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoKnowledge;

impl KnowledgeSource for NoKnowledge {
    fn summary(&self, _entity: &str) -> Option<String> {
        None
    }
}

/// Summaries stored as `<dir>/<entity with spaces as underscores>.txt`.
#[derive(Debug, Clone)]
pub struct FixtureKnowledge {
    dir: PathBuf,
}

impl FixtureKnowledge {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

fn file_stem(entity: &str) -> Option<String> {
    let stem: String = entity.trim().replace(' ', "_");
    let safe = !stem.is_empty() && stem.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '\''));
    (safe && !stem.starts_with('.')).then_some(stem)
}

impl KnowledgeSource for FixtureKnowledge {
    fn summary(&self, entity: &str) -> Option<String> {
        let path = self.dir.join(format!("{}.txt", file_stem(entity)?));
        let text = std::fs::read_to_string(path).ok()?;
        let text = text.trim();
        (!text.is_empty()).then(|| text.to_owned())
    }
}

/// In-memory summaries, loadable from `entity<TAB>summary` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableKnowledge {
    entries: BTreeMap<String, String>,
}

impl TableKnowledge {
    /// Parses TSV text; blank lines and `#` comments are ignored.
    pub fn parse_tsv(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (entity, summary) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected `entity<TAB>summary`", i + 1))?;
            let (entity, summary) = (entity.trim(), summary.trim());
            if entity.is_empty() || summary.is_empty() {
                return Err(format!("line {}: empty entity or summary", i + 1));
            }
            entries.insert(entity.to_owned(), summary.to_owned());
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, entity: impl Into<String>, summary: impl Into<String>) {
        self.entries.insert(entity.into(), summary.into());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl KnowledgeSource for TableKnowledge {
    fn summary(&self, entity: &str) -> Option<String> {
        self.entries.get(entity.trim()).cloned()
    }
}

/// REST summary endpoint: `GET {base}/page/summary/{title}` returning JSON
/// with an `extract` field.
#[derive(Debug, Clone)]
pub struct HttpKnowledge {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpKnowledge {
    pub fn new(base: impl Into<String>, timeout: Duration) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build()?;
        Ok(Self { base: base.into().trim_end_matches('/').to_owned(), client })
    }
}

fn encode_title(entity: &str) -> String {
    let mut out = String::new();
    for b in entity.trim().replace(' ', "_").bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl KnowledgeSource for HttpKnowledge {
    fn summary(&self, entity: &str) -> Option<String> {
        let url = format!("{}/page/summary/{}", self.base, encode_title(entity));
        let resp = match self.client.get(&url).send() {
            Ok(r) if r.status().is_success() => r,
            Ok(r) => {
                log::debug!("knowledge lookup {entity}: status {}", r.status());
                return None;
            }
            Err(e) => {
                log::debug!("knowledge lookup {entity}: {e}");
                return None;
            }
        };
        let body: serde_json::Value = resp.json().ok()?;
        let text = body.get("extract")?.as_str()?.trim();
        (!text.is_empty()).then(|| text.to_owned())
    }
}

/// Where retrieved summaries go in the augmented news.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    /// ` (summary)` right after the first mention of each entity.
    #[default]
    Inline,
    /// All summaries ahead of the news text.
    Prepend,
}

/// The news text with entity summaries added. Entities without a summary,
/// or (inline mode) without a mention that does not overlap an earlier one,
/// are skipped.
pub fn augment_news(news: &str, entities: &[String], source: &dyn KnowledgeSource, mode: RetrievalMode) -> String {
    let found: Vec<(&str, String)> = entities
        .iter()
        .filter_map(|e| source.summary(e).map(|s| (e.as_str(), s)))
        .collect();
    match mode {
        RetrievalMode::Prepend => {
            if found.is_empty() {
                return news.to_owned();
            }
            let mut out = String::new();
            for (e, s) in &found {
                out.push_str(&format!("{e}: {s}\n"));
            }
            out.push_str(news);
            out
        }
        RetrievalMode::Inline => {
            // (insert position, span start, summary)
            let mut spans: Vec<(usize, usize, &str)> = Vec::new();
            for (e, s) in &found {
                let Some(start) = news.find(e) else { continue };
                let end = start + e.len();
                if spans.iter().any(|&(se, ss, _)| start < se && ss < end) {
                    continue;
                }
                spans.push((end, start, s.as_str()));
            }
            spans.sort_unstable_by_key(|&(end, _, _)| end);
            let mut out = String::with_capacity(news.len() + 64 * spans.len());
            let mut at = 0;
            for (end, _, s) in spans {
                out.push_str(&news[at..end]);
                out.push_str(&format!(" ({s})"));
                at = end;
            }
            out.push_str(&news[at..]);
            out
        }
    }
}
