//! Dataset loading and the train/validation/test split.

use super::PipelineError;
use crate::netgen::NewsArticle;
use crate::taxonomy::TaskKind;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// Twelve synthetic binary articles (6 real, 6 fake) with disjoint vocabulary.
pub const TOY_BINARY: &str = include_str!("../../assets/toy_binary.jsonl");
/// Twelve synthetic framing articles.
pub const TOY_FRAMING: &str = include_str!("../../assets/toy_framing.jsonl");
/// Summaries of the fictional entities in the toy articles.
pub const TOY_KNOWLEDGE: &str = include_str!("../../assets/knowledge.tsv");

/// Fewest articles a split accepts.
pub const MIN_ARTICLES: usize = 10;

pub fn parse_jsonl(text: &str, task: TaskKind) -> Result<Vec<NewsArticle>, PipelineError> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let a: NewsArticle = serde_json::from_str(line)
            .map_err(|e| PipelineError::Dataset(format!("line {}: {e}", i + 1)))?;
        if a.task != task {
            return Err(PipelineError::Dataset(format!("line {}: task {} but the config says {task}", i + 1, a.task)));
        }
        a.validate().map_err(|e| PipelineError::Dataset(format!("line {}: {e}", i + 1)))?;
        if !ids.insert(a.id.clone()) {
            return Err(PipelineError::Dataset(format!("line {}: duplicate id `{}`", i + 1, a.id)));
        }
        out.push(a);
    }
    Ok(out)
}

/// Raw dataset text for a path or `builtin:` name.
pub fn dataset_text(path: &str) -> Result<String, PipelineError> {
    match path {
        "builtin:toy-binary" => Ok(TOY_BINARY.to_owned()),
        "builtin:toy-framing" => Ok(TOY_FRAMING.to_owned()),
        p if p.starts_with("builtin:") => Err(PipelineError::Dataset(format!("unknown builtin dataset `{p}`"))),
        p => std::fs::read_to_string(p).map_err(|e| PipelineError::io(Path::new(p), e)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// Samples `min(n, max)` articles, shuffles them with `seed` and splits 70/20/10
/// by count: floor for train and validation, the remainder for test.
pub fn split_dataset(articles: &[NewsArticle], max: usize, seed: u64) -> Result<Split, PipelineError> {
    let take = articles.len().min(max);
    if take < MIN_ARTICLES {
        return Err(PipelineError::Dataset(format!("need at least {MIN_ARTICLES} articles, have {take}")));
    }
    let mut idx: Vec<usize> = (0..articles.len()).collect();
    idx.shuffle(&mut crate::seed::rng(seed));
    idx.truncate(take);
    let n_train = take * 7 / 10;
    let n_val = take * 2 / 10;
    let ids: Vec<String> = idx.iter().map(|&i| articles[i].id.clone()).collect();
    Ok(Split {
        train: ids[..n_train].to_vec(),
        val: ids[n_train..n_train + n_val].to_vec(),
        test: ids[n_train + n_val..].to_vec(),
    })
}
