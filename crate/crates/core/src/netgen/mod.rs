//! User-news interaction network generation.
//!
//! A network is a rooted tree: node 0 is the news article and every other
//! node is a synthetic comment replying to an earlier node. Each step of
//! [`build_network`] samples a user, then either comments on the news (with
//! probability `alpha`) or picks a comment chain to reply to.

mod chains;
mod prompts;

pub use chains::{candidate_distribution, parse_chain_selection, sample_candidate_chains, CandidateChain};
pub use prompts::{make_comment_prompt, make_reply_prompt, make_select_prompt};

use crate::llm::{Gateway, LlmError, RequestError};
use crate::persona::{AttributeSpace, UserProfile};
use crate::taxonomy::TaskKind;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub id: String,
    pub text: String,
    pub labels: Vec<usize>,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl NewsArticle {
    pub fn validate(&self) -> Result<(), NetgenError> {
        if self.text.trim().is_empty() {
            return Err(NetgenError::InvalidArticle(format!("article `{}` has empty text", self.id)));
        }
        let n = self.task.taxonomy().len();
        if let Some(bad) = self.labels.iter().find(|&&l| l >= n) {
            return Err(NetgenError::InvalidArticle(format!(
                "article `{}` has label {bad} outside the {} taxonomy",
                self.id, self.task
            )));
        }
        if self.task == TaskKind::Binary && self.labels.len() != 1 {
            return Err(NetgenError::InvalidArticle(format!(
                "binary article `{}` must carry exactly one label",
                self.id
            )));
        }
        Ok(())
    }
}

/// Generation controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Number of comments to generate.
    pub m: usize,
    /// Probability of commenting directly on the news.
    pub alpha: f64,
    /// Weight of depth (vs. child count) when scoring reply targets.
    pub beta: f64,
    /// Number of candidate chains offered to the user.
    pub k: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { m: 30, alpha: 0.5, beta: 0.5, k: 3 }
    }
}

impl GenParams {
    /// Shallow, hub-heavy trees.
    pub fn more() -> Self {
        Self { alpha: 0.8, beta: 0.05, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), NetgenError> {
        if self.m == 0 {
            return Err(NetgenError::InvalidParams("m must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(NetgenError::InvalidParams("k must be at least 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(NetgenError::InvalidParams(format!("{name}={v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Generation settings recorded alongside a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    News,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub idx: usize,
    pub kind: NodeKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<UserProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub child: usize,
    pub parent: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("network has {nodes} nodes but {edges} edges")]
    Count { nodes: usize, edges: usize },
    #[error("node at position {0} is mislabelled")]
    NodeIndex(usize),
    #[error("node 0 must be the news article and all others comments")]
    Kinds,
    #[error("edge {child}->{parent} does not point to an earlier node")]
    Edge { child: usize, parent: usize },
}

/// A rooted reply tree over one news article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionNetwork {
    pub article: NewsArticle,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub params: ParamSnapshot,
}

impl InteractionNetwork {
    /// A network holding only the news node.
    pub fn new(article: NewsArticle, params: ParamSnapshot) -> Self {
        let root = Node {
            idx: 0,
            kind: NodeKind::News,
            text: article.text.clone(),
            profile: None,
        };
        Self { article, nodes: vec![root], edges: Vec::new(), params }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn comment_count(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    /// Appends a comment replying to `parent` and returns its index.
    pub fn add_comment(&mut self, parent: usize, text: String, profile: Option<UserProfile>) -> usize {
        assert!(parent < self.nodes.len(), "parent {parent} does not exist");
        let idx = self.nodes.len();
        self.nodes.push(Node { idx, kind: NodeKind::Comment, text, profile });
        self.edges.push(Edge { child: idx, parent });
        idx
    }

    /// Parent of comment `v` (`None` for the root).
    pub fn parent(&self, v: usize) -> Option<usize> {
        if v == 0 {
            None
        } else {
            Some(self.edges[v - 1].parent)
        }
    }

    /// Distance from the root.
    pub fn depths(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.child] = d[e.parent] + 1;
        }
        d
    }

    pub fn child_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.nodes.len()];
        for e in &self.edges {
            c[e.parent] += 1;
        }
        c
    }

    /// Comment indices on the path from the root to `v`, excluding the root.
    pub fn chain(&self, v: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = v;
        while cur != 0 {
            path.push(cur);
            cur = self.edges[cur - 1].parent;
        }
        path.reverse();
        path
    }

    /// Undirected neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.child].push(e.parent);
            adj[e.parent].push(e.child);
        }
        adj
    }

    /// Checks the tree invariants: one root, `|V| = |E| + 1`, and every edge
    /// points from a node to an earlier one. Creation order makes this
    /// sufficient for connectivity.
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.nodes.len() != self.edges.len() + 1 {
            return Err(TreeError::Count { nodes: self.nodes.len(), edges: self.edges.len() });
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.idx != i {
                return Err(TreeError::NodeIndex(i));
            }
            let expect = if i == 0 { NodeKind::News } else { NodeKind::Comment };
            if n.kind != expect {
                return Err(TreeError::Kinds);
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.child != i + 1 || e.parent >= e.child {
                return Err(TreeError::Edge { child: e.child, parent: e.parent });
            }
        }
        Ok(())
    }

    /// The first `comments` comments (by creation order) and the news node.
    pub fn truncated(&self, comments: usize) -> Self {
        let keep = comments.min(self.comment_count());
        Self {
            article: self.article.clone(),
            nodes: self.nodes[..=keep].to_vec(),
            edges: self.edges[..keep].to_vec(),
            params: self.params,
        }
    }
}

#[derive(Debug, Error)]
pub enum NetgenError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("invalid article: {0}")]
    InvalidArticle(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid request: {0}")]
    Request(#[from] RequestError),
    #[error("generation stopped after {} comments: {source}", network.comment_count())]
    Partial {
        network: Box<InteractionNetwork>,
        #[source]
        source: LlmError,
    },
}

/// Sampling settings for generation prompts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSettings {
    pub temperature: f64,
    pub comment_max_tokens: u32,
    pub select_max_tokens: u32,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self { temperature: 0.6, comment_max_tokens: 96, select_max_tokens: 128 }
    }
}

/// Grows an interaction network of `params.m` comments around `article`.
///
/// All randomness flows from `seed`: the branch draws and candidate sampling
/// use one stream, and the user sampled at step `i` uses the derived stream
/// `seed::derive(seed, i)`, recorded as the profile's seed.
pub fn build_network(
    article: &NewsArticle,
    params: &GenParams,
    space: &AttributeSpace,
    gateway: &Gateway,
    seed: u64,
    settings: &GenSettings,
) -> Result<InteractionNetwork, NetgenError> {
    params.validate()?;
    article.validate()?;

    let snapshot = ParamSnapshot { m: params.m, alpha: params.alpha, beta: params.beta, k: params.k, seed };
    let mut net = InteractionNetwork::new(article.clone(), snapshot);
    let mut rng = crate::seed::rng(seed);

    for step in 1..=params.m {
        let profile_seed = crate::seed::derive(seed, step as u64);
        let profile = space.sample_seeded(profile_seed);
        let persona = space.verbalize(&profile);
        let p: f64 = rng.gen();

        let (request, parent) = if net.comment_count() == 0 || p <= params.alpha {
            (make_comment_prompt(article, &persona)?, 0)
        } else {
            let candidates = sample_candidate_chains(&net, params.beta, params.k, &mut rng)?;
            let chain_texts: Vec<Vec<&str>> = candidates
                .iter()
                .map(|c| c.nodes.iter().map(|&v| net.nodes[v].text.as_str()).collect())
                .collect();
            let select = make_select_prompt(article, &persona, &chain_texts)?
                .with_temperature(settings.temperature)
                .with_max_tokens(settings.select_max_tokens);
            let answer = gateway.complete(&select).map_err(|source| NetgenError::Partial {
                network: Box::new(net.clone()),
                source,
            })?;
            let chosen = match parse_chain_selection(&answer.text, candidates.len()) {
                Some(i) => i,
                None => {
                    let best = chains::highest_score(&candidates);
                    log::warn!(
                        "article {}: unparseable chain selection {:?}; using candidate {}",
                        article.id,
                        answer.text,
                        best + 1
                    );
                    best
                }
            };
            let target = &candidates[chosen];
            let texts: Vec<&str> = target.nodes.iter().map(|&v| net.nodes[v].text.as_str()).collect();
            let leaf = *target.nodes.last().expect("chains are non-empty");
            (make_reply_prompt(article, &persona, &texts)?, leaf)
        };

        let request = request
            .with_temperature(settings.temperature)
            .with_max_tokens(settings.comment_max_tokens);
        let out = gateway.complete(&request).map_err(|source| NetgenError::Partial {
            network: Box::new(net.clone()),
            source,
        })?;
        net.add_comment(parent, out.text.trim().to_owned(), Some(profile));
        debug_assert!(net.validate().is_ok());
    }
    Ok(net)
}
