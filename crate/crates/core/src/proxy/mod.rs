//! Explainable proxy tasks.
//!
//! Four tasks look at the news node (sentiment, framing, propaganda,
//! retrieval) and two look at each reply edge (stance, response). Their LLM
//! explanations are attached to the network and later embedded as extra node
//! features.

mod knowledge;
mod parse;
mod prompts;

pub use knowledge::{augment_news, FixtureKnowledge, HttpKnowledge, KnowledgeSource, NoKnowledge, RetrievalMode, TableKnowledge};
pub use parse::{parse_entities, parse_explanation};
pub use prompts::{build_proxy_prompt, ProxyInput};

use crate::llm::{Gateway, LlmError};
use crate::netgen::InteractionNetwork;
use crate::taxonomy::{Taxonomy, RESPONSE, SENTIMENT, STANCE, FRAMING, PROPAGANDA};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyTaskKind {
    /// No enhancement.
    Vanilla,
    Sentiment,
    Framing,
    Propaganda,
    Retrieval,
    Stance,
    Response,
}

impl ProxyTaskKind {
    pub const ALL: [ProxyTaskKind; 7] = [
        ProxyTaskKind::Vanilla,
        ProxyTaskKind::Sentiment,
        ProxyTaskKind::Framing,
        ProxyTaskKind::Propaganda,
        ProxyTaskKind::Retrieval,
        ProxyTaskKind::Stance,
        ProxyTaskKind::Response,
    ];

    /// Tasks that need LLM annotation.
    pub const ANNOTATED: [ProxyTaskKind; 6] = [
        ProxyTaskKind::Sentiment,
        ProxyTaskKind::Framing,
        ProxyTaskKind::Propaganda,
        ProxyTaskKind::Retrieval,
        ProxyTaskKind::Stance,
        ProxyTaskKind::Response,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyTaskKind::Vanilla => "vanilla",
            ProxyTaskKind::Sentiment => "sentiment",
            ProxyTaskKind::Framing => "framing",
            ProxyTaskKind::Propaganda => "propaganda",
            ProxyTaskKind::Retrieval => "retrieval",
            ProxyTaskKind::Stance => "stance",
            ProxyTaskKind::Response => "response",
        }
    }

    /// Whether the task explains reply edges rather than the news node.
    pub fn is_edge_task(self) -> bool {
        matches!(self, ProxyTaskKind::Stance | ProxyTaskKind::Response)
    }

    pub fn taxonomy(self) -> Option<&'static Taxonomy> {
        match self {
            ProxyTaskKind::Sentiment => Some(&SENTIMENT),
            ProxyTaskKind::Framing => Some(&FRAMING),
            ProxyTaskKind::Propaganda => Some(&PROPAGANDA),
            ProxyTaskKind::Stance => Some(&STANCE),
            ProxyTaskKind::Response => Some(&RESPONSE),
            ProxyTaskKind::Vanilla | ProxyTaskKind::Retrieval => None,
        }
    }

    /// Maximum number of labels kept from one explanation.
    pub fn label_cap(self) -> usize {
        match self {
            ProxyTaskKind::Sentiment => 3,
            ProxyTaskKind::Framing | ProxyTaskKind::Propaganda => 5,
            ProxyTaskKind::Stance | ProxyTaskKind::Response => 1,
            ProxyTaskKind::Vanilla | ProxyTaskKind::Retrieval => 0,
        }
    }
}

impl fmt::Display for ProxyTaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProxyTaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown proxy task `{s}`"))
    }
}

/// One parsed proxy-task answer attached to a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Node the explanation is attached to. Edge tasks use the child node.
    pub target: usize,
    pub labels: Vec<usize>,
    /// Text embedded as the node's explanation feature.
    pub reasoning: String,
    #[serde(default)]
    pub raw: String,
}

/// A network plus the explanations of one proxy task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedNetwork {
    #[serde(flatten)]
    pub network: InteractionNetwork,
    pub task: ProxyTaskKind,
    pub explanations: Vec<Explanation>,
}

impl AnnotatedNetwork {
    /// The vanilla expert's view: no explanations at all.
    pub fn vanilla(network: InteractionNetwork) -> Self {
        Self { network, task: ProxyTaskKind::Vanilla, explanations: Vec::new() }
    }

    /// Explanation text per node; empty where nothing is attached.
    pub fn node_explanations(&self) -> Vec<&str> {
        let mut out = vec![""; self.network.len()];
        for e in &self.explanations {
            if e.target < out.len() {
                out[e.target] = e.reasoning.as_str();
            }
        }
        out
    }

    /// Keeps the first `comments` comments and the explanations that target them.
    pub fn truncated(&self, comments: usize) -> Self {
        let network = self.network.truncated(comments);
        let n = network.len();
        Self {
            network,
            task: self.task,
            explanations: self.explanations.iter().filter(|e| e.target < n).cloned().collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid request: {0}")]
    Request(#[from] crate::llm::RequestError),
    #[error("annotation stopped after {} explanations: {source}", partial.explanations.len())]
    Partial {
        partial: Box<AnnotatedNetwork>,
        #[source]
        source: LlmError,
    },
}

/// Settings for proxy-task requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxySettings {
    pub temperature: f64,
    pub max_tokens: u32,
    pub retrieval_mode: RetrievalMode,
}

impl Default for ProxySettings {
    fn default() -> Self {
        Self { temperature: 0.6, max_tokens: 384, retrieval_mode: RetrievalMode::Inline }
    }
}

/// Asks the LLM for `kind`'s explanation(s) and attaches them.
///
/// News-level tasks annotate node 0 only; edge tasks annotate each comment
/// with the explanation of its (parent, comment) pair.
pub fn annotate_network(
    network: &InteractionNetwork,
    kind: ProxyTaskKind,
    gateway: &Gateway,
    knowledge: &dyn KnowledgeSource,
    settings: &ProxySettings,
) -> Result<AnnotatedNetwork, ProxyError> {
    if kind == ProxyTaskKind::Vanilla {
        return Err(ProxyError::Precondition("the vanilla expert takes no annotation".into()));
    }
    let mut out = AnnotatedNetwork { network: network.clone(), task: kind, explanations: Vec::new() };
    let ask = |input: ProxyInput<'_>, out: &AnnotatedNetwork| {
        let req = build_proxy_prompt(kind, input)?
            .with_temperature(settings.temperature)
            .with_max_tokens(settings.max_tokens);
        gateway.complete(&req).map_err(|source| ProxyError::Partial {
            partial: Box::new(out.clone()),
            source,
        })
    };

    let news = network.article.text.as_str();
    match kind {
        ProxyTaskKind::Retrieval => {
            let answer = ask(ProxyInput::News(news), &out)?;
            let entities = parse_entities(&answer.text);
            if entities.is_empty() {
                log::info!("article {}: no entity list in retrieval answer", network.article.id);
            }
            let augmented = augment_news(news, &entities, knowledge, settings.retrieval_mode);
            out.explanations.push(Explanation { target: 0, labels: Vec::new(), reasoning: augmented, raw: answer.text });
        }
        k if k.is_edge_task() => {
            for e in &network.edges {
                let parent = network.nodes[e.parent].text.as_str();
                let child = network.nodes[e.child].text.as_str();
                let answer = ask(ProxyInput::Pair(parent, child), &out)?;
                out.explanations.push(parse_explanation(kind, e.child, &answer.text));
            }
        }
        _ => {
            let answer = ask(ProxyInput::News(news), &out)?;
            out.explanations.push(parse_explanation(kind, 0, &answer.text));
        }
    }
    Ok(out)
}
