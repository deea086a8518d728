//! LLM-guided merging of the seven experts.

use crate::gnn::PredictionOutput;
use crate::llm::{prediction_confidence, ChatRequest, Gateway, PromptClass, RequestError};
use crate::netgen::NewsArticle;
use crate::proxy::ProxyTaskKind;
use crate::taxonomy::{TaskKind, VERACITY};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use thiserror::Error;

/// Sampling temperature for merge and selection requests.
pub const ENSEMBLE_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpertSpec {
    pub id: u8,
    pub kind: ProxyTaskKind,
    /// Description sentence without its final period.
    pub description: &'static str,
}

pub static EXPERTS: [ExpertSpec; 7] = [
    ExpertSpec { id: 1, kind: ProxyTaskKind::Vanilla, description: "This expert is comprehensive" },
    ExpertSpec { id: 2, kind: ProxyTaskKind::Sentiment, description: "This expert focuses on the emotion of this news" },
    ExpertSpec { id: 3, kind: ProxyTaskKind::Framing, description: "This expert focuses on the framing of this news" },
    ExpertSpec {
        id: 4,
        kind: ProxyTaskKind::Propaganda,
        description: "This expert focuses on the propaganda tactics of this news",
    },
    ExpertSpec {
        id: 5,
        kind: ProxyTaskKind::Retrieval,
        description: "This expert focuses on the external knowledge of this news",
    },
    ExpertSpec {
        id: 6,
        kind: ProxyTaskKind::Stance,
        description: "This expert focuses on the stance of related comments on this news",
    },
    ExpertSpec {
        id: 7,
        kind: ProxyTaskKind::Response,
        description: "This expert focuses on the relation of related comments on this news",
    },
];

pub fn expert(id: u8) -> Option<&'static ExpertSpec> {
    EXPERTS.iter().find(|e| e.id == id)
}

pub fn expert_for(kind: ProxyTaskKind) -> &'static ExpertSpec {
    EXPERTS.iter().find(|e| e.kind == kind).expect("every proxy task has an expert")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Vanilla,
    Confidence,
    Selective,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Vanilla, Strategy::Confidence, Strategy::Selective];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::Confidence => "confidence",
            Strategy::Selective => "selective",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// One expert's prediction as shown to the merging LLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertReport {
    pub expert: u8,
    pub task: TaskKind,
    pub labels: Vec<usize>,
    /// Per taxonomy label: probability (binary) or absolute score (multi-label).
    pub confidence: Vec<f64>,
}

impl ExpertReport {
    pub fn from_prediction(expert: u8, p: &PredictionOutput) -> Self {
        Self { expert, task: p.task, labels: p.labels.clone(), confidence: p.confidence.clone() }
    }

    /// Label text, `none` for an empty multi-label prediction.
    pub fn verbalized(&self) -> String {
        if self.labels.is_empty() {
            "none".into()
        } else {
            self.task.taxonomy().verbalize(&self.labels)
        }
    }

    fn scores(&self) -> String {
        self.confidence.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>().join(", ")
    }

    /// Mean confidence in the labels this expert predicted.
    fn own_confidence(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().map(|&l| self.confidence.get(l).copied().unwrap_or(0.0)).sum::<f64>() / self.labels.len() as f64
    }
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid request: {0}")]
    Request(#[from] RequestError),
}

const QUESTION: &str = "Question: Based on the analysis of experts, please judge the final label of this news. \
Give the label in the form of \"[your answer]\", do not give any explanation.\nLabel:";

fn merge_prompt(article: &NewsArticle, reports: &[ExpertReport], with_scores: bool) -> Result<ChatRequest, EnsembleError> {
    if reports.is_empty() {
        return Err(EnsembleError::Precondition("no expert reports".into()));
    }
    let mut user = format!("News: {}\nSome experts give predictions about the news.\n", article.text);
    for r in reports {
        let spec = expert(r.expert).ok_or_else(|| EnsembleError::Precondition(format!("unknown expert {}", r.expert)))?;
        if r.task != article.task {
            return Err(EnsembleError::Precondition(format!("expert {} reports a {} task", r.expert, r.task)));
        }
        user.push_str(&format!(
            "Expert {}: {}. The expert predicts the label of this news is {}.",
            spec.id,
            spec.description,
            r.verbalized()
        ));
        if with_scores {
            user.push_str(&format!(" The confidence scores are {}.", r.scores()));
        }
        user.push('\n');
    }
    user.push_str(QUESTION);
    Ok(ChatRequest::new(PromptClass::EnsembleMerge, user)?
        .with_temperature(ENSEMBLE_TEMPERATURE)
        .with_max_tokens(32)
        .with_logprob(true))
}

/// Predictions only.
pub fn build_vanilla_prompt(article: &NewsArticle, reports: &[ExpertReport]) -> Result<ChatRequest, EnsembleError> {
    merge_prompt(article, reports, false)
}

/// Predictions plus each expert's confidence scores.
pub fn build_confidence_prompt(article: &NewsArticle, reports: &[ExpertReport]) -> Result<ChatRequest, EnsembleError> {
    merge_prompt(article, reports, true)
}

/// Asks which experts the news needs.
pub fn build_select_prompt(article: &NewsArticle, specs: &[ExpertSpec]) -> Result<ChatRequest, EnsembleError> {
    if specs.is_empty() {
        return Err(EnsembleError::Precondition("no experts to choose from".into()));
    }
    let mut user = format!("News: {}\n", article.text);
    for s in specs {
        user.push_str(&format!("Expert {}: {}.\n", s.id, s.description));
    }
    user.push_str(
        "To understand this news, which expert knowledge do you need? \
         Return a Python list, e.g. [expert 1, expert 2, expert 6].",
    );
    Ok(ChatRequest::new(PromptClass::ExpertSelect, user)?
        .with_temperature(ENSEMBLE_TEMPERATURE)
        .with_max_tokens(64))
}

fn integers(text: &str) -> Vec<u64> {
    let mut out = Vec::new();
    let mut cur: Option<u64> = None;
    for c in text.chars() {
        match c.to_digit(10) {
            Some(d) => cur = Some(cur.unwrap_or(0).saturating_mul(10).saturating_add(u64::from(d))),
            None => out.extend(cur.take()),
        }
    }
    out.extend(cur);
    out
}

/// Expert ids 1 to 7 named in the first bracketed list, or anywhere in the
/// text when there is no list. `None` when nothing valid is found.
pub fn parse_expert_selection(text: &str) -> Option<BTreeSet<u8>> {
    let scope = text
        .find('[')
        .and_then(|a| text[a..].find(']').map(|b| &text[a + 1..a + b]))
        .filter(|s| integers(s).iter().any(|n| (1..=7).contains(n)))
        .unwrap_or(text);
    let ids: BTreeSet<u8> = integers(scope).into_iter().filter(|n| (1..=7).contains(n)).map(|n| n as u8).collect();
    (!ids.is_empty()).then_some(ids)
}

fn says_none(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric()).any(|w| w.eq_ignore_ascii_case("none"))
}

/// Label(s) in the merge answer. Binary tasks take the first `real`/`fake`;
/// multi-label tasks take every taxonomy label mentioned, and an explicit
/// `none` means the empty set.
pub fn parse_final_label(text: &str, task: TaskKind) -> Option<Vec<usize>> {
    match task {
        TaskKind::Binary => VERACITY.scan(text).first().map(|&l| vec![l]),
        _ => {
            let mut found = task.taxonomy().scan(text);
            if found.is_empty() {
                return says_none(text).then(Vec::new);
            }
            found.sort_unstable();
            Some(found)
        }
    }
}

/// Majority vote over `reports`. Binary ties go to the label whose voters
/// are more confident on average (then the lower index). A multi-label
/// label is kept with more than half of the votes, or exactly half when its
/// supporters are at least as confident as its opponents.
pub fn majority_vote(reports: &[ExpertReport], task: TaskKind) -> Vec<usize> {
    let n = task.taxonomy().len();
    if task.is_multi_label() {
        return (0..n)
            .filter(|&l| {
                let (yes, no): (Vec<&ExpertReport>, Vec<&ExpertReport>) = reports.iter().partition(|r| r.labels.contains(&l));
                let conf = |rs: &[&ExpertReport]| -> f64 {
                    if rs.is_empty() {
                        0.0
                    } else {
                        rs.iter().map(|r| r.confidence.get(l).copied().unwrap_or(0.0)).sum::<f64>() / rs.len() as f64
                    }
                };
                match (2 * yes.len()).cmp(&reports.len()) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Equal => !yes.is_empty() && conf(&yes) >= conf(&no),
                    std::cmp::Ordering::Less => false,
                }
            })
            .collect();
    }
    let mut votes = vec![0usize; n];
    let mut conf = vec![0.0f64; n];
    for r in reports {
        if let Some(&l) = r.labels.first().filter(|&&l| l < n) {
            votes[l] += 1;
            conf[l] += r.own_confidence();
        }
    }
    let mut best = 0;
    for l in 1..n {
        let mean = |i: usize| if votes[i] == 0 { 0.0 } else { conf[i] / votes[i] as f64 };
        if votes[l] > votes[best] || (votes[l] == votes[best] && mean(l) > mean(best)) {
            best = l;
        }
    }
    vec![best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDecision {
    pub article_id: String,
    pub strategy: Strategy,
    pub consulted: Vec<u8>,
    pub labels: Vec<usize>,
    /// Probability of the answer's label token, when the provider reports it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// A fallback produced this decision.
    pub degraded: bool,
    #[serde(skip)]
    pub raw_answer: String,
    pub raw_answer_hash: String,
}

fn decision(
    article: &NewsArticle,
    strategy: Strategy,
    consulted: Vec<u8>,
    labels: Vec<usize>,
    confidence: Option<f64>,
    degraded: bool,
    raw_answer: String,
) -> FinalDecision {
    FinalDecision {
        article_id: article.id.clone(),
        strategy,
        consulted,
        labels,
        confidence,
        degraded,
        raw_answer_hash: hex::encode(Sha256::digest(raw_answer.as_bytes())),
        raw_answer,
    }
}

/// Merges the seven experts' reports for one article.
///
/// Unparseable answers and gateway failures fall back to a majority vote of
/// the consulted experts and mark the decision degraded.
pub fn run_ensemble(
    strategy: Strategy,
    article: &NewsArticle,
    reports: &[ExpertReport],
    gateway: &Gateway,
) -> Result<FinalDecision, EnsembleError> {
    let ids: BTreeSet<u8> = reports.iter().map(|r| r.expert).collect();
    if reports.len() != EXPERTS.len() || ids.len() != EXPERTS.len() || ids.iter().any(|&i| expert(i).is_none()) {
        return Err(EnsembleError::Precondition("need exactly one report from each of the 7 experts".into()));
    }
    let mut reports = reports.to_vec();
    reports.sort_by_key(|r| r.expert);
    let mut degraded = false;

    let consulted: Vec<ExpertReport> = match strategy {
        Strategy::Vanilla | Strategy::Confidence => reports,
        Strategy::Selective => {
            let req = build_select_prompt(article, &EXPERTS)?;
            let chosen = match gateway.complete(&req) {
                Ok(resp) => parse_expert_selection(&resp.text).or_else(|| {
                    log::warn!("article {}: unparseable expert selection {:?}; using all experts", article.id, resp.text);
                    None
                }),
                Err(e) => {
                    log::warn!("article {}: expert selection failed ({e}); using all experts", article.id);
                    None
                }
            };
            match chosen {
                Some(set) => reports.into_iter().filter(|r| set.contains(&r.expert)).collect(),
                None => {
                    degraded = true;
                    reports
                }
            }
        }
    };
    let ids: Vec<u8> = consulted.iter().map(|r| r.expert).collect();
    let req = match strategy {
        Strategy::Vanilla => build_vanilla_prompt(article, &consulted)?,
        Strategy::Confidence | Strategy::Selective => build_confidence_prompt(article, &consulted)?,
    };
    match gateway.complete(&req) {
        Ok(resp) => match parse_final_label(&resp.text, article.task) {
            Some(labels) => {
                let conf = prediction_confidence(&resp);
                Ok(decision(article, strategy, ids, labels, conf, degraded, resp.text))
            }
            None => {
                log::warn!("article {}: unparseable final label {:?}; majority vote", article.id, resp.text);
                Ok(decision(article, strategy, ids, majority_vote(&consulted, article.task), None, true, resp.text))
            }
        },
        Err(e) => {
            log::warn!("article {}: merge request failed ({e}); majority vote", article.id);
            Ok(decision(article, strategy, ids, majority_vote(&consulted, article.task), None, true, String::new()))
        }
    }
}

/// Writes one decision per line.
pub fn write_decisions<W: Write>(decisions: &[FinalDecision], mut w: W) -> std::io::Result<()> {
    for d in decisions {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_decisions<R: BufRead>(r: R) -> std::io::Result<Vec<FinalDecision>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
