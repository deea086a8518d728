//! Proxy-task prompt templates.

use super::{ProxyError, ProxyTaskKind};
use crate::llm::{ChatRequest, PromptClass};

/// What a proxy prompt is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyInput<'a> {
    News(&'a str),
    /// (parent text, child text).
    Pair(&'a str, &'a str),
}

const SENTIMENT_TASK: &str = "Task: Which emotions does the news contain? Please choose the three most likely ones: \
anger, disgust, fear, happiness, sadness, and surprise. Please provide your reasoning.";

const FRAMING_TASK: &str = "Task: Framing is a strategic device and a central concept in political communication \
for representing different salient aspects and perspectives to convey the latent meaning of an issue. Which \
framings does the news contain? Please choose the five most likely ones: Economic; Capacity and resources; \
Morality; Fairness and equality; Legality, constitutionality and jurisprudence; Policy prescription and \
evaluation; Crime and punishment; Security and defense; Health and safety; Quality of life; Cultural identity; \
Among public opinion; Political; External regulation and reputation. Please provide your reasoning.";

const PROPAGANDA_TASK: &str = "Task: Propaganda Tactics are methods used in propaganda to convince an audience to \
believe what the propagandist wants them to believe. Which propaganda techniques does the news contain? Please \
choose the five most likely ones: Conversation Killer; Whataboutism; Doubt; Straw Man; Red Herring; Loaded \
Language; Appeal to Fear-Prejudice; Guilt by Association; Flag Waving; False Dilemma-No Choice; Repetition; \
Appeal to Popularity; Appeal to Authority; Name Calling-Labeling; Slogans; Appeal to Hypocrisy; \
Exaggeration-Minimisation; Obfuscation-Vagueness-Confusion; Causal Oversimplification. Please provide your \
reasoning.";

const RETRIEVAL_TASK: &str = "Task: Identify five named entities within the news above that necessitate \
elucidation for the populace to understand the news comprehensively. Ensure a diverse selection of the entities. \
The answer should in the form of python list.";

const STANCE_TASK: &str = "Task: Determine the stance of sentence 2 on sentence 1. Is it supportive, neutral or \
opposed? Provide your reasoning.";

const RESPONSE_TASK: &str = "Task: Sentence 1 and Sentence 2 are two posts on social networks. Please judge \
whether the sentence 2 replies to the sentence 1. Answer yes or no and provide the reasoning.";

/// Builds the prompt for `kind`. News tasks take [`ProxyInput::News`], edge
/// tasks take [`ProxyInput::Pair`].
pub fn build_proxy_prompt(kind: ProxyTaskKind, input: ProxyInput<'_>) -> Result<ChatRequest, ProxyError> {
    let (class, user) = match (kind, input) {
        (ProxyTaskKind::Sentiment, ProxyInput::News(s)) => (PromptClass::Sentiment, news(s, SENTIMENT_TASK)),
        (ProxyTaskKind::Framing, ProxyInput::News(s)) => (PromptClass::Framing, news(s, FRAMING_TASK)),
        (ProxyTaskKind::Propaganda, ProxyInput::News(s)) => (PromptClass::Propaganda, news(s, PROPAGANDA_TASK)),
        (ProxyTaskKind::Retrieval, ProxyInput::News(s)) => (PromptClass::Retrieval, news(s, RETRIEVAL_TASK)),
        (ProxyTaskKind::Stance, ProxyInput::Pair(a, b)) => (
            PromptClass::Stance,
            format!("{STANCE_TASK}\nSentence 1: {a}\nSentence 2: {b}\nAnswer:"),
        ),
        (ProxyTaskKind::Response, ProxyInput::Pair(a, b)) => (
            PromptClass::Response,
            format!("Sentence 1: {a}\nSentence 2: {b}\n{RESPONSE_TASK}\nAnswer:"),
        ),
        (kind, input) => {
            return Err(ProxyError::Precondition(format!("{kind} prompt cannot take {input:?}")));
        }
    };
    Ok(ChatRequest::new(class, user)?)
}

fn news(s: &str, task: &str) -> String {
    format!("News: {s}\n{task}\nAnswer:")
}
