//! Deterministic scripted provider for offline runs and tests.
//!
//! Every answer is a pure function of `(seed, request)`: the request hash seeds
//! a private RNG, and a per-class handler emits text in the shape a real model
//! would be asked for (a short comment, a chain number, a label list, ...).

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError, PromptClass};
use crate::taxonomy::{Taxonomy, FRAMING, PROPAGANDA, SENTIMENT, STANCE};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// How the mock answers expert-merge prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeMode {
    /// Majority vote over the experts listed in the prompt.
    Majority,
    /// Repeat Expert 1's (first listed expert's) label.
    EchoFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockScript {
    pub seed: u64,
    pub merge: MergeMode,
    /// Whether the mock reports token probabilities when asked.
    pub logprobs: bool,
    overrides: BTreeMap<PromptClass, (String, Option<f64>)>,
}

impl MockScript {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            merge: MergeMode::Majority,
            logprobs: true,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_merge(mut self, merge: MergeMode) -> Self {
        self.merge = merge;
        self
    }

    pub fn without_logprobs(mut self) -> Self {
        self.logprobs = false;
        self
    }

    /// Answers every request of `class` with `text` (and `prob` when asked).
    pub fn with_fixed(mut self, class: PromptClass, text: impl Into<String>, prob: Option<f64>) -> Self {
        self.overrides.insert(class, (text.into(), prob));
        self
    }
}

pub struct MockProvider {
    script: MockScript,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }

    fn rng_for(&self, request: &ChatRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.script.seed.to_le_bytes());
        h.update(request.content_hash().as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    fn answer(&self, request: &ChatRequest) -> (String, Option<f64>) {
        if let Some((text, prob)) = self.script.overrides.get(&request.class) {
            return (text.clone(), *prob);
        }
        let mut rng = self.rng_for(request);
        let prompt = request.user.as_str();
        match request.class {
            PromptClass::Comment | PromptClass::Reply => (comment(prompt, &mut rng), None),
            PromptClass::ChainSelect => {
                let n = prompt.matches("Comment Chain ").count().max(1);
                let pick = rng.gen_range(1..=n);
                (format!("{pick}. That chain has the liveliest discussion."), None)
            }
            PromptClass::Sentiment => {
                let l = pick_labels(&SENTIMENT, 3, &mut rng);
                (
                    format!(
                        "Based on the content of the news, the three most likely emotions are {}, {}, and {}. \
                         The wording of the report drives these reactions.",
                        l[0], l[1], l[2]
                    ),
                    None,
                )
            }
            PromptClass::Framing => (numbered("framings", &pick_labels(&FRAMING, 5, &mut rng)), None),
            PromptClass::Propaganda => (
                numbered("propaganda techniques", &pick_labels(&PROPAGANDA, 5, &mut rng)),
                None,
            ),
            PromptClass::Retrieval => {
                let ents = entities(news_slot(prompt));
                let quoted: Vec<String> = ents.iter().map(|e| format!("\"{e}\"")).collect();
                (format!("[{}]", quoted.join(", ")), None)
            }
            PromptClass::Stance => {
                let s = STANCE.labels[rng.gen_range(0..STANCE.len())];
                (
                    format!("The stance of sentence 2 on sentence 1 is {s}. The second post reacts directly to the first one."),
                    None,
                )
            }
            PromptClass::Response => {
                let text = if rng.gen_bool(0.8) {
                    "Yes, sentence 2 replies to sentence 1. The two posts discuss the same story."
                } else {
                    "No, sentence 2 does not reply to sentence 1. The two posts discuss different points."
                };
                (text.to_owned(), None)
            }
            PromptClass::EnsembleMerge => self.merge_answer(prompt),
            PromptClass::ExpertSelect => {
                let mut ids: Vec<u32> = (1..=7).collect();
                ids.shuffle(&mut rng);
                let k = rng.gen_range(1..=4);
                let mut chosen = ids[..k].to_vec();
                chosen.sort_unstable();
                let list: Vec<String> = chosen.iter().map(|i| format!("expert {i}")).collect();
                (format!("[{}]", list.join(", ")), None)
            }
            PromptClass::Generic => {
                let head: Vec<&str> = prompt.split_whitespace().take(8).collect();
                (format!("Acknowledged: {}", head.join(" ")), None)
            }
        }
    }

    fn merge_answer(&self, prompt: &str) -> (String, Option<f64>) {
        let labels = expert_labels(prompt);
        if labels.is_empty() {
            return ("[unknown]".into(), Some(0.5));
        }
        if self.script.merge == MergeMode::EchoFirst {
            return (format!("[{}]", labels[0]), Some(1.0));
        }
        let n = labels.len() as f64;
        let binary = labels.iter().all(|l| l == "real" || l == "fake");
        if binary {
            let fake = labels.iter().filter(|l| *l == "fake").count();
            let real = labels.len() - fake;
            let winner = match fake.cmp(&real) {
                std::cmp::Ordering::Greater => "fake",
                std::cmp::Ordering::Less => "real",
                std::cmp::Ordering::Equal => labels[0].as_str(),
            };
            let share = fake.max(real) as f64 / n;
            return (format!("[{winner}]"), Some(share.max(0.5)));
        }

        let tax: &Taxonomy = {
            let f: usize = labels.iter().map(|l| FRAMING.scan(l).len()).sum();
            let p: usize = labels.iter().map(|l| PROPAGANDA.scan(l).len()).sum();
            if p > f { &PROPAGANDA } else { &FRAMING }
        };
        let mut counts = vec![0usize; tax.len()];
        let mut first_seen = vec![usize::MAX; tax.len()];
        for (e, l) in labels.iter().enumerate() {
            for li in tax.scan(l) {
                counts[li] += 1;
                first_seen[li] = first_seen[li].min(e);
            }
        }
        let mut chosen: Vec<usize> = (0..tax.len()).filter(|&i| 2 * counts[i] >= labels.len() && counts[i] > 0).collect();
        if chosen.is_empty() {
            if let Some(best) = (0..tax.len())
                .filter(|&i| counts[i] > 0)
                .max_by_key(|&i| (counts[i], std::cmp::Reverse(first_seen[i])))
            {
                chosen.push(best);
            }
        }
        if chosen.is_empty() {
            return ("[none]".into(), Some(0.5));
        }
        let share = counts[chosen[0]] as f64 / n;
        (format!("[{}]", tax.verbalize(&chosen)), Some(share.max(0.5)))
    }
}

impl ChatProvider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let (text, prob) = self.answer(request);
        let token_prob = if request.want_logprob && self.script.logprobs {
            Some(prob.unwrap_or(1.0))
        } else {
            None
        };
        Ok(ChatResponse {
            text,
            token_prob,
            provider: "mock".into(),
            latency_ms: 0,
        })
    }
}

fn pick_labels(tax: &Taxonomy, k: usize, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let mut idx: Vec<usize> = (0..tax.len()).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    idx.into_iter().map(|i| tax.labels[i]).collect()
}

fn numbered(what: &str, labels: &[&str]) -> String {
    let mut out = format!("The news contains the following {} likely {what}:", labels.len());
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("\n{}. {l}: the article stresses this dimension.", i + 1));
    }
    out
}

/// Text of the `News:` slot, up to the next template line.
fn news_slot(prompt: &str) -> &str {
    let Some(start) = prompt.find("News: ") else {
        return "";
    };
    let rest = &prompt[start + 6..];
    let end = ["\nTask:", "\nComment 1:", "\nComment Chain 1:", "\nSome experts", "\nExpert 1:"]
        .iter()
        .filter_map(|m| rest.find(m))
        .min()
        .unwrap_or(rest.len());
    &rest[..end]
}

const STOP: &[&str] = &[
    "The", "A", "An", "In", "On", "It", "This", "That", "After", "While", "But", "And", "As", "At", "For",
    "Some", "Many", "Officials", "According", "Yesterday", "Today", "We", "They", "I",
];

/// Runs of capitalised words, excluding common sentence openers.
fn entities(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut run: Vec<String> = Vec::new();
    let flush = |run: &mut Vec<String>, out: &mut Vec<String>| {
        if !run.is_empty() {
            let e = run.join(" ");
            if !out.contains(&e) {
                out.push(e);
            }
            run.clear();
        }
    };
    for raw in text.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let capital = word.chars().next().is_some_and(char::is_uppercase) && word.len() > 1;
        if capital && !(run.is_empty() && STOP.contains(&word)) {
            run.push(word.to_owned());
        } else {
            flush(&mut run, &mut out);
        }
        if raw.ends_with(['.', ',', ';', ':', '!', '?']) {
            flush(&mut run, &mut out);
        }
    }
    flush(&mut run, &mut out);
    out.truncate(5);
    out
}

const OPENERS: &[&str] = &[
    "Honestly,", "Wow,", "Hmm,", "Not convinced:", "Finally some coverage:", "Read this twice:",
];
const CLOSERS: &[&str] = &[
    "Who checked this?",
    "Makes me wonder what comes next.",
    "Sharing with my friends.",
    "We deserve better reporting.",
    "Sounds about right to me.",
    "I will wait for more details.",
];

/// A comment of at most 40 words echoing a few content words of the thread.
fn comment(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let leaning = if prompt.contains("you are a Democrat") {
        "As a Democrat"
    } else if prompt.contains("you are a Republican") {
        "As a Republican"
    } else {
        "As a reader"
    };
    let mut source = news_slot(prompt).to_owned();
    if let Some(last) = prompt.rfind("\nComment ") {
        source.push(' ');
        source.push_str(&prompt[last..]);
    }
    let pool: Vec<String> = source
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| w.len() > 3)
        .collect();
    let mut echo: Vec<String> = Vec::new();
    if !pool.is_empty() {
        for _ in 0..rng.gen_range(3..=6) {
            echo.push(pool[rng.gen_range(0..pool.len())].clone());
        }
    }
    let text = format!(
        "{} {leaning}, I keep thinking about {}. {}",
        OPENERS[rng.gen_range(0..OPENERS.len())],
        if echo.is_empty() { "this".to_owned() } else { echo.join(" ") },
        CLOSERS[rng.gen_range(0..CLOSERS.len())],
    );
    text.split_whitespace().take(40).collect::<Vec<_>>().join(" ")
}

/// Labels from "Expert i: ... The expert predicts the label of this news is X." lines.
fn expert_labels(prompt: &str) -> Vec<String> {
    const MARK: &str = "The expert predicts the label of this news is ";
    prompt
        .lines()
        .filter(|l| l.starts_with("Expert "))
        .filter_map(|l| {
            let start = l.find(MARK)? + MARK.len();
            let rest = &l[start..];
            let end = rest.find(". The confidence scores are").unwrap_or(rest.len());
            Some(rest[..end].trim_end_matches('.').to_owned())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask(script: MockScript, class: PromptClass, text: &str) -> ChatResponse {
        let req = ChatRequest::new(class, text).unwrap().with_logprob(true);
        MockProvider::new(script).send(&req).unwrap()
    }

    #[test]
    fn identical_requests_identical_bytes() {
        let a = ask(MockScript::new(7), PromptClass::Comment, "News: x y z\nTask: go");
        let b = ask(MockScript::new(7), PromptClass::Comment, "News: x y z\nTask: go");
        assert_eq!(a, b);
        let c = ask(MockScript::new(8), PromptClass::Comment, "News: x y z\nTask: go");
        assert_eq!(c.provider, "mock");
    }

    #[test]
    fn comments_stay_within_forty_words() {
        let long = format!("News: {}\nTask: Please comment", "word ".repeat(500));
        for s in 0..50 {
            let r = ask(MockScript::new(s), PromptClass::Comment, &long);
            assert!(r.text.split_whitespace().count() <= 40);
        }
    }

    #[test]
    fn fixed_override_passthrough() {
        let s = MockScript::new(1).with_fixed(PromptClass::EnsembleMerge, "[fake]", Some(0.9));
        let r = ask(s, PromptClass::EnsembleMerge, "anything");
        assert_eq!(r.text, "[fake]");
        assert_eq!(r.token_prob, Some(0.9));
    }

    #[test]
    fn no_logprobs_when_unsupported() {
        let r = ask(MockScript::new(1).without_logprobs(), PromptClass::EnsembleMerge, "Expert 1: d. The expert predicts the label of this news is fake.");
        assert_eq!(r.token_prob, None);
    }

    #[test]
    fn majority_merge() {
        let prompt = "News: n\nSome experts give predictions about the news.\n\
            Expert 1: a. The expert predicts the label of this news is real.\n\
            Expert 2: b. The expert predicts the label of this news is fake.\n\
            Expert 3: c. The expert predicts the label of this news is fake. The confidence scores are 0.100, 0.900.\n\
            Label:";
        let r = ask(MockScript::new(1), PromptClass::EnsembleMerge, prompt);
        assert_eq!(r.text, "[fake]");
        assert!((r.token_prob.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let echo = ask(MockScript::new(1).with_merge(MergeMode::EchoFirst), PromptClass::EnsembleMerge, prompt);
        assert_eq!(echo.text, "[real]");
    }

    #[test]
    fn entity_extraction_merges_capitalised_runs() {
        let e = entities("It is said that Senator Chuck Schumer visited Washington, then Ohio.");
        assert_eq!(e, vec!["Senator Chuck Schumer", "Washington", "Ohio"]);
    }
}
