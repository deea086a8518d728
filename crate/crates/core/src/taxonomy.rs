//! Label taxonomies and surface-text label matching.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

/// An ordered, named set of label texts.
#[derive(Debug, PartialEq, Eq)]
pub struct Taxonomy {
    pub name: &'static str,
    pub labels: &'static [&'static str],
}

pub static VERACITY: Taxonomy = Taxonomy {
    name: "veracity",
    labels: &["real", "fake"],
};

pub static SENTIMENT: Taxonomy = Taxonomy {
    name: "sentiment",
    labels: &["anger", "disgust", "fear", "happiness", "sadness", "surprise"],
};

pub static FRAMING: Taxonomy = Taxonomy {
    name: "framing",
    labels: &[
        "Economic",
        "Capacity and resources",
        "Morality",
        "Fairness and equality",
        "Legality, constitutionality and jurisprudence",
        "Policy prescription and evaluation",
        "Crime and punishment",
        "Security and defense",
        "Health and safety",
        "Quality of life",
        "Cultural identity",
        "Among public opinion",
        "Political",
        "External regulation and reputation",
    ],
};

pub static PROPAGANDA: Taxonomy = Taxonomy {
    name: "propaganda",
    labels: &[
        "Conversation Killer",
        "Whataboutism",
        "Doubt",
        "Straw Man",
        "Red Herring",
        "Loaded Language",
        "Appeal to Fear-Prejudice",
        "Guilt by Association",
        "Flag Waving",
        "False Dilemma-No Choice",
        "Repetition",
        "Appeal to Popularity",
        "Appeal to Authority",
        "Name Calling-Labeling",
        "Slogans",
        "Appeal to Hypocrisy",
        "Exaggeration-Minimisation",
        "Obfuscation-Vagueness-Confusion",
        "Causal Oversimplification",
    ],
};

pub static STANCE: Taxonomy = Taxonomy {
    name: "stance",
    labels: &["supportive", "neutral", "opposed"],
};

pub static RESPONSE: Taxonomy = Taxonomy {
    name: "response",
    labels: &["yes", "no"],
};

impl Taxonomy {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, idx: usize) -> Option<&'static str> {
        self.labels.get(idx).copied()
    }

    /// Stable content hash, recorded in checkpoints.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for l in self.labels {
            h.update([0u8]);
            h.update(l.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Comma-joined label texts, used when verbalizing predictions.
    pub fn verbalize(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter_map(|&i| self.label(i))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Case-insensitive, longest-match scan for label texts.
    ///
    /// A match must sit on word boundaries (no alphanumeric character directly
    /// before or after it). Labels are returned once each, ordered by first
    /// occurrence.
    pub fn scan(&self, text: &str) -> Vec<usize> {
        let hay: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        let needles: Vec<Vec<char>> = self
            .labels
            .iter()
            .map(|l| l.chars().flat_map(char::to_lowercase).collect())
            .collect();

        let mut found = Vec::new();
        let mut pos = 0;
        while pos < hay.len() {
            if pos > 0 && hay[pos - 1].is_alphanumeric() {
                pos += 1;
                continue;
            }
            let mut best: Option<(usize, usize)> = None;
            for (li, needle) in needles.iter().enumerate() {
                let end = pos + needle.len();
                if needle.is_empty() || end > hay.len() || hay[pos..end] != needle[..] {
                    continue;
                }
                if end < hay.len() && hay[end].is_alphanumeric() {
                    continue;
                }
                if best.is_none_or(|(_, len)| needle.len() > len) {
                    best = Some((li, needle.len()));
                }
            }
            match best {
                Some((li, len)) => {
                    if !found.contains(&li) {
                        found.push(li);
                    }
                    pos += len;
                }
                None => pos += 1,
            }
        }
        found
    }
}

/// The downstream classification task an article belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Fake news detection: exactly one of `real` / `fake`.
    Binary,
    /// Multi-label framing detection over the 14 media frames.
    Framing,
    /// Multi-label propaganda tactic detection over 19 tactics.
    Propaganda,
}

impl TaskKind {
    pub fn taxonomy(self) -> &'static Taxonomy {
        match self {
            TaskKind::Binary => &VERACITY,
            TaskKind::Framing => &FRAMING,
            TaskKind::Propaganda => &PROPAGANDA,
        }
    }

    pub fn is_multi_label(self) -> bool {
        !matches!(self, TaskKind::Binary)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Binary => "binary",
            TaskKind::Framing => "framing",
            TaskKind::Propaganda => "propaganda",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(TaskKind::Binary),
            "framing" => Ok(TaskKind::Framing),
            "propaganda" => Ok(TaskKind::Propaganda),
            other => Err(format!("unknown task kind `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_sizes() {
        assert_eq!(SENTIMENT.len(), 6);
        assert_eq!(FRAMING.len(), 14);
        assert_eq!(PROPAGANDA.len(), 19);
        assert_eq!(STANCE.len(), 3);
        assert_eq!(RESPONSE.len(), 2);
    }

    #[test]
    fn scan_respects_word_boundaries() {
        assert_eq!(FRAMING.scan("Politically speaking"), Vec::<usize>::new());
        assert_eq!(FRAMING.scan("Political; economic."), vec![12, 0]);
        assert_eq!(RESPONSE.scan("It is not a reply. No."), vec![1]);
    }

    #[test]
    fn scan_prefers_longest_match() {
        // "Appeal to Fear-Prejudice" must not be read as something shorter.
        let got = PROPAGANDA.scan("uses appeal to fear-prejudice and doubt");
        assert_eq!(got, vec![6, 2]);
    }

    #[test]
    fn scan_dedupes_in_first_occurrence_order() {
        assert_eq!(SENTIMENT.scan("Fear, anger, FEAR, surprise"), vec![2, 0, 5]);
    }

    #[test]
    fn every_label_scans_back_to_itself() {
        for tax in [&VERACITY, &SENTIMENT, &FRAMING, &PROPAGANDA, &STANCE, &RESPONSE] {
            for (i, l) in tax.labels.iter().enumerate() {
                assert_eq!(tax.scan(l), vec![i], "{}:{l}", tax.name);
            }
        }
    }
}
