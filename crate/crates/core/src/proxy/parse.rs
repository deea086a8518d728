//! Parsing of proxy-task answers.

use super::{Explanation, ProxyTaskKind};

/// Labels found in `raw` (first mentions first, capped per task) plus the
/// trimmed answer as reasoning.
pub fn parse_explanation(kind: ProxyTaskKind, target: usize, raw: &str) -> Explanation {
    let mut labels = kind.taxonomy().map(|t| t.scan(raw)).unwrap_or_default();
    labels.truncate(kind.label_cap());
    Explanation { target, labels, reasoning: raw.trim().to_owned(), raw: raw.to_owned() }
}

/// Entities from the first bracketed list in the answer, at most five.
pub fn parse_entities(raw: &str) -> Vec<String> {
    let Some(open) = raw.find('[') else {
        return Vec::new();
    };
    let Some(len) = raw[open + 1..].find(']') else {
        return Vec::new();
    };
    let mut out: Vec<String> = Vec::new();
    for item in raw[open + 1..open + 1 + len].split(',') {
        let e = item.trim().trim_matches(|c: char| c == '"' || c == '\'' || c.is_whitespace());
        if !e.is_empty() && !out.iter().any(|o| o == e) {
            out.push(e.to_owned());
        }
    }
    out.truncate(5);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentiment_caps_at_three() {
        let e = parse_explanation(ProxyTaskKind::Sentiment, 0, "  fear, anger, sadness and surprise  ");
        assert_eq!(e.labels, vec![2, 0, 4]);
        assert_eq!(e.reasoning, "fear, anger, sadness and surprise");
    }

    #[test]
    fn framing_longest_label_wins() {
        let e = parse_explanation(ProxyTaskKind::Framing, 0, "1. Legality, constitutionality and jurisprudence\n2. Political");
        assert_eq!(e.labels, vec![4, 12]);
    }

    #[test]
    fn stance_keeps_one() {
        let e = parse_explanation(ProxyTaskKind::Stance, 3, "It is opposed, not neutral.");
        assert_eq!(e.labels, vec![2]);
        assert_eq!(e.target, 3);
    }

    #[test]
    fn no_labels_is_fine() {
        let e = parse_explanation(ProxyTaskKind::Propaganda, 0, "I cannot tell.");
        assert!(e.labels.is_empty());
        assert_eq!(e.reasoning, "I cannot tell.");
    }

    #[test]
    fn entity_lists() {
        assert_eq!(parse_entities("Sure: [\"A B\", 'C', D ]"), vec!["A B", "C", "D"]);
        assert_eq!(parse_entities("['a','b','c','d','e','f']").len(), 5);
        assert!(parse_entities("no list").is_empty());
        assert!(parse_entities("[unterminated").is_empty());
        assert_eq!(parse_entities("[\"x\", \"x\", \"\"]"), vec!["x"]);
    }
}
