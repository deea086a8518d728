//! Reply-target scoring and candidate chain sampling.

use super::{InteractionNetwork, NetgenError};
use rand::Rng;

/// Shift added to every score before normalisation.
pub const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateChain {
    /// Comment indices from the news outward; the last one is the reply target.
    pub nodes: Vec<usize>,
    /// Unnormalised score of the target.
    pub score: f64,
}

fn scores(net: &InteractionNetwork, beta: f64) -> Vec<(usize, f64)> {
    let depth = net.depths();
    let width = net.child_counts();
    (1..net.len())
        .map(|v| (v, beta * depth[v] as f64 + (1.0 - beta) * width[v] as f64 + SCORE_EPS))
        .collect()
}

/// Sampling distribution over comment nodes: `beta * depth + (1 - beta) *
/// child_count + eps`, normalised.
pub fn candidate_distribution(net: &InteractionNetwork, beta: f64) -> Vec<(usize, f64)> {
    let s = scores(net, beta);
    let total: f64 = s.iter().map(|(_, x)| x).sum();
    s.into_iter().map(|(v, x)| (v, x / total)).collect()
}

/// Draws up to `k` distinct comment nodes proportionally to their scores and
/// returns the chain leading to each.
pub fn sample_candidate_chains<R: Rng + ?Sized>(
    net: &InteractionNetwork,
    beta: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<CandidateChain>, NetgenError> {
    if net.comment_count() == 0 {
        return Err(NetgenError::Precondition("no comment nodes to sample chains from".into()));
    }
    let mut pool = scores(net, beta);
    let mut out = Vec::with_capacity(k.min(pool.len()));
    while out.len() < k && !pool.is_empty() {
        let total: f64 = pool.iter().map(|(_, s)| s).sum();
        let mut x = rng.gen::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (i, (_, s)) in pool.iter().enumerate() {
            if x < *s {
                pick = i;
                break;
            }
            x -= s;
        }
        let (v, score) = pool.swap_remove(pick);
        out.push(CandidateChain { nodes: net.chain(v), score });
    }
    Ok(out)
}

/// Index of the best-scoring candidate (first one on ties).
pub(crate) fn highest_score(candidates: &[CandidateChain]) -> usize {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.score > candidates[best].score {
            best = i;
        }
    }
    best
}

/// First integer in `1..=n` in the answer, as a 0-based index.
pub fn parse_chain_selection(text: &str, n: usize) -> Option<usize> {
    let mut digits = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_ascii_digit() {
            digits.push(c);
            if chars.peek().is_some_and(char::is_ascii_digit) {
                continue;
            }
            if let Ok(v) = digits.parse::<usize>() {
                if (1..=n).contains(&v) {
                    return Some(v - 1);
                }
            }
            digits.clear();
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::tests::article;
    use crate::netgen::ParamSnapshot;

    fn snap() -> ParamSnapshot {
        ParamSnapshot { m: 0, alpha: 0.5, beta: 0.5, k: 3, seed: 0 }
    }

    fn net_with(parents: &[usize]) -> InteractionNetwork {
        let mut n = InteractionNetwork::new(article(), snap());
        for &p in parents {
            n.add_comment(p, format!("c{}", n.len()), None);
        }
        n
    }

    #[test]
    fn single_comment_single_chain() {
        let net = net_with(&[0]);
        let got = sample_candidate_chains(&net, 0.5, 3, &mut crate::seed::rng(0)).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].nodes, vec![1]);
    }

    #[test]
    fn empty_network_is_a_precondition_error() {
        let net = net_with(&[]);
        assert!(sample_candidate_chains(&net, 0.5, 3, &mut crate::seed::rng(0)).is_err());
    }

    #[test]
    fn depth_weighting_favours_deeper_nodes() {
        // root -> a(1) -> b(2); beta = 1 scores are depth + eps.
        let net = net_with(&[0, 1]);
        let dist = candidate_distribution(&net, 1.0);
        assert!(dist[1].1 > dist[0].1);
        // (2 + eps) / (3 + 2 eps)
        let expect = (2.0 + SCORE_EPS) / (3.0 + 2.0 * SCORE_EPS);
        assert!((dist[1].1 - expect).abs() < 1e-15);
        let mut rng = crate::seed::rng(1);
        let b_first = (0..2000)
            .filter(|_| sample_candidate_chains(&net, 1.0, 1, &mut rng).unwrap()[0].nodes == vec![1, 2])
            .count();
        assert!(b_first > 1000, "b drawn first {b_first}/2000");
    }

    #[test]
    fn width_weighting_favours_hubs() {
        // Hub 1 has two children; 2 and 3 are its leaves, 4 is another root child.
        let net = net_with(&[0, 1, 1, 0]);
        let dist = candidate_distribution(&net, 0.0);
        let max = dist.iter().cloned().fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        assert_eq!(max.0, 1);
        assert_eq!(dist.iter().filter(|(_, p)| *p == max.1).count(), 1);
    }

    #[test]
    fn draws_without_replacement() {
        let net = net_with(&[0, 0, 1, 2, 2]);
        let got = sample_candidate_chains(&net, 0.5, 10, &mut crate::seed::rng(3)).unwrap();
        assert_eq!(got.len(), 5);
        let mut leaves: Vec<usize> = got.iter().map(|c| *c.nodes.last().unwrap()).collect();
        leaves.sort_unstable();
        assert_eq!(leaves, vec![1, 2, 3, 4, 5]);
        assert_eq!(got.iter().find(|c| c.nodes.last() == Some(&4)).unwrap().nodes, vec![2, 4]);
    }

    #[test]
    fn parses_selection() {
        assert_eq!(parse_chain_selection("2", 3), Some(1));
        assert_eq!(parse_chain_selection("I pick Comment Chain 3 because of 1 thing", 3), Some(2));
        assert_eq!(parse_chain_selection("7", 3), None);
        assert_eq!(parse_chain_selection("12 then 2", 3), Some(1));
        assert_eq!(parse_chain_selection("none", 3), None);
    }
}
