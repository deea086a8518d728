//! Metrics, calibration, graph-structure indicators and comment removal.

use crate::netgen::InteractionNetwork;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("graph is disconnected")]
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// Classes that occur in the gold or the predicted labels.
    pub per_class: Vec<ClassMetrics>,
    pub samples: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(tp: usize, fp: usize, fneg: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fneg);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Per-class, macro and micro F1 over label sets (a single-label task uses
/// one-element sets). Macro F1 averages the classes that appear in the gold
/// or the predicted labels; 0/0 counts as 0.
pub fn f1_scores(gold: &[Vec<usize>], pred: &[Vec<usize>], n_labels: usize) -> Result<MetricsReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::Precondition("no samples".into()));
    }
    if gold.len() != pred.len() {
        return Err(EvalError::Precondition(format!("{} gold vs {} predicted", gold.len(), pred.len())));
    }
    let mut tp = vec![0usize; n_labels];
    let mut fp = vec![0usize; n_labels];
    let mut fneg = vec![0usize; n_labels];
    let mut seen = vec![false; n_labels];
    for (g, p) in gold.iter().zip(pred) {
        for &l in g.iter().chain(p) {
            if l >= n_labels {
                return Err(EvalError::Precondition(format!("label {l} outside 0..{n_labels}")));
            }
            seen[l] = true;
        }
        for l in 0..n_labels {
            match (g.contains(&l), p.contains(&l)) {
                (true, true) => tp[l] += 1,
                (false, true) => fp[l] += 1,
                (true, false) => fneg[l] += 1,
                (false, false) => {}
            }
        }
    }
    let per_class: Vec<ClassMetrics> = (0..n_labels)
        .filter(|&l| seen[l])
        .map(|l| {
            let (precision, recall, f1) = f1(tp[l], fp[l], fneg[l]);
            ClassMetrics { label: l, precision, recall, f1, support: tp[l] + fneg[l] }
        })
        .collect();
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64
    };
    let (_, _, micro_f1) = f1(tp.iter().sum(), fp.iter().sum(), fneg.iter().sum());
    Ok(MetricsReport { macro_f1, micro_f1, per_class, samples: gold.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBins {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    /// Fraction of samples that carried a confidence.
    pub coverage: f64,
    pub covered: usize,
    pub total: usize,
}

impl CalibrationBins {
    /// Reliability table as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lower,upper,count,mean_confidence,accuracy")?;
        for b in &self.bins {
            writeln!(w, "{:.1},{:.1},{},{},{}", b.lower, b.upper, b.count, b.mean_confidence, b.accuracy)?;
        }
        Ok(())
    }
}

/// Index of the 0.1-wide bin on `[0.5, 1.0]`; 1.0 joins the last bin.
fn bin_of(conf: f64) -> usize {
    ((conf * 10.0).floor() as i64 - 5).clamp(0, 4) as usize
}

/// Expected calibration error over five bins on `[0.5, 1.0]`.
///
/// Samples with `None` confidence are left out of the bins and lower
/// `coverage`.
pub fn ece(samples: &[(Option<f64>, bool)]) -> Result<CalibrationBins, EvalError> {
    let mut count = [0usize; 5];
    let mut conf_sum = [0.0f64; 5];
    let mut hits = [0usize; 5];
    for &(c, correct) in samples {
        let Some(c) = c else { continue };
        if !(0.5..=1.0).contains(&c) {
            return Err(EvalError::Precondition(format!("confidence {c} outside [0.5, 1]")));
        }
        let b = bin_of(c);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(correct);
    }
    let covered: usize = count.iter().sum();
    if covered == 0 {
        return Err(EvalError::Precondition("no sample carries a confidence".into()));
    }
    let mut bins = Vec::with_capacity(5);
    let mut total_gap = 0.0;
    for b in 0..5 {
        let (mean_confidence, accuracy) = if count[b] == 0 {
            (0.0, 0.0)
        } else {
            (conf_sum[b] / count[b] as f64, hits[b] as f64 / count[b] as f64)
        };
        total_gap += count[b] as f64 * (accuracy - mean_confidence).abs();
        bins.push(CalibrationBin {
            lower: 0.5 + b as f64 / 10.0,
            upper: 0.6 + b as f64 / 10.0,
            count: count[b],
            mean_confidence,
            accuracy,
        });
    }
    Ok(CalibrationBins {
        bins,
        ece: total_gap / covered as f64,
        coverage: covered as f64 / samples.len() as f64,
        covered,
        total: samples.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub avg_edge_betweenness: f64,
    pub avg_shortest_path: f64,
    pub max_degree_ratio: f64,
    pub diameter: f64,
}

/// Structure indicators of an undirected graph given as adjacency lists.
///
/// Edge betweenness is the shortest-path centrality normalised by the number
/// of unordered node pairs, averaged over edges. A single node yields zeros.
pub fn graph_stats_adjacency(adj: &[Vec<usize>]) -> Result<GraphStats, EvalError> {
    let n = adj.len();
    if n == 0 {
        return Err(EvalError::Precondition("empty graph".into()));
    }
    let max_degree = adj.iter().map(Vec::len).max().unwrap_or(0);
    if n == 1 {
        return Ok(GraphStats { avg_edge_betweenness: 0.0, avg_shortest_path: 0.0, max_degree_ratio: 0.0, diameter: 0.0 });
    }
    // Brandes accumulation over edges, keyed by (min, max) endpoint.
    let mut edge_index = std::collections::HashMap::new();
    for (u, ns) in adj.iter().enumerate() {
        for &v in ns {
            if u < v {
                let next = edge_index.len();
                edge_index.entry((u, v)).or_insert(next);
            }
        }
    }
    let mut eb = vec![0.0f64; edge_index.len()];
    let mut dist_sum = 0usize;
    let mut diameter = 0usize;
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        let mut sigma = vec![0.0f64; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([s]);
        dist[s] = 0;
        sigma[s] = 1.0;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        if order.len() != n {
            return Err(EvalError::Disconnected);
        }
        dist_sum += dist.iter().sum::<usize>();
        diameter = diameter.max(*dist.iter().max().expect("n > 0"));
        let mut delta = vec![0.0f64; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                eb[edge_index[&(v.min(w), v.max(w))]] += c;
                delta[v] += c;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    // Every unordered pair was counted from both ends.
    let avg_edge_betweenness = if eb.is_empty() {
        0.0
    } else {
        eb.iter().map(|b| b / 2.0 / pairs).sum::<f64>() / eb.len() as f64
    };
    Ok(GraphStats {
        avg_edge_betweenness,
        avg_shortest_path: dist_sum as f64 / 2.0 / pairs,
        max_degree_ratio: max_degree as f64 / n as f64,
        diameter: diameter as f64,
    })
}

/// [`graph_stats_adjacency`] of the undirected interaction tree, root included.
pub fn graph_stats(net: &InteractionNetwork) -> Result<GraphStats, EvalError> {
    graph_stats_adjacency(&net.adjacency())
}

/// Field-wise mean of several networks' indicators.
pub fn dataset_stats(stats: &[GraphStats]) -> Result<GraphStats, EvalError> {
    if stats.is_empty() {
        return Err(EvalError::Precondition("no networks".into()));
    }
    let n = stats.len() as f64;
    let mean = |f: fn(&GraphStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    Ok(GraphStats {
        avg_edge_betweenness: mean(|s| s.avg_edge_betweenness),
        avg_shortest_path: mean(|s| s.avg_shortest_path),
        max_degree_ratio: mean(|s| s.max_degree_ratio),
        diameter: mean(|s| s.diameter),
    })
}

/// Removes `ceil((1 - keep) * m)` comments, newest first.
pub fn drop_comments(net: &InteractionNetwork, keep: f64) -> Result<InteractionNetwork, EvalError> {
    if !(0.0..=1.0).contains(&keep) {
        return Err(EvalError::Precondition(format!("keep fraction {keep} outside [0, 1]")));
    }
    let m = net.comment_count();
    // The tolerance absorbs representation error such as (1 - 0.7) * 10 = 3.0000000000000004.
    let removed = (((1.0 - keep) * m as f64) - 1e-9).ceil().max(0.0) as usize;
    Ok(net.truncated(m - removed.min(m)))
}

/// Runs `evaluate` on the networks after dropping comments at each keep fraction.
pub fn comment_drop_curve<R>(
    networks: &[InteractionNetwork],
    fractions: &[f64],
    mut evaluate: impl FnMut(&[InteractionNetwork]) -> R,
) -> Result<Vec<(f64, R)>, EvalError> {
    let mut out = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let reduced = networks.iter().map(|n| drop_comments(n, f)).collect::<Result<Vec<_>, _>>()?;
        out.push((f, evaluate(&reduced)));
    }
    Ok(out)
}
