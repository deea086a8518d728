//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use misinfo_core::ensemble::{build_confidence_prompt, build_select_prompt, build_vanilla_prompt, ExpertReport, EXPERTS};
use misinfo_core::netgen::{make_comment_prompt, make_reply_prompt, make_select_prompt};
use misinfo_core::netgen::NewsArticle;
use misinfo_core::persona::{AttributeSpace, UserProfile};
use misinfo_core::proxy::{build_proxy_prompt, ProxyInput, ProxyTaskKind};
use misinfo_core::taxonomy::TaskKind;
use std::path::PathBuf;

pub const NEWS: &str = "Lake Harlow council approves a new water treatment plant after a public hearing.";

pub fn article() -> NewsArticle {
    NewsArticle { id: "g1".into(), text: NEWS.into(), labels: vec![0], task: TaskKind::Binary, source: None }
}

/// female, 18 to 29, Hispanic, college grad, middle income, Republican,
/// probably registered.
pub fn persona() -> String {
    AttributeSpace::canonical().verbalize(&UserProfile { choices: vec![1, 1, 2, 0, 1, 0, 1], seed: 0 })
}

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    // Files end with one newline that is not part of the prompt.
    text.strip_suffix('\n').unwrap_or(&text).to_owned()
}

fn reports() -> Vec<ExpertReport> {
    let fake = [true, false, true, true, false, true, true];
    let p_fake = [0.912, 0.347, 0.75, 0.9, 0.4, 0.55, 1.0];
    (0..7)
        .map(|i| ExpertReport {
            expert: i as u8 + 1,
            task: TaskKind::Binary,
            labels: vec![usize::from(fake[i])],
            confidence: vec![1.0 - p_fake[i], p_fake[i]],
        })
        .collect()
}

/// (name, built prompt, hand-written expected prompt).
pub fn golden_cases() -> Vec<(&'static str, String, String)> {
    let a = article();
    let u = persona();
    let chain = ["Good news for the town.", "Finally, clean water for everyone."];
    let reply = "Who is paying for this?";
    let mut out = vec![
        ("persona", u.clone()),
        ("comment", make_comment_prompt(&a, &u).unwrap().user),
        ("reply", make_reply_prompt(&a, &u, &chain).unwrap().user),
        ("select", make_select_prompt(&a, &u, &[vec![reply], chain.to_vec()]).unwrap().user),
    ];
    for (name, kind) in [
        ("sentiment", ProxyTaskKind::Sentiment),
        ("framing", ProxyTaskKind::Framing),
        ("propaganda", ProxyTaskKind::Propaganda),
        ("retrieval", ProxyTaskKind::Retrieval),
    ] {
        out.push((name, build_proxy_prompt(kind, ProxyInput::News(NEWS)).unwrap().user));
    }
    for (name, kind) in [("stance", ProxyTaskKind::Stance), ("response", ProxyTaskKind::Response)] {
        out.push((name, build_proxy_prompt(kind, ProxyInput::Pair(NEWS, reply)).unwrap().user));
    }
    out.push(("ensemble_vanilla", build_vanilla_prompt(&a, &reports()).unwrap().user));
    out.push(("ensemble_confidence", build_confidence_prompt(&a, &reports()).unwrap().user));
    out.push(("ensemble_selective", build_select_prompt(&a, &EXPERTS).unwrap().user));
    out.into_iter().map(|(n, built)| (n, built, golden(n))).collect()
}

/// First differing byte offset, for failure messages.
pub fn first_diff(a: &str, b: &str) -> Option<usize> {
    a.bytes().zip(b.bytes()).position(|(x, y)| x != y).or((a.len() != b.len()).then(|| a.len().min(b.len())))
}

use misinfo_core::llm::{Gateway, MockScript};
use misinfo_core::netgen::{build_network, GenParams, GenSettings, InteractionNetwork, NodeKind};

pub fn mock_network(params: GenParams, seed: u64) -> InteractionNetwork {
    let gateway = Gateway::mock(MockScript::new(seed));
    build_network(&article(), &params, &AttributeSpace::canonical(), &gateway, seed, &GenSettings::default()).unwrap()
}

/// Checks the tree laws without trusting `InteractionNetwork::validate`.
pub fn tree_law_violation(net: &InteractionNetwork, m: usize) -> Option<String> {
    let n = net.nodes.len();
    if n != m + 1 {
        return Some(format!("{n} nodes for m={m}"));
    }
    if n != net.edges.len() + 1 {
        return Some(format!("{n} nodes, {} edges", net.edges.len()));
    }
    if net.nodes[0].kind != NodeKind::News || net.nodes[0].text != net.article.text {
        return Some("root is not the news".into());
    }
    if net.nodes[1..].iter().any(|v| v.kind != NodeKind::Comment) {
        return Some("non-root node that is not a comment".into());
    }
    let adj = net.adjacency();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    (!seen.iter().all(|&s| s)).then(|| "disconnected".into())
}

pub fn diameter(net: &InteractionNetwork) -> usize {
    let adj = net.adjacency();
    (0..adj.len())
        .map(|s| {
            let mut dist = vec![usize::MAX; adj.len()];
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            dist.into_iter().max().unwrap()
        })
        .max()
        .unwrap()
}

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

/// A received HTTP request: method, path and body.
#[derive(Debug, Clone)]
pub struct Received {
    pub method: String,
    pub path: String,
    pub body: String,
}

/// Serves `handler` on a loopback port until the process exits; returns the
/// base URL. Every response closes its connection.
pub fn serve(handler: impl Fn(&Received) -> (u16, String) + Send + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            if reader.read_line(&mut line).is_err() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let method = parts.next().unwrap_or_default().to_owned();
            let path = parts.next().unwrap_or_default().to_owned();
            let mut len = 0usize;
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0u8; len];
            let _ = reader.read_exact(&mut body);
            let req = Received { method, path, body: String::from_utf8_lossy(&body).into_owned() };
            let (status, reply) = handler(&req);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    format!("http://{addr}")
}

/// Brute-force indicators of a connected undirected graph: Floyd-Warshall
/// distances, and edge betweenness by enumerating every shortest path of
/// every unordered pair. Returns (avg edge betweenness, avg shortest path,
/// max degree ratio, diameter).
pub fn brute_stats(n: usize, edges: &[(usize, usize)]) -> [f64; 4] {
    if n == 1 {
        return [0.0; 4];
    }
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    let mut adj = vec![Vec::new(); n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        d[a][b] = 1;
        d[b][a] = 1;
        adj[a].push(b);
        adj[b].push(a);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    fn paths(v: usize, t: usize, d: &[Vec<usize>], adj: &[Vec<usize>], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if v == t {
            out.push(cur.clone());
            return;
        }
        for &w in &adj[v] {
            if d[w][t] + 1 == d[v][t] {
                cur.push(w);
                paths(w, t, d, adj, cur, out);
                cur.pop();
            }
        }
    }
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut eb: std::collections::BTreeMap<(usize, usize), f64> = edges.iter().map(|&(a, b)| (key(a, b), 0.0)).collect();
    let pairs = (n * (n - 1) / 2) as f64;
    let mut dist_total = 0.0;
    let mut diam = 0usize;
    for s in 0..n {
        for t in s + 1..n {
            dist_total += d[s][t] as f64;
            diam = diam.max(d[s][t]);
            let mut all = Vec::new();
            paths(s, t, &d, &adj, &mut vec![s], &mut all);
            for p in &all {
                for w in p.windows(2) {
                    *eb.get_mut(&key(w[0], w[1])).unwrap() += 1.0 / all.len() as f64;
                }
            }
        }
    }
    let max_deg = adj.iter().map(Vec::len).max().unwrap() as f64;
    [
        eb.values().map(|b| b / pairs).sum::<f64>() / eb.len() as f64,
        dist_total / pairs,
        max_deg / n as f64,
        diam as f64,
    ]
}

/// The labelled tree on `n = seq.len() + 2` nodes encoded by a Prüfer sequence.
pub fn prufer_tree(seq: &[usize]) -> Vec<(usize, usize)> {
    let n = seq.len() + 2;
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Every labelled tree on `n >= 2` nodes.
pub fn all_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    let len = n - 2;
    let total = n.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let seq: Vec<usize> = (0..len)
                .map(|_| {
                    let v = code % n;
                    code /= n;
                    v
                })
                .collect();
            prufer_tree(&seq)
        })
        .collect()
}

/// `-ln(e^{z_g} / sum_j e^{z_j})`, term by term.
pub fn direct_ce(logits: &[f64], gold: usize) -> f64 {
    let denom: f64 = logits.iter().map(|z| z.exp()).sum();
    -(logits[gold].exp() / denom).ln()
}

/// `ln(1 + sum_{i in P} e^{-s_i}) + ln(1 + sum_{j not in P} e^{s_j})`, term by term.
pub fn direct_zlpr(scores: &[f64], positives: &[usize]) -> f64 {
    let pos: f64 = positives.iter().map(|&i| (-scores[i]).exp()).sum();
    let neg: f64 = (0..scores.len()).filter(|i| !positives.contains(i)).map(|j| scores[j].exp()).sum();
    (1.0 + pos).ln() + (1.0 + neg).ln()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// A random labelled tree on `n` nodes with random features of width `2d`.
pub fn random_graph<R: rand::Rng>(rng: &mut R, n: usize, d: usize, labels: Vec<usize>) -> misinfo_core::encode::GraphInput {
    let edges = (1..n).map(|c| (c, rng.gen_range(0..c))).collect();
    let x = ndarray::Array2::from_shape_fn((n, 2 * d), |_| rng.gen_range(-1.0..1.0));
    misinfo_core::encode::GraphInput { id: format!("g{n}"), x, edges, labels }
}

/// Calibrated synthetic stream: confidence uniform on [0.5, 1], correct with
/// that probability.
pub fn calibrated_stream(n: usize, seed: u64) -> Vec<(Option<f64>, bool)> {
    use rand::Rng;
    let mut rng = misinfo_core::seed::rng(seed);
    (0..n)
        .map(|_| {
            let c: f64 = rng.gen_range(0.5..=1.0);
            (Some(c), rng.gen_bool(c))
        })
        .collect()
}
