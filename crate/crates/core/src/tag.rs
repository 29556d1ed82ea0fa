//! Text-attributed graphs, random-walk-with-restart ego-subgraph sampling and
//! random-walk positional encodings.
//!
//! On-disk format (UTF-8, tab separated):
//!
//! ```text
//! 3
//! #classes	theory	systems
//! 0	1	A title	An abstract
//! 1	-	Another title
//! 2	0	Third node
//! 0	1
//! 1	2
//! ```
//!
//! The first non-comment line is the node count. Exactly that many node lines
//! follow (`id`, label or `-`, raw text; the raw text keeps any further tabs).
//! Every remaining line is an undirected edge `u<TAB>v`. Lines starting with `#`
//! are comments, except `#classes` which carries the class names.
#![allow(clippy::tabs_in_doc_comments)]

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::TextEncoder;

/// A graph whose nodes carry free text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextAttributedGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    pub raw_text: Vec<String>,
    pub features: Option<Array2<f64>>,
    pub labels: Option<Vec<Option<usize>>>,
    pub class_names: Option<Vec<String>>,
}

impl TextAttributedGraph {
    /// Builds a graph, dropping self-loops and duplicate undirected edges.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>, raw_text: Vec<String>) -> Result<Self> {
        if raw_text.len() != num_nodes {
            return Err(Error::Validation(format!(
                "expected {num_nodes} node texts, got {}",
                raw_text.len()
            )));
        }
        let mut normalized = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) references a node outside 0..{num_nodes}"
                )));
            }
            if u != v {
                normalized.push((u.min(v), u.max(v)));
            }
        }
        normalized.sort_unstable();
        normalized.dedup();

        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(u, v) in &normalized {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges: normalized,
            adjacency,
            raw_text,
            features: None,
            labels: None,
            class_names: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Option<usize>>, class_names: Option<Vec<String>>) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::Validation(format!(
                "expected {} labels, got {}",
                self.num_nodes,
                labels.len()
            )));
        }
        if let Some(names) = &class_names {
            if let Some(bad) = labels.iter().flatten().find(|&&y| y >= names.len()) {
                return Err(Error::Validation(format!(
                    "label {bad} has no class name ({} classes declared)",
                    names.len()
                )));
            }
        }
        self.labels = Some(labels);
        self.class_names = class_names;
        Ok(self)
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes {
            return Err(Error::shape("features", format!("{} rows", self.num_nodes), features.nrows()));
        }
        self.features = Some(features);
        Ok(self)
    }

    /// Fills node features with the text encoder's embedding of each node's raw text.
    pub fn encode_features(&mut self, encoder: &dyn TextEncoder) -> Result<()> {
        let dim = encoder.dim();
        let mut features = Array2::zeros((self.num_nodes, dim));
        for (i, text) in self.raw_text.iter().enumerate() {
            let emb = encoder.encode(text)?;
            features.row_mut(i).assign(&ndarray::ArrayView1::from(&emb.values));
        }
        self.features = Some(features);
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Undirected edges as `(min, max)` pairs in sorted order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Node ids carrying a label, grouped by class.
    pub fn nodes_by_class(&self) -> Vec<Vec<usize>> {
        let Some(labels) = &self.labels else {
            return Vec::new();
        };
        let classes = self
            .class_names
            .as_ref()
            .map(|c| c.len())
            .unwrap_or_else(|| labels.iter().flatten().max().map_or(0, |m| m + 1));
        let mut out = vec![Vec::new(); classes];
        for (v, y) in labels.iter().enumerate() {
            if let Some(y) = y {
                out[*y].push(v);
            }
        }
        out
    }

    /// Parses the edge-list-with-text format. `origin` only labels errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

        let mut class_names: Option<Vec<String>> = None;

        let (no, header) = next_content(&mut lines, &mut class_names)
            .ok_or_else(|| perr(1, "missing node-count header".into()))?;
        let num_nodes: usize = header
            .trim()
            .parse()
            .map_err(|_| perr(no, format!("invalid node count `{header}`")))?;

        let mut raw_text: Vec<Option<String>> = vec![None; num_nodes];
        let mut labels = vec![None; num_nodes];
        for _ in 0..num_nodes {
            let (no, line) = next_content(&mut lines, &mut class_names)
                .ok_or_else(|| perr(no, format!("expected {num_nodes} node lines")))?;
            let mut parts = line.splitn(3, '\t');
            let (id, label, text) = match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(label), Some(text)) => (id, label, text),
                _ => return Err(perr(no, "node line needs `id<TAB>label<TAB>text`".into())),
            };
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| perr(no, format!("invalid node id `{id}`")))?;
            if id >= num_nodes {
                return Err(Error::Validation(format!(
                    "line {no}: node id {id} outside 0..{num_nodes}"
                )));
            }
            if raw_text[id].is_some() {
                return Err(Error::Validation(format!("line {no}: node {id} declared twice")));
            }
            labels[id] = match label.trim() {
                "-" => None,
                l => Some(
                    l.parse::<usize>()
                        .map_err(|_| perr(no, format!("invalid label `{l}`")))?,
                ),
            };
            raw_text[id] = Some(text.to_string());
        }
        let raw_text: Vec<String> = raw_text.into_iter().map(Option::unwrap_or_default).collect();

        let mut edges = Vec::new();
        while let Some((no, line)) = next_content(&mut lines, &mut class_names) {
            let mut parts = line.split('\t');
            let (u, v) = match (parts.next(), parts.next(), parts.next()) {
                (Some(u), Some(v), None) => (u, v),
                _ => return Err(perr(no, "edge line needs `u<TAB>v`".into())),
            };
            let parse_id = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| perr(no, format!("invalid node id `{s}`")))
            };
            let (u, v) = (parse_id(u)?, parse_id(v)?);
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Validation(format!(
                    "line {no}: edge ({u}, {v}) references a node outside 0..{num_nodes}"
                )));
            }
            edges.push((u, v));
        }

        let graph = Self::new(num_nodes, edges, raw_text)?;
        if labels.iter().any(Option::is_some) || class_names.is_some() {
            graph.with_labels(labels, class_names)
        } else {
            Ok(graph)
        }
    }

    /// Serializes to the edge-list-with-text format; `parse` inverts it.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.num_nodes);
        if let Some(names) = &self.class_names {
            out.push_str("#classes");
            for n in names {
                out.push('\t');
                out.push_str(n);
            }
            out.push('\n');
        }
        for (i, text) in self.raw_text.iter().enumerate() {
            let label = self
                .labels
                .as_ref()
                .and_then(|l| l[i])
                .map_or_else(|| "-".to_string(), |y| y.to_string());
            out.push_str(&format!("{i}\t{label}\t{text}\n"));
        }
        for (u, v) in &self.edges {
            out.push_str(&format!("{u}\t{v}\n"));
        }
        out
    }
}

fn next_content<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    class_names: &mut Option<Vec<String>>,
) -> Option<(usize, &'a str)> {
    for (no, line) in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("#classes") {
            *class_names = Some(
                rest.split('\t')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
            );
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        return Some((no, line));
    }
    None
}

/// Reads and normalizes a graph file.
pub fn load_graph(path: impl AsRef<Path>) -> Result<TextAttributedGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TextAttributedGraph::parse(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub restart_prob: f64,
    pub node_budget: usize,
    pub max_steps: usize,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            restart_prob: 0.5,
            node_budget: 16,
            max_steps: 1000,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.restart_prob > 0.0 && self.restart_prob < 1.0) {
            return Err(Error::Validation(format!(
                "restart_prob must lie in (0,1), got {}",
                self.restart_prob
            )));
        }
        if self.node_budget == 0 {
            return Err(Error::Validation("node_budget must be at least 1".into()));
        }
        if self.max_steps < self.node_budget {
            return Err(Error::Validation(format!(
                "max_steps ({}) must be >= node_budget ({})",
                self.max_steps, self.node_budget
            )));
        }
        Ok(())
    }
}

/// Induced subgraph rooted at a seed node.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoSubgraph {
    pub center_local_id: usize,
    pub global_ids: Vec<usize>,
    /// `n x d_text`; zero columns when the parent graph has no features.
    pub features: Array2<f64>,
    /// Local undirected edges as `(min, max)` pairs, sorted.
    pub edges: Vec<(usize, usize)>,
    /// `n x K` random-walk positional encodings; zero columns until filled.
    pub positional: Array2<f64>,
}

impl EgoSubgraph {
    pub fn num_nodes(&self) -> usize {
        self.global_ids.len()
    }

    /// Induced subgraph of `graph` on `global_ids` (order preserved). `exclude`
    /// removes one edge of the parent before inducing.
    pub fn induced(
        graph: &TextAttributedGraph,
        global_ids: Vec<usize>,
        center_local_id: usize,
        exclude: Option<(usize, usize)>,
    ) -> Result<Self> {
        if center_local_id >= global_ids.len() {
            return Err(Error::Validation("center outside subgraph".into()));
        }
        let local: HashMap<usize, usize> = global_ids.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        if local.len() != global_ids.len() {
            return Err(Error::Validation("duplicate node in subgraph".into()));
        }
        let excluded = exclude.map(|(u, v)| (u.min(v), u.max(v)));
        let mut edges = Vec::new();
        for (lu, &gu) in global_ids.iter().enumerate() {
            for &gv in graph.neighbors(gu) {
                if gu >= gv || Some((gu, gv)) == excluded {
                    continue;
                }
                if let Some(&lv) = local.get(&gv) {
                    edges.push((lu.min(lv), lu.max(lv)));
                }
            }
        }
        edges.sort_unstable();
        let features = match &graph.features {
            Some(x) => {
                let mut f = Array2::zeros((global_ids.len(), x.ncols()));
                for (l, &g) in global_ids.iter().enumerate() {
                    f.row_mut(l).assign(&x.row(g));
                }
                f
            }
            None => Array2::zeros((global_ids.len(), 0)),
        };
        let n = global_ids.len();
        Ok(Self {
            center_local_id,
            global_ids,
            features,
            edges,
            positional: Array2::zeros((n, 0)),
        })
    }

    /// Local adjacency lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Attaches `rwpe(self, k)` as the positional matrix.
    pub fn with_rwpe(mut self, k: usize) -> Self {
        self.positional = rwpe(&self, k);
        self
    }

    /// Relabels local nodes: local node `i` moves to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.num_nodes();
        assert_eq!(perm.len(), n, "permutation length");
        let mut global_ids = vec![0; n];
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut positional = Array2::zeros(self.positional.raw_dim());
        for i in 0..n {
            global_ids[perm[i]] = self.global_ids[i];
            features.row_mut(perm[i]).assign(&self.features.row(i));
            positional.row_mut(perm[i]).assign(&self.positional.row(i));
        }
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(u, v)| (perm[u].min(perm[v]), perm[u].max(perm[v])))
            .collect();
        edges.sort_unstable();
        Self {
            center_local_id: perm[self.center_local_id],
            global_ids,
            features,
            edges,
            positional,
        }
    }
}

/// One step of a random walk with restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkStep {
    pub node: usize,
    /// The step teleported back to the seed.
    pub restarted: bool,
    /// Node occupied when the step was taken.
    pub from: usize,
}

/// Infinite random walk with restart. Dead ends restart.
pub struct RwrWalk<'g, R> {
    graph: &'g TextAttributedGraph,
    seed: usize,
    restart_prob: f64,
    current: usize,
    exclude: Option<(usize, usize)>,
    rng: R,
}

impl<'g, R: Rng> RwrWalk<'g, R> {
    pub fn new(graph: &'g TextAttributedGraph, seed: usize, restart_prob: f64, rng: R) -> Self {
        Self {
            graph,
            seed,
            restart_prob,
            current: seed,
            exclude: None,
            rng,
        }
    }

    pub fn excluding(mut self, edge: Option<(usize, usize)>) -> Self {
        self.exclude = edge.map(|(u, v)| (u.min(v), u.max(v)));
        self
    }

    fn usable(&self, from: usize, to: usize) -> bool {
        Some((from.min(to), from.max(to))) != self.exclude
    }
}

impl<R: Rng> Iterator for RwrWalk<'_, R> {
    type Item = WalkStep;

    fn next(&mut self) -> Option<WalkStep> {
        let from = self.current;
        let neighbors = self.graph.neighbors(from);
        let degree = neighbors.iter().filter(|&&v| self.usable(from, v)).count();
        let restart = self.rng.random::<f64>() < self.restart_prob;
        let restarted = restart || degree == 0;
        self.current = if restarted {
            self.seed
        } else {
            let pick = self.rng.random_range(0..degree);
            *neighbors
                .iter()
                .filter(|&&v| self.usable(from, v))
                .nth(pick)
                .expect("pick < degree")
        };
        Some(WalkStep {
            node: self.current,
            restarted,
            from,
        })
    }
}

/// Deterministic per-(config, seed) generator.
pub fn sampler_rng(cfg: &SamplerConfig, seed: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ (seed as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Samples the ego-subgraph of `seed` with a random walk with restart.
///
/// Nodes are kept in first-visit order, so the seed is always local node 0.
pub fn rwr_sample(graph: &TextAttributedGraph, seed: usize, cfg: &SamplerConfig) -> Result<EgoSubgraph> {
    rwr_sample_excluding(graph, seed, cfg, None)
}

/// `rwr_sample` on the graph with one edge removed (link-prediction leakage guard).
pub fn rwr_sample_excluding(
    graph: &TextAttributedGraph,
    seed: usize,
    cfg: &SamplerConfig,
    exclude: Option<(usize, usize)>,
) -> Result<EgoSubgraph> {
    cfg.validate()?;
    if seed >= graph.num_nodes() {
        return Err(Error::Validation(format!(
            "seed {seed} outside 0..{}",
            graph.num_nodes()
        )));
    }
    let mut visited = vec![seed];
    let mut seen = std::collections::HashSet::from([seed]);
    let walk = RwrWalk::new(graph, seed, cfg.restart_prob, sampler_rng(cfg, seed)).excluding(exclude);
    for step in walk.take(cfg.max_steps) {
        if visited.len() >= cfg.node_budget {
            break;
        }
        if seen.insert(step.node) {
            visited.push(step.node);
        }
    }
    EgoSubgraph::induced(graph, visited, 0, exclude)
}

/// Random-walk positional encoding: entry `(v, k-1)` is `[(D^-1 A)^k]_{vv}`
/// for `k = 1..=K`. Isolated nodes get zero rows.
pub fn rwpe(sub: &EgoSubgraph, k: usize) -> Array2<f64> {
    let n = sub.num_nodes();
    let adj = sub.adjacency();
    let mut transition = Array2::<f64>::zeros((n, n));
    for (u, nbrs) in adj.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        let w = 1.0 / nbrs.len() as f64;
        for &v in nbrs {
            transition[[u, v]] += w;
        }
    }
    let mut out = Array2::zeros((n, k));
    let mut power = transition.clone();
    for step in 0..k {
        for v in 0..n {
            out[[v, step]] = power[[v, v]];
        }
        if step + 1 < k {
            power = power.dot(&transition);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> TextAttributedGraph {
        TextAttributedGraph::new(3, [(0, 1), (1, 2), (2, 0)], vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn parses_triangle() {
        let g = TextAttributedGraph::parse("3\n0\t-\tx\n1\t-\ty\n2\t-\tz\n0\t1\n1\t2\n2\t0\n", Path::new("t")).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges().len(), 3);
        assert!(g.labels.is_none());
    }

    #[test]
    fn dedups_reverse_edges_and_self_loops() {
        let g = TextAttributedGraph::parse("2\n0\t-\tx\n1\t-\ty\n0\t1\n1\t0\n1\t1\n", Path::new("t")).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn dangling_node_is_validation_error() {
        let err = TextAttributedGraph::parse("3\n0\t-\tx\n1\t-\ty\n2\t-\tz\n0\t99\n", Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = TextAttributedGraph::parse("2\n0\t-\tx\n1\t-\ty\n0 1\n", Path::new("g.tag")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn labels_and_class_names_round_trip() {
        let text = "3\n#classes\tcats\tdogs\n0\t1\tfirst\tbody\n1\t-\tsecond\n2\t0\tthird\n0\t2\n";
        let g = TextAttributedGraph::parse(text, Path::new("t")).unwrap();
        assert_eq!(g.labels.as_ref().unwrap(), &vec![Some(1), None, Some(0)]);
        assert_eq!(g.raw_text[0], "first\tbody");
        let again = TextAttributedGraph::parse(&g.to_edge_list(), Path::new("t")).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn isolated_seed_gives_single_node() {
        let g = TextAttributedGraph::new(2, [], vec!["a".into(), "b".into()]).unwrap();
        let sub = rwr_sample(&g, 1, &SamplerConfig::default()).unwrap();
        assert_eq!(sub.global_ids, vec![1]);
        assert!(sub.edges.is_empty());
    }

    #[test]
    fn invalid_seed_is_error() {
        assert!(rwr_sample(&triangle(), 3, &SamplerConfig::default()).is_err());
    }

    #[test]
    fn budget_and_seed_membership() {
        let edges: Vec<_> = (0..30).map(|i| (i, (i + 1) % 30)).collect();
        let g = TextAttributedGraph::new(30, edges, vec![String::new(); 30]).unwrap();
        let cfg = SamplerConfig {
            node_budget: 5,
            restart_prob: 0.2,
            ..Default::default()
        };
        for seed in 0..30 {
            let sub = rwr_sample(&g, seed, &cfg).unwrap();
            assert!(sub.num_nodes() <= 5);
            assert_eq!(sub.global_ids[sub.center_local_id], seed);
        }
    }

    #[test]
    fn excluded_edge_is_never_walked_or_induced() {
        let g = TextAttributedGraph::new(2, [(0, 1)], vec![String::new(); 2]).unwrap();
        let sub = rwr_sample_excluding(&g, 0, &SamplerConfig::default(), Some((1, 0))).unwrap();
        assert_eq!(sub.global_ids, vec![0]);
    }

    #[test]
    fn rwpe_single_edge() {
        let g = TextAttributedGraph::new(2, [(0, 1)], vec![String::new(); 2]).unwrap();
        let sub = EgoSubgraph::induced(&g, vec![0, 1], 0, None).unwrap();
        let p = rwpe(&sub, 3);
        for v in 0..2 {
            assert_eq!(p.row(v).to_vec(), vec![0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn rwpe_isolated_is_zero() {
        let g = TextAttributedGraph::new(1, [], vec![String::new()]).unwrap();
        let sub = EgoSubgraph::induced(&g, vec![0], 0, None).unwrap();
        assert_eq!(rwpe(&sub, 5).row(0).to_vec(), vec![0.0; 5]);
    }

    #[test]
    fn rwpe_triangle_matches_direct_product() {
        let sub = EgoSubgraph::induced(&triangle(), vec![0, 1, 2], 0, None).unwrap();
        let p = rwpe(&sub, 2);
        // (D^-1 A)^2 on a triangle: diagonal entries 2 * (1/2)^2 = 1/2.
        for v in 0..3 {
            assert_eq!(p[[v, 0]], 0.0);
            assert!((p[[v, 1]] - 0.5).abs() < 1e-15);
        }
    }
}
