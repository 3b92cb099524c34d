//! Parameter-similarity tool graph: lexical embeddings, thresholded
//! undirected edges, directed dependency refinement, and deterministic
//! Louvain community detection.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{ToolCatalog, ToolSpec};
use crate::util::fnv1a64;

/// Settings for graph construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Similarity threshold in [0, 1]; an edge requires cosine strictly above it.
    pub tau: f64,
    /// Number of feature-hash buckets in each embedding.
    pub embed_dim: usize,
    /// Seed reserved for embedder substitutes; the built-in pipeline is
    /// deterministic independent of it.
    pub seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { tau: 0.8, embed_dim: 512, seed: 0 }
    }
}

/// A dense parameter-list embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
    /// False when the source parameter list was empty (zero vector).
    pub normalized: bool,
}

impl EmbeddingVector {
    pub fn is_zero(&self) -> bool {
        !self.normalized
    }
}

/// Undirected similarity edge; stored once with `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndirectedEdge {
    pub a: String,
    pub b: String,
    pub w: f64,
}

/// Directed dependency edge: `from` produces something `to` consumes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub from: String,
    pub to: String,
}

/// Tool similarity graph with optional directed dependency refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolGraph {
    pub nodes: Vec<String>,
    pub undirected_edges: Vec<UndirectedEdge>,
    pub directed_edges: Vec<DirectedEdge>,
    pub config: GraphConfig,
}

impl ToolGraph {
    /// Build a graph directly from node names and weighted undirected edges.
    /// Edges are canonicalized (`a < b`) and sorted.
    pub fn from_edges(
        nodes: Vec<String>,
        edges: Vec<(String, String, f64)>,
        config: GraphConfig,
    ) -> Self {
        let mut undirected_edges: Vec<UndirectedEdge> = edges
            .into_iter()
            .map(|(x, y, w)| {
                if x <= y {
                    UndirectedEdge { a: x, b: y, w }
                } else {
                    UndirectedEdge { a: y, b: x, w }
                }
            })
            .collect();
        undirected_edges.sort_by(|l, r| (&l.a, &l.b).cmp(&(&r.a, &r.b)));
        let mut nodes = nodes;
        nodes.sort();
        Self { nodes, undirected_edges, directed_edges: Vec::new(), config }
    }

    pub fn has_undirected(&self, x: &str, y: &str) -> bool {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        self.undirected_edges.iter().any(|e| e.a == a && e.b == b)
    }
}

/// Disjoint communities covering all graph nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainPartition {
    /// Each community is a sorted list of tool names; communities are
    /// ordered by their first member.
    pub communities: Vec<Vec<String>>,
    pub modularity: f64,
}

impl DomainPartition {
    fn normalized(mut communities: Vec<Vec<String>>, modularity: f64) -> Self {
        for c in &mut communities {
            c.sort();
        }
        communities.sort();
        Self { communities, modularity }
    }

    /// Index of the community containing `node`, if any.
    pub fn community_of(&self, node: &str) -> Option<usize> {
        self.communities.iter().position(|c| c.iter().any(|n| n == node))
    }
}

/// Pluggable parameter-list embedder. The default is deterministic lexical
/// feature hashing; an external neural embedder can be substituted.
pub trait ParameterEmbedder {
    fn embed(&self, tool: &ToolSpec, config: &GraphConfig) -> EmbeddingVector;
}

/// Default embedder: feature-hashed bag of lexical parameter features.
pub struct HashingEmbedder;

impl ParameterEmbedder for HashingEmbedder {
    fn embed(&self, tool: &ToolSpec, config: &GraphConfig) -> EmbeddingVector {
        embed_parameters(tool, config)
    }
}

/// Embed a tool's parameter list into a normalized dense vector.
///
/// Features, per parameter:
/// - `name:<token>` for every lowercase token of the parameter name, where
///   tokens are maximal runs of alphanumeric characters;
/// - `type:<ptype>` for the parameter's type name;
/// - `desc:<trigram>` for every window of 3 consecutive characters of the
///   lowercased parameter description.
///
/// Each feature increments bucket `fnv1a64(feature) mod embed_dim` by one.
/// The bucket counts are then L2-normalized; a tool with no parameters
/// yields the zero vector, flagged non-normalized.
pub fn embed_parameters(tool: &ToolSpec, config: &GraphConfig) -> EmbeddingVector {
    let values = feature_counts(tool, config.embed_dim);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return EmbeddingVector { values, dim: config.embed_dim, normalized: false };
    }
    let values = values.into_iter().map(|v| v / norm).collect();
    EmbeddingVector { values, dim: config.embed_dim, normalized: true }
}

/// Raw (unnormalized) feature-hash bucket counts for a tool.
pub fn feature_counts(tool: &ToolSpec, dim: usize) -> Vec<f64> {
    let mut values = vec![0.0; dim];
    let mut bump = |feature: &str| {
        let bucket = (fnv1a64(feature.as_bytes()) % dim as u64) as usize;
        values[bucket] += 1.0;
    };
    for p in &tool.parameters {
        for token in name_tokens(&p.name) {
            bump(&format!("name:{token}"));
        }
        bump(&format!("type:{}", p.ptype));
        let desc: Vec<char> = p.description.to_lowercase().chars().collect();
        for win in desc.windows(3) {
            let tri: String = win.iter().collect();
            bump(&format!("desc:{tri}"));
        }
    }
    values
}

fn name_tokens(name: &str) -> Vec<String> {
    name.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Cosine similarity; zero for any zero vector.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
}

/// Build the undirected similarity graph: an edge joins two distinct tools
/// whose embedding cosine strictly exceeds `config.tau`.
pub fn pairwise_edges(catalog: &ToolCatalog, config: &GraphConfig) -> ToolGraph {
    pairwise_edges_with(catalog, config, &HashingEmbedder)
}

/// `pairwise_edges` with a caller-supplied embedder.
pub fn pairwise_edges_with(
    catalog: &ToolCatalog,
    config: &GraphConfig,
    embedder: &(dyn ParameterEmbedder + Sync),
) -> ToolGraph {
    let mut tools: Vec<&ToolSpec> = catalog.tools.iter().collect();
    tools.sort_by(|a, b| a.name.cmp(&b.name));
    let vectors: Vec<EmbeddingVector> =
        tools.iter().map(|t| embedder.embed(t, config)).collect();
    let edges: Vec<(String, String, f64)> = (0..tools.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let vectors = &vectors;
            let tools = &tools;
            (i + 1..tools.len()).filter_map(move |j| {
                let w = cosine(&vectors[i], &vectors[j]);
                (w > config.tau).then(|| (tools[i].name.clone(), tools[j].name.clone(), w))
            })
        })
        .collect();
    ToolGraph::from_edges(
        tools.iter().map(|t| t.name.clone()).collect(),
        edges,
        config.clone(),
    )
}

/// How two tools depend on each other, as decided by a judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DependencyVerdict {
    /// First tool feeds the second.
    Forward,
    /// Second tool feeds the first.
    Backward,
    Both,
    None,
}

/// Pluggable pairwise dependency examiner.
pub trait DependencyJudge {
    fn judge(&self, a: &ToolSpec, b: &ToolSpec) -> Result<DependencyVerdict, String>;
}

/// Default judge: `a → b` when some declared return field of `a` has the
/// same name as a required parameter of `b`.
pub struct HeuristicJudge;

impl HeuristicJudge {
    fn feeds(a: &ToolSpec, b: &ToolSpec) -> bool {
        let Some(returns) = &a.returns else { return false };
        returns
            .iter()
            .any(|r| b.required_params().any(|p| p.name == r.name))
    }
}

impl DependencyJudge for HeuristicJudge {
    fn judge(&self, a: &ToolSpec, b: &ToolSpec) -> Result<DependencyVerdict, String> {
        match (Self::feeds(a, b), Self::feeds(b, a)) {
            (true, true) => Ok(DependencyVerdict::Both),
            (true, false) => Ok(DependencyVerdict::Forward),
            (false, true) => Ok(DependencyVerdict::Backward),
            (false, false) => Ok(DependencyVerdict::None),
        }
    }
}

/// Warning recorded when the judge fails on one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeWarning {
    pub a: String,
    pub b: String,
    pub message: String,
}

/// Populate directed dependency edges among the tools of one community.
/// Undirected edges are untouched; a judge failure drops that pair's
/// directed edges and records a warning.
pub fn refine_edges(
    community_tools: &[&ToolSpec],
    graph: &ToolGraph,
    judge: &dyn DependencyJudge,
) -> (ToolGraph, Vec<JudgeWarning>) {
    let mut out = graph.clone();
    let mut warnings = Vec::new();
    let mut tools: Vec<&ToolSpec> = community_tools.to_vec();
    tools.sort_by(|a, b| a.name.cmp(&b.name));
    for (i, a) in tools.iter().enumerate() {
        debug_assert!(graph.nodes.iter().any(|n| n == &a.name));
        for b in &tools[i + 1..] {
            match judge.judge(a, b) {
                Ok(DependencyVerdict::Forward) => out
                    .directed_edges
                    .push(DirectedEdge { from: a.name.clone(), to: b.name.clone() }),
                Ok(DependencyVerdict::Backward) => out
                    .directed_edges
                    .push(DirectedEdge { from: b.name.clone(), to: a.name.clone() }),
                Ok(DependencyVerdict::Both) => {
                    out.directed_edges
                        .push(DirectedEdge { from: a.name.clone(), to: b.name.clone() });
                    out.directed_edges
                        .push(DirectedEdge { from: b.name.clone(), to: a.name.clone() });
                }
                Ok(DependencyVerdict::None) => {}
                Err(message) => warnings.push(JudgeWarning {
                    a: a.name.clone(),
                    b: b.name.clone(),
                    message,
                }),
            }
        }
    }
    out.directed_edges.sort();
    out.directed_edges.dedup();
    (out, warnings)
}

/// Run `refine_edges` over every community of a partition.
pub fn refine_partition(
    catalog: &ToolCatalog,
    graph: &ToolGraph,
    partition: &DomainPartition,
    judge: &dyn DependencyJudge,
) -> (ToolGraph, Vec<JudgeWarning>) {
    let mut out = graph.clone();
    let mut warnings = Vec::new();
    for community in &partition.communities {
        let tools: Vec<&ToolSpec> = community
            .iter()
            .filter_map(|name| catalog.tool(name))
            .collect();
        let (refined, mut w) = refine_edges(&tools, &out, judge);
        out = refined;
        warnings.append(&mut w);
    }
    (out, warnings)
}

/// Weighted Newman modularity of a partition over the graph's undirected
/// edges: `Q = Σ_c [L_c/m − (D_c/2m)²]`, where `L_c` is the weight inside
/// community c, `D_c` the total weighted degree of its members, and `m`
/// the total edge weight. An empty edge set yields 0 by convention.
pub fn modularity(graph: &ToolGraph, partition: &DomainPartition) -> f64 {
    let mut m = 0.0;
    for e in &graph.undirected_edges {
        m += e.w;
    }
    if m == 0.0 {
        return 0.0;
    }
    let mut comm_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (ci, community) in partition.communities.iter().enumerate() {
        for node in community {
            comm_of.insert(node, ci);
        }
    }
    for node in &graph.nodes {
        assert!(
            comm_of.contains_key(node.as_str()),
            "partition must cover all graph nodes (missing `{node}`)"
        );
    }
    let ncomm = partition.communities.len();
    let mut inside = vec![0.0; ncomm];
    let mut degree = vec![0.0; ncomm];
    for e in &graph.undirected_edges {
        let ca = comm_of[e.a.as_str()];
        let cb = comm_of[e.b.as_str()];
        degree[ca] += e.w;
        degree[cb] += e.w;
        if ca == cb {
            inside[ca] += e.w;
        }
    }
    (0..ncomm)
        .map(|c| inside[c] / m - (degree[c] / (2.0 * m)).powi(2))
        .sum()
}

/// Louvain community detection, fully deterministic: nodes are visited in
/// ascending name order, equal-gain moves resolve to the lowest community
/// id, and a pass terminates the level when its total gain drops below
/// 1e-12. Isolated nodes remain singletons. The returned partition never
/// scores below the singleton or whole-graph baselines.
pub fn detect_communities(graph: &ToolGraph, _config: &GraphConfig) -> DomainPartition {
    assert!(!graph.nodes.is_empty(), "graph must have at least one node");
    let mut names: Vec<String> = graph.nodes.clone();
    names.sort();
    let index: BTreeMap<&str, usize> =
        names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut work = WorkGraph::new(names.len());
    for e in &graph.undirected_edges {
        work.add_edge(index[e.a.as_str()], index[e.b.as_str()], e.w);
    }
    work.min_name = names.clone();
    work.finish();

    let mut membership: Vec<usize> = (0..names.len()).collect();
    loop {
        let comm = local_moving(&work);
        let distinct: BTreeSet<usize> = comm.iter().copied().collect();
        if distinct.len() == work.len() {
            break;
        }
        let (next, remap) = aggregate(&work, &comm);
        for slot in &mut membership {
            *slot = remap[comm[*slot]];
        }
        work = next;
    }

    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        groups.entry(membership[i]).or_default().push(name.clone());
    }
    let communities: Vec<Vec<String>> = groups.into_values().collect();
    let louvain =
        DomainPartition::normalized(communities.clone(), 0.0);
    let louvain =
        DomainPartition { modularity: modularity(graph, &louvain), ..louvain };

    // Guard: fall back to a baseline partition if it scores strictly higher.
    let singleton = DomainPartition::normalized(
        names.iter().map(|n| vec![n.clone()]).collect(),
        0.0,
    );
    let singleton =
        DomainPartition { modularity: modularity(graph, &singleton), ..singleton };
    let whole = DomainPartition::normalized(vec![names.clone()], 0.0);
    let whole = DomainPartition { modularity: modularity(graph, &whole), ..whole };

    let mut best = louvain;
    for candidate in [singleton, whole] {
        if candidate.modularity > best.modularity {
            best = candidate;
        }
    }
    best
}

/// Working graph for Louvain levels. Self-loop weight counts twice toward
/// a node's degree and once toward total weight `m`.
struct WorkGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    m: f64,
    /// Lexicographically smallest original tool name merged into each node;
    /// keeps super-node ordering aligned with name ordering.
    min_name: Vec<String>,
}

impl WorkGraph {
    fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            self_loop: vec![0.0; n],
            degree: vec![0.0; n],
            m: 0.0,
            min_name: vec![String::new(); n],
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn add_edge(&mut self, i: usize, j: usize, w: f64) {
        debug_assert_ne!(i, j);
        self.adj[i].push((j, w));
        self.adj[j].push((i, w));
    }

    fn finish(&mut self) {
        for list in &mut self.adj {
            list.sort_by(|a, b| a.0.cmp(&b.0));
        }
        for i in 0..self.len() {
            self.degree[i] =
                2.0 * self.self_loop[i] + self.adj[i].iter().map(|(_, w)| w).sum::<f64>();
            self.m += self.self_loop[i];
        }
        self.m += self
            .adj
            .iter()
            .flat_map(|list| list.iter().map(|(_, w)| w))
            .sum::<f64>()
            / 2.0;
    }
}

const GAIN_EPS: f64 = 1e-12;

/// One Louvain level: greedy modularity-gain moves until a full pass gains
/// less than `GAIN_EPS`. Returns the community id per working node.
fn local_moving(g: &WorkGraph) -> Vec<usize> {
    let n = g.len();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut comm_degree: Vec<f64> = g.degree.clone();
    if g.m == 0.0 {
        return comm;
    }
    loop {
        let mut pass_gain = 0.0;
        let mut moved = false;
        for i in 0..n {
            let c = comm[i];
            let k_i = g.degree[i];
            let mut w_to: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, w) in &g.adj[i] {
                *w_to.entry(comm[j]).or_insert(0.0) += w;
            }
            let w_own = w_to.get(&c).copied().unwrap_or(0.0);
            let mut best_gain = 0.0;
            let mut best_comm = c;
            for (&d, &w_id) in &w_to {
                if d == c {
                    continue;
                }
                let gain = (w_id - w_own) / g.m
                    - k_i * (comm_degree[d] - (comm_degree[c] - k_i))
                        / (2.0 * g.m * g.m);
                if gain > best_gain + GAIN_EPS {
                    best_gain = gain;
                    best_comm = d;
                }
            }
            if best_comm != c {
                comm_degree[c] -= k_i;
                comm_degree[best_comm] += k_i;
                comm[i] = best_comm;
                pass_gain += best_gain;
                moved = true;
            }
        }
        if !moved || pass_gain < GAIN_EPS {
            break;
        }
    }
    comm
}

/// Collapse communities into super-nodes. Returns the new graph and a map
/// from old community id to new node id; new ids ascend by the smallest
/// original name contained, preserving name-ordered traversal.
fn aggregate(g: &WorkGraph, comm: &[usize]) -> (WorkGraph, Vec<usize>) {
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (node, &c) in comm.iter().enumerate() {
        members.entry(c).or_default().push(node);
    }
    let mut order: Vec<(String, usize)> = members
        .iter()
        .map(|(&c, nodes)| {
            let min = nodes.iter().map(|&v| g.min_name[v].clone()).min().unwrap();
            (min, c)
        })
        .collect();
    order.sort();

    let mut remap = vec![usize::MAX; g.len()];
    for (new_id, (_, old_c)) in order.iter().enumerate() {
        remap[*old_c] = new_id;
    }

    let n_new = order.len();
    let mut next = WorkGraph::new(n_new);
    let mut between: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (min, old_c) in &order {
        let new_id = remap[*old_c];
        next.min_name[new_id] = min.clone();
        for &v in &members[old_c] {
            next.self_loop[new_id] += g.self_loop[v];
            for &(u, w) in &g.adj[v] {
                let cu = remap[comm[u]];
                if cu == new_id {
                    if u > v {
                        next.self_loop[new_id] += w;
                    }
                } else {
                    let key = (new_id.min(cu), new_id.max(cu));
                    if new_id < cu {
                        *between.entry(key).or_insert(0.0) += w;
                    }
                }
            }
        }
    }
    for ((x, y), w) in between {
        next.add_edge(x, y, w);
    }
    next.finish();
    (next, remap)
}
