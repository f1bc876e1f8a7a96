//! Degree and betweenness centrality per window, plus the cross-window
//! series used for trend output.
//!
//! Betweenness follows Freeman's definition on the symmetrized, unweighted
//! graph: for each node `v`, the sum over unordered pairs `{s, t}` (neither
//! equal to `v`) of the fraction of shortest `s`-`t` paths passing through
//! `v`. Pairs in different components contribute nothing, and normalization
//! divides by `(n-1)(n-2)/2` over all `n` nodes. Message counts only matter
//! for edge strength; a weighted shortest-path variant would slot in at
//! [`single_source_paths`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::model::{ActorId, CentralityRecord, CommGraph, EdgeStrength, StrengthClass, Window};

/// Simple undirected graph over actor ids. Nodes are sorted; edge keys are
/// index pairs `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    nodes: Vec<ActorId>,
    adjacency: Vec<Vec<usize>>,
    weights: BTreeMap<(usize, usize), u64>,
}

impl UndirectedGraph {
    /// Builds a graph from explicit nodes and edges. Self-loops are ignored,
    /// parallel edges add their weights, endpoints are added as nodes.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = ActorId>,
        edges: impl IntoIterator<Item = (ActorId, ActorId, u64)>,
    ) -> Self {
        let edges: Vec<_> = edges.into_iter().collect();
        let mut all: BTreeSet<ActorId> = nodes.into_iter().collect();
        for (a, b, _) in &edges {
            all.insert(a.clone());
            all.insert(b.clone());
        }
        let nodes: Vec<ActorId> = all.into_iter().collect();
        let index = |id: &ActorId| nodes.binary_search(id).expect("node registered");
        let mut weights = BTreeMap::new();
        for (a, b, w) in &edges {
            let (i, j) = (index(a), index(b));
            if i == j || *w == 0 {
                continue;
            }
            *weights.entry((i.min(j), i.max(j))).or_insert(0) += *w;
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(i, j) in weights.keys() {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            nodes,
            adjacency,
            weights,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }

    pub fn nodes(&self) -> &[ActorId] {
        &self.nodes
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(id)).ok()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn weight(&self, a: &str, b: &str) -> u64 {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.weights.get(&(i.min(j), i.max(j))).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// `(a, b, weight)` with `a < b`, in id order.
    pub fn edges(&self) -> impl Iterator<Item = (&ActorId, &ActorId, u64)> + '_ {
        self.weights
            .iter()
            .map(move |(&(i, j), &w)| (&self.nodes[i], &self.nodes[j], w))
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.values().sum()
    }
}

/// Undirected view of a window's graph: `{a, b}` carries
/// `weight(a, b) + weight(b, a)`.
pub fn symmetrize(graph: &CommGraph) -> UndirectedGraph {
    UndirectedGraph::from_edges(
        graph.nodes.iter().cloned(),
        graph
            .edges
            .iter()
            .map(|((a, b), &w)| (a.clone(), b.clone(), w)),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Degree {
    pub in_degree: usize,
    pub out_degree: usize,
    pub total_degree: usize,
}

/// Distinct in-, out- and undirected neighbours per node.
pub fn degree_centrality(graph: &CommGraph) -> BTreeMap<ActorId, Degree> {
    let mut ins: BTreeMap<&ActorId, BTreeSet<&ActorId>> = BTreeMap::new();
    let mut outs: BTreeMap<&ActorId, BTreeSet<&ActorId>> = BTreeMap::new();
    for ((a, b), &w) in &graph.edges {
        if w == 0 || a == b {
            continue;
        }
        outs.entry(a).or_default().insert(b);
        ins.entry(b).or_default().insert(a);
    }
    let empty = BTreeSet::new();
    graph
        .nodes
        .iter()
        .map(|id| {
            let i = ins.get(id).unwrap_or(&empty);
            let o = outs.get(id).unwrap_or(&empty);
            let total = i.union(o).count();
            (
                id.clone(),
                Degree {
                    in_degree: i.len(),
                    out_degree: o.len(),
                    total_degree: total,
                },
            )
        })
        .collect()
}

/// Shortest-path bookkeeping from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCounts {
    pub source: usize,
    /// Number of shortest paths from the source; 0 when unreachable.
    pub sigma: Vec<f64>,
    /// Hop distance, `None` when unreachable.
    pub dist: Vec<Option<usize>>,
    pub predecessors: Vec<Vec<usize>>,
    /// Reachable nodes in non-decreasing distance order.
    pub order: Vec<usize>,
}

/// Breadth-first search from `source` counting shortest paths.
pub fn single_source_paths(graph: &UndirectedGraph, source: usize) -> PathCounts {
    let n = graph.node_count();
    let mut sigma = vec![0.0; n];
    let mut dist = vec![None; n];
    let mut predecessors = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();

    sigma[source] = 1.0;
    dist[source] = Some(0);
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        let dv = dist[v].expect("queued nodes have a distance");
        for &w in graph.neighbors(v) {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                queue.push_back(w);
            }
            if dist[w] == Some(dv + 1) {
                sigma[w] += sigma[v];
                predecessors[w].push(v);
            }
        }
    }
    PathCounts {
        source,
        sigma,
        dist,
        predecessors,
        order,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Betweenness {
    pub raw: f64,
    pub normalized: f64,
}

/// Pair count used for normalization; 0 below three nodes.
pub fn normalizer(n: usize) -> f64 {
    if n < 3 {
        0.0
    } else {
        ((n - 1) * (n - 2)) as f64 / 2.0
    }
}

/// Brandes' dependency accumulation over every source.
pub fn betweenness(graph: &UndirectedGraph) -> BTreeMap<ActorId, Betweenness> {
    let n = graph.node_count();
    let mut raw = vec![0.0f64; n];
    if n >= 3 {
        let mut delta = vec![0.0f64; n];
        for s in 0..n {
            let paths = single_source_paths(graph, s);
            delta.iter_mut().for_each(|d| *d = 0.0);
            for &w in paths.order.iter().rev() {
                for &v in &paths.predecessors[w] {
                    delta[v] += paths.sigma[v] / paths.sigma[w] * (1.0 + delta[w]);
                }
                if w != s {
                    raw[w] += delta[w];
                }
            }
        }
        // every unordered pair was visited from both ends
        raw.iter_mut().for_each(|r| *r /= 2.0);
    }
    let scale = normalizer(n);
    graph
        .nodes()
        .iter()
        .zip(raw)
        .map(|(id, r)| {
            let normalized = if scale > 0.0 { r / scale } else { 0.0 };
            (id.clone(), Betweenness { raw: r, normalized })
        })
        .collect()
}

/// Degree plus betweenness for every node of one window.
pub fn window_records(graph: &CommGraph) -> BTreeMap<ActorId, CentralityRecord> {
    let degrees = degree_centrality(graph);
    let between = betweenness(&symmetrize(graph));
    degrees
        .into_iter()
        .map(|(id, d)| {
            let b = between.get(&id).copied().unwrap_or_default();
            let rec = CentralityRecord {
                actor: id.clone(),
                window: graph.window,
                in_degree: d.in_degree,
                out_degree: d.out_degree,
                total_degree: d.total_degree,
                betweenness_raw: b.raw,
                betweenness_norm: b.normalized,
            };
            (id, rec)
        })
        .collect()
}

/// Per-actor centrality across windows. Every actor has one record per
/// window, zeroed where the actor was absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CentralitySeries {
    pub windows: Vec<Window>,
    pub by_actor: BTreeMap<ActorId, Vec<CentralityRecord>>,
}

impl CentralitySeries {
    /// Records for window `index`, in actor order.
    pub fn records_for(&self, index: usize) -> Vec<CentralityRecord> {
        self.by_actor
            .values()
            .filter_map(|recs| recs.get(index).cloned())
            .collect()
    }

    pub fn window_index(&self, window: &Window) -> Option<usize> {
        self.windows.iter().position(|w| w == window)
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Computes every window independently and aligns the results over the
/// union of actors seen in any window.
pub fn build_series(graphs: &[CommGraph]) -> CentralitySeries {
    let per_window: Vec<_> = graphs.iter().map(window_records).collect();
    let actors: BTreeSet<ActorId> = graphs.iter().flat_map(|g| g.nodes.iter().cloned()).collect();
    let by_actor = actors
        .into_iter()
        .map(|actor| {
            let recs = graphs
                .iter()
                .zip(&per_window)
                .map(|(g, recs)| {
                    recs.get(&actor)
                        .cloned()
                        .unwrap_or_else(|| CentralityRecord::zero(actor.clone(), g.window))
                })
                .collect();
            (actor, recs)
        })
        .collect();
    CentralitySeries {
        windows: graphs.iter().map(|g| g.window).collect(),
        by_actor,
    }
}

/// Strong/weak split on symmetrized weights: weak iff `weight < max / 2`.
pub fn classify_edges(graph: &CommGraph) -> Vec<EdgeStrength> {
    classify_undirected(&symmetrize(graph))
}

pub fn classify_undirected(graph: &UndirectedGraph) -> Vec<EdgeStrength> {
    let max = graph.edges().map(|(_, _, w)| w).max().unwrap_or(0);
    graph
        .edges()
        .map(|(a, b, w)| EdgeStrength {
            a: a.clone(),
            b: b.clone(),
            weight: w,
            class: strength_class(w, max),
        })
        .collect()
}

/// `weight < max / 2` evaluated in integers.
pub fn strength_class(weight: u64, max: u64) -> StrengthClass {
    if u128::from(weight) * 2 < u128::from(max) {
        StrengthClass::Weak
    } else {
        StrengthClass::Strong
    }
}
