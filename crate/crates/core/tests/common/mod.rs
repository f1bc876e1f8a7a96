//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use stsc::ingest::{self, Manifest};
use stsc::metrics::UndirectedGraph;
use stsc::model::{ActorId, ChangeRecord, CommEvent, CommGraph};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

pub struct Mendix {
    pub manifest: Manifest,
    pub events: Vec<CommEvent>,
    pub changes: Vec<ChangeRecord>,
    pub graphs: Vec<CommGraph>,
}

/// The four-week fixture run through the library pipeline by hand.
pub fn mendix() -> Mendix {
    let mut manifest =
        ingest::load_architecture(File::open(fixture("fixtures/mendix/manifest.json")).unwrap()).unwrap();
    let (events, _) =
        ingest::parse_chat_canonical(File::open(fixture("fixtures/mendix/chat.jsonl")).unwrap()).unwrap();
    let (changes, _) =
        ingest::load_changes(File::open(fixture("fixtures/mendix/changes.jsonl")).unwrap()).unwrap();
    ingest::register_unknown_actors(&mut manifest.model, &events);
    let origin = ingest::default_origin(&events).unwrap();
    let length = manifest.windowing.length.unwrap();
    let windows = ingest::build_windows(&events, origin, length);
    let graphs = ingest::build_comm_graphs(&events, &windows, &manifest.model);
    Mendix {
        manifest,
        events,
        changes,
        graphs,
    }
}

/// Freeman betweenness by listing every simple path between every pair,
/// keeping the shortest ones, and counting interior visits. Exponential;
/// meant for graphs of at most a handful of nodes.
pub fn brute_force_betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        if a != b {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    fn walk(adj: &[Vec<bool>], at: usize, target: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if at == target {
            out.push(path.clone());
            return;
        }
        for next in 0..adj.len() {
            if adj[at][next] && !path.contains(&next) {
                path.push(next);
                walk(adj, next, target, path, out);
                path.pop();
            }
        }
    }
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let mut paths = Vec::new();
            walk(&adj, s, t, &mut vec![s], &mut paths);
            let Some(shortest) = paths.iter().map(Vec::len).min() else {
                continue;
            };
            let shortest: Vec<_> = paths.into_iter().filter(|p| p.len() == shortest).collect();
            let total = shortest.len() as f64;
            for (v, slot) in score.iter_mut().enumerate() {
                if v == s || v == t {
                    continue;
                }
                let through = shortest.iter().filter(|p| p.contains(&v)).count() as f64;
                *slot += through / total;
            }
        }
    }
    score
}

pub fn node_name(i: usize) -> ActorId {
    ActorId::new(format!("n{i}"))
}

/// Library graph with nodes `n0..n{n-1}`.
pub fn undirected(n: usize, edges: &[(usize, usize)]) -> UndirectedGraph {
    UndirectedGraph::from_edges(
        (0..n).map(node_name),
        edges.iter().map(|&(a, b)| (node_name(a), node_name(b), 1)),
    )
}

/// Raw betweenness from the library, indexed like the oracle.
pub fn library_betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let b = stsc::metrics::betweenness(&undirected(n, edges));
    (0..n).map(|i| b[&node_name(i)].raw).collect()
}

pub fn edge_count_map(graph: &CommGraph) -> BTreeMap<(ActorId, ActorId), u64> {
    graph.edges.clone()
}
