//! Symmetric k-nearest-neighbor graphs and shortest-path (geodesic)
//! distances over them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Undirected, Euclidean-weighted neighbor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    /// Per node, `(neighbor, weight)` sorted by neighbor index.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Every directed edge `(a, b, w)`; each undirected edge appears twice.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, nbrs)| nbrs.iter().map(move |&(b, w)| (a, b, w)))
    }
}

/// Connects each point to its `k` nearest neighbors and symmetrizes by
/// edge union. Ties in distance go to the smaller index.
pub fn knn_graph(cloud: &PointCloud, k: usize) -> Result<NeighborGraph> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::param(format!("knn requires 1 <= k < N (k={k}, N={n})")));
    }
    let nearest: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(usize, f64)> = cloud
                .distances_from(i)
                .into_iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .collect();
            let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
            cand.select_nth_unstable_by(k - 1, by_dist);
            cand.truncate(k);
            cand.sort_by(by_dist);
            cand
        })
        .collect();

    let mut adjacency = vec![Vec::new(); n];
    for (i, nbrs) in nearest.iter().enumerate() {
        for &(j, w) in nbrs {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }
    for list in &mut adjacency {
        list.sort_by(|a, b| a.0.cmp(&b.0));
        list.dedup_by_key(|e| e.0);
    }
    Ok(NeighborGraph { k, adjacency })
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path lengths; unreachable nodes are `+inf`.
pub fn dijkstra(graph: &NeighborGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier { dist: 0.0, node: source });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in graph.neighbors(node) {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Frontier { dist: nd, node: next });
            }
        }
    }
    dist
}

/// Pairwise shortest-path lengths among `subset`. Disconnected pairs hold
/// `+inf`; the diagonal is zero and the result is exactly symmetric.
pub fn geodesic_distances(graph: &NeighborGraph, subset: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&bad) = subset.iter().find(|&&s| s >= graph.node_count()) {
        return Err(Error::Input(format!(
            "subset id {bad} not in graph of {} nodes",
            graph.node_count()
        )));
    }
    let rows: Vec<Vec<f64>> = subset
        .par_iter()
        .map(|&s| {
            let all = dijkstra(graph, s);
            subset.iter().map(|&t| all[t]).collect()
        })
        .collect();
    let m = subset.len();
    Ok(DMatrix::from_fn(m, m, |a, b| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if lo == hi {
            0.0
        } else {
            rows[lo][hi]
        }
    }))
}
