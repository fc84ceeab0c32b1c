//! k-nearest-neighbor graph construction over the normalized similarity
//! matrix.
//!
//! Each node connects to the k nodes with the highest similarities; the
//! edge set is the union over directions and every node keeps a unit
//! self-edge. The neighbor count defaults to ceil(ln M) and grows as
//! needed so the k-NN graph does not disconnect nodes that the full
//! positive-similarity graph connects.

use crate::linalg::SparseMatrix;
use nalgebra::DMatrix;
use std::io::{self, Write};
use std::net::Ipv4Addr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("neighbor count k={k} out of range for {m} nodes")]
    InvalidK { k: usize, m: usize },
}

/// Connected components of the strictly-positive-weight graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentPartition {
    /// Component id per node; ids are dense and ordered by each
    /// component's smallest node index.
    pub component_of: Vec<usize>,
    /// Member lists per component id, each sorted ascending.
    pub members: Vec<Vec<usize>>,
}

impl ComponentPartition {
    pub fn count(&self) -> usize {
        self.members.len()
    }
}

/// Weighted k-NN adjacency with self-edges and component structure.
#[derive(Debug, Clone)]
pub struct AdjacencyGraph {
    /// Symmetric weight matrix; w_ii = 1, off-diagonals hold the selected
    /// neighbor similarities (possibly zero).
    pub w: SparseMatrix,
    /// Neighbor count used for construction.
    pub k: usize,
    pub components: ComponentPartition,
}

impl AdjacencyGraph {
    pub fn node_count(&self) -> usize {
        self.w.nrows()
    }
}

/// Default neighbor count: max(1, ceil(ln M)), capped at M - 1.
pub fn default_k(m: usize) -> Result<usize, GraphError> {
    if m < 2 {
        return Err(GraphError::TooFewNodes(m));
    }
    let k = (m as f64).ln().ceil() as usize;
    Ok(k.max(1).min(m - 1))
}

/// Neighbor indices of node `i` sorted by descending similarity, ties
/// broken by lower node index.
fn ranked_neighbors(s_prime: &DMatrix<f64>, i: usize) -> Vec<usize> {
    let m = s_prime.nrows();
    let mut order: Vec<usize> = (0..m).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        s_prime[(i, b)]
            .partial_cmp(&s_prime[(i, a)])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// Builds the union k-NN graph from S′. Edge weights are the S′ entries;
/// self-edges carry weight 1.
pub fn knn_graph(s_prime: &DMatrix<f64>, k: usize) -> Result<AdjacencyGraph, GraphError> {
    let m = s_prime.nrows();
    if m < 2 {
        return Err(GraphError::TooFewNodes(m));
    }
    if k < 1 || k > m - 1 {
        return Err(GraphError::InvalidK { k, m });
    }
    let mut w = SparseMatrix::zeros(m, m);
    for i in 0..m {
        w.set(i, i, 1.0);
        for &j in ranked_neighbors(s_prime, i).iter().take(k) {
            w.set(i, j, s_prime[(i, j)]);
            w.set(j, i, s_prime[(i, j)]);
        }
    }
    let components = connected_components(&w);
    Ok(AdjacencyGraph { w, k, components })
}

/// Union-find components over strictly positive off-diagonal weights.
pub fn connected_components(w: &SparseMatrix) -> ComponentPartition {
    let m = w.nrows();
    let mut parent: Vec<usize> = (0..m).collect();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for (i, j, v) in w.iter() {
        if i != j && v > 0.0 {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }

    let mut component_of = vec![usize::MAX; m];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..m {
        let root = find(&mut parent, i);
        if component_of[root] == usize::MAX {
            component_of[root] = members.len();
            members.push(Vec::new());
        }
        component_of[i] = component_of[root];
        members[component_of[i]].push(i);
    }
    ComponentPartition {
        component_of,
        members,
    }
}

/// Result of the connectivity-driven neighbor-count search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectivityK {
    pub k: usize,
    /// False when no k <= k_max reproduces the target component
    /// structure and `k` is just the cap.
    pub reached_target: bool,
}

/// Smallest k >= k0 (up to k_max) whose positive-weight k-NN graph has
/// the same connected components as the full positive-similarity graph.
/// Genuinely disconnected similarity structure stays disconnected.
pub fn ensure_connectivity_k(
    s_prime: &DMatrix<f64>,
    k0: usize,
    k_max: usize,
) -> Result<ConnectivityK, GraphError> {
    let m = s_prime.nrows();
    if m < 2 {
        return Err(GraphError::TooFewNodes(m));
    }
    if k0 < 1 || k0 > m - 1 {
        return Err(GraphError::InvalidK { k: k0, m });
    }
    let k_max = k_max.min(m - 1);

    // target: components of the full positive-similarity graph
    let mut full = SparseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j && s_prime[(i, j)] > 0.0 {
                full.set(i, j, s_prime[(i, j)]);
            }
        }
    }
    let target = connected_components(&full);

    let ranked: Vec<Vec<usize>> = (0..m).map(|i| ranked_neighbors(s_prime, i)).collect();
    for k in k0..=k_max {
        let mut w = SparseMatrix::zeros(m, m);
        for i in 0..m {
            for &j in ranked[i].iter().take(k) {
                if s_prime[(i, j)] > 0.0 {
                    w.set(i, j, s_prime[(i, j)]);
                    w.set(j, i, s_prime[(i, j)]);
                }
            }
        }
        if connected_components(&w) == target {
            return Ok(ConnectivityK {
                k,
                reached_target: true,
            });
        }
    }
    Ok(ConnectivityK {
        k: k_max,
        reached_target: false,
    })
}

/// Writes the graph as `source_ip<TAB>target_ip<TAB>weight`, one
/// undirected edge per line, self-edges omitted.
pub fn write_edge_list<W: Write>(
    graph: &AdjacencyGraph,
    ips: &[Ipv4Addr],
    out: &mut W,
) -> io::Result<()> {
    for (i, j, v) in graph.w.iter() {
        if i < j {
            writeln!(out, "{}\t{}\t{}", ips[i], ips[j], v)?;
        }
    }
    Ok(())
}
