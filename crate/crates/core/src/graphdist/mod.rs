//! Meta-information distances between environments built from community
//! structure: an overlap-coefficient graph, its Laplacian spectral
//! embedding, and distance-ranked environment selection.
//!
//! Edge weights use the Szymkiewicz-Simpson coefficient
//! `G(i,j) = |C_i ∩ C_j| / min(|C_i|, |C_j|)`. The Laplacian is the
//! unnormalized `L = D - G` with the unit self-overlap diagonal removed
//! first, so that `L 1 = 0` holds exactly. Embeddings are the
//! eigenvectors of the `k` smallest eigenvalues, row-normalized, with a
//! deterministic sign convention; distances between environments are
//! Euclidean distances between embedding rows.

mod io;

pub use io::{
    read_edge_tsv, read_membership_csv, write_distance_matrix_csv, write_embedding_csv,
    write_ranking_csv,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalue gap below which an embedding is flagged basis-dependent.
pub const DEGENERACY_GAP: f64 = 1e-9;

/// Weighted undirected graph over named communities.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityGraph {
    nodes: Vec<String>,
    g: Array2<f64>,
    sizes: Option<Vec<usize>>,
}

impl CommunityGraph {
    /// Builds a graph from an explicit symmetric weight matrix with unit
    /// diagonal and entries in [0, 1].
    pub fn from_matrix(nodes: Vec<String>, g: Array2<f64>, sizes: Option<Vec<usize>>) -> Result<Self> {
        let n = nodes.len();
        if g.nrows() != n || g.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.nrows(),
                context: "community matrix size",
            });
        }
        for i in 0..n {
            if (g[[i, i]] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "self-overlap of {} must be 1, got {}",
                    nodes[i],
                    g[[i, i]]
                )));
            }
            for j in 0..n {
                let w = g[[i, j]];
                if !(0.0..=1.0).contains(&w) || !w.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "edge weight ({i},{j}) = {w} outside [0, 1]"
                    )));
                }
                if (g[[i, j]] - g[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if let Some(sizes) = &sizes {
            if sizes.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: sizes.len(),
                    context: "community sizes",
                });
            }
        }
        Ok(CommunityGraph { nodes, g, sizes })
    }

    /// Builds a graph from an edge list. Node order follows first
    /// appearance; missing edges are weight 0 and the diagonal is 1.
    pub fn from_edges(edges: &[(String, String, f64)]) -> Result<Self> {
        let mut nodes: Vec<String> = Vec::new();
        let mut index = std::collections::BTreeMap::new();
        for (a, b, _) in edges {
            for name in [a, b] {
                if !index.contains_key(name) {
                    index.insert(name.clone(), nodes.len());
                    nodes.push(name.clone());
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyInput("edge list has no nodes"));
        }
        let n = nodes.len();
        let mut g = Array2::zeros((n, n));
        for i in 0..n {
            g[[i, i]] = 1.0;
        }
        for (a, b, w) in edges {
            let (i, j) = (index[a], index[b]);
            if i == j {
                continue;
            }
            if g[[i, j]] != 0.0 && (g[[i, j]] - w).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "conflicting weights for edge {a}-{b}"
                )));
            }
            g[[i, j]] = *w;
            g[[j, i]] = *w;
        }
        CommunityGraph::from_matrix(nodes, g, None)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.g
    }

    pub fn sizes(&self) -> Option<&[usize]> {
        self.sizes.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }
}

/// Overlap-coefficient graph from element sets: one node per community,
/// `G(i,j) = |C_i ∩ C_j| / min(|C_i|, |C_j|)`.
pub fn overlap_matrix(communities: &[(String, BTreeSet<String>)]) -> Result<CommunityGraph> {
    if communities.is_empty() {
        return Err(Error::EmptyInput("no communities given"));
    }
    for (name, set) in communities {
        if set.is_empty() {
            return Err(Error::InvalidSpec(format!("community {name} is empty")));
        }
    }
    let n = communities.len();
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        g[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let (_, a) = &communities[i];
            let (_, b) = &communities[j];
            let inter = a.intersection(b).count() as f64;
            let w = inter / a.len().min(b.len()) as f64;
            g[[i, j]] = w;
            g[[j, i]] = w;
        }
    }
    let nodes = communities.iter().map(|(n, _)| n.clone()).collect();
    let sizes = communities.iter().map(|(_, s)| s.len()).collect();
    CommunityGraph::from_matrix(nodes, g, Some(sizes))
}

/// Unnormalized Laplacian `L = D - G` with the self-overlap diagonal
/// removed before forming degrees, so row sums vanish exactly.
pub fn laplacian(graph: &CommunityGraph) -> Array2<f64> {
    let n = graph.len();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if j != i {
                let w = graph.g[[i, j]];
                degree += w;
                l[[i, j]] = -w;
            }
        }
        l[[i, i]] = degree;
    }
    l
}

/// Row-normalized eigenvector embedding of the `k` smallest Laplacian
/// eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEmbedding {
    u: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    k: usize,
    /// Rows whose selected eigenvector components were all zero; left as
    /// zero rather than normalized.
    zero_rows: Vec<usize>,
    /// Set when an eigenvalue gap inside or at the boundary of the
    /// selected block is below [`DEGENERACY_GAP`]; the embedding is then
    /// basis-dependent (distances within degenerate clusters remain
    /// meaningful for disconnected components).
    degenerate: bool,
}

impl SpectralEmbedding {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.u[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.u.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Computes the embedding from a symmetric Laplacian. Eigenvalues come
/// back ascending and slightly negative values (down to -1e-10) are
/// accepted as numerical zeros.
pub fn spectral_embedding(l: &Array2<f64>, k: usize) -> Result<SpectralEmbedding> {
    let n = l.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "embedding dimension must satisfy 1 <= k <= {n}, got {k}"
        )));
    }
    let (values, vectors) = linalg::symmetric_eigen_ascending(l)?;
    if values[0] < -1e-10 {
        return Err(Error::Linalg(format!(
            "laplacian has a negative eigenvalue {}",
            values[0]
        )));
    }
    // gaps inside the selected block, plus the gap at its boundary
    let mut degenerate = false;
    for i in 0..k.saturating_sub(1) {
        if values[i + 1] - values[i] < DEGENERACY_GAP {
            degenerate = true;
        }
    }
    if k < n && values[k] - values[k - 1] < DEGENERACY_GAP {
        degenerate = true;
    }
    let mut u = vec![vec![0.0; k]; n];
    let mut zero_rows = Vec::new();
    for i in 0..n {
        let mut norm_sq = 0.0;
        for j in 0..k {
            let v = vectors[[i, j]];
            u[i][j] = v;
            norm_sq += v * v;
        }
        if norm_sq > 0.0 {
            let norm = norm_sq.sqrt();
            for v in &mut u[i] {
                *v /= norm;
            }
        } else {
            zero_rows.push(i);
        }
    }
    Ok(SpectralEmbedding {
        u,
        eigenvalues: values[..k].to_vec(),
        k,
        zero_rows,
        degenerate,
    })
}

/// Euclidean distance between the embedding rows of nodes `i` and `j`.
pub fn embedding_distance(emb: &SpectralEmbedding, i: usize, j: usize) -> Result<f64> {
    let n = emb.num_nodes();
    if i >= n || j >= n {
        return Err(Error::UnknownNode(format!("node index {} of {n}", i.max(j))));
    }
    let d = emb.u[i]
        .iter()
        .zip(emb.u[j].iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(d)
}

/// How pairwise node distances aggregate into an environment distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Mean,
    Min,
}

/// A candidate environment with its aggregated distance to the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEnv {
    pub name: String,
    pub distance: f64,
}

/// Sorts candidate environments (named node sets) by aggregated pairwise
/// embedding distance to the test nodes, ascending. Ties keep input
/// order.
pub fn rank_environments(
    graph: &CommunityGraph,
    emb: &SpectralEmbedding,
    test_nodes: &[String],
    candidates: &[(String, Vec<String>)],
    aggregation: Aggregation,
) -> Result<Vec<RankedEnv>> {
    if test_nodes.is_empty() {
        return Err(Error::EmptyInput("rank_environments needs test nodes"));
    }
    let test_idx: Vec<usize> = test_nodes
        .iter()
        .map(|n| graph.index_of(n))
        .collect::<Result<_>>()?;
    let mut ranked = Vec::with_capacity(candidates.len());
    for (name, members) in candidates {
        if members.is_empty() {
            return Err(Error::EmptyInput("candidate environment has no nodes"));
        }
        let member_idx: Vec<usize> = members
            .iter()
            .map(|n| graph.index_of(n))
            .collect::<Result<_>>()?;
        let mut acc: f64 = match aggregation {
            Aggregation::Mean => 0.0,
            Aggregation::Min => f64::INFINITY,
        };
        for &m in &member_idx {
            for &t in &test_idx {
                let d = embedding_distance(emb, m, t)?;
                match aggregation {
                    Aggregation::Mean => acc += d,
                    Aggregation::Min => acc = acc.min(d),
                }
            }
        }
        if aggregation == Aggregation::Mean {
            acc /= (member_idx.len() * test_idx.len()) as f64;
        }
        ranked.push(RankedEnv {
            name: name.clone(),
            distance: acc,
        });
    }
    // stable sort keeps input order on ties
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(ranked)
}

#[cfg(test)]
mod tests;
