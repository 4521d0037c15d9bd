use nalgebra::DMatrix;
use rayon::prelude::*;

use super::LabelVector;
use crate::error::{check_dim, Error, Result};

/// Neighbor lists of a k-nearest-neighbor graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnnGraph {
    k: usize,
    neighbors: Vec<Vec<usize>>,
    symmetric: bool,
}

impl KnnGraph {
    /// Wraps explicit neighbor lists. Self-edges and out-of-range indices
    /// are rejected; lists are kept in the given order.
    pub fn from_lists(neighbors: Vec<Vec<usize>>, symmetric: bool) -> Result<Self> {
        let n = neighbors.len();
        for (i, list) in neighbors.iter().enumerate() {
            if list.iter().any(|&j| j == i || j >= n) {
                return Err(Error::InvalidArgument(format!("bad neighbor list for node {i}")));
            }
        }
        let k = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            k,
            neighbors,
            symmetric,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Union of each edge with its reverse; lists become sorted.
    pub fn symmetrize(&self) -> Self {
        let mut adj: Vec<Vec<usize>> = self.neighbors.clone();
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                adj[j].push(i);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            k: self.k,
            neighbors: adj,
            symmetric: true,
        }
    }
}

/// Exact Euclidean k-nearest neighbors of the rows of `x`. Equal distances
/// are broken by the smaller index.
pub fn knn_graph(x: &DMatrix<f64>, k: usize) -> Result<KnnGraph> {
    let n = x.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..{n}")));
    }
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let neighbors = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (s, j)
                })
                .collect();
            d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut top: Vec<(f64, usize)> = d[..k].to_vec();
            top.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            top.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    Ok(KnnGraph {
        k,
        neighbors,
        symmetric: false,
    })
}

fn proportions(list: &[usize], labels: &[usize], k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k];
    for &j in list {
        c[labels[j]] += 1.0;
    }
    let total = list.len() as f64;
    c.iter_mut().for_each(|v| *v /= total);
    c
}

fn check_graph(g: &KnnGraph, labels: &LabelVector) -> Result<()> {
    check_dim(g.n_nodes(), labels.len(), "label count")?;
    if let Some(i) = (0..g.n_nodes()).find(|&i| g.neighbors(i).is_empty()) {
        return Err(Error::InvalidArgument(format!("node {i} has no neighbors")));
    }
    Ok(())
}

/// Mean normalized inverse Simpson index `(s - 1)/(B - 1)` of neighbor
/// batch composition; 1 means perfectly mixed neighborhoods.
pub fn ilisi(g: &KnnGraph, batch: &LabelVector) -> Result<f64> {
    let b = batch.n_classes();
    if b < 2 {
        return Err(Error::InvalidArgument("iLISI needs at least two batches".into()));
    }
    check_graph(g, batch)?;
    let total: f64 = (0..g.n_nodes())
        .map(|i| {
            let p = proportions(g.neighbors(i), batch.labels(), b);
            let s = 1.0 / p.iter().map(|v| v * v).sum::<f64>();
            (s - 1.0) / (b as f64 - 1.0)
        })
        .sum();
    Ok(total / g.n_nodes() as f64)
}

/// Mean Shannon entropy (nats) of neighbor cell-type composition.
pub fn knet_entropy(g: &KnnGraph, celltype: &LabelVector) -> Result<f64> {
    check_graph(g, celltype)?;
    let k = celltype.n_classes();
    let total: f64 = (0..g.n_nodes())
        .map(|i| {
            proportions(g.neighbors(i), celltype.labels(), k)
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum::<f64>()
        })
        .sum();
    Ok(total / g.n_nodes() as f64)
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// For each cell type, the fraction of its cells in the largest connected
/// component of the subgraph induced by that type; averaged over types.
/// Edges are treated as undirected.
pub fn graph_connectivity(g: &KnnGraph, celltype: &LabelVector) -> Result<f64> {
    check_dim(g.n_nodes(), celltype.len(), "label count")?;
    let labels = celltype.labels();
    let mut uf = UnionFind::new(g.n_nodes());
    for i in 0..g.n_nodes() {
        for &j in g.neighbors(i) {
            if labels[i] == labels[j] {
                uf.union(i, j);
            }
        }
    }
    let k = celltype.n_classes();
    let mut largest = vec![0usize; k];
    for i in 0..g.n_nodes() {
        let root = uf.find(i);
        if root == i {
            largest[labels[i]] = largest[labels[i]].max(uf.size[i]);
        }
    }
    let counts = celltype.counts();
    Ok((0..k).map(|t| largest[t] as f64 / counts[t] as f64).sum::<f64>() / k as f64)
}
