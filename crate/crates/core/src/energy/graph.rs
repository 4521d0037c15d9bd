use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use super::ising::IsingProblem;
use crate::error::{check_dim, Error, Result};

/// Simple undirected unweighted graph. Edges are stored as `(min, max)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n_vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n_vertices: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {a}")));
            }
            if a >= n_vertices || b >= n_vertices {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a},{b}) out of range for {n_vertices} vertices"
                )));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({},{})", e.0, e.1)));
            }
            out.push(e);
        }
        Ok(Self { n_vertices, edges: out })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_vertices];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    /// Edge-list text: `N M` then one `i j` line per edge.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n_vertices, self.edges.len());
        for (a, b) in &self.edges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(Error::Empty("graph text"))?;
        let nums = parse_pair(header, hl + 1)?;
        let (n, m) = nums;
        let mut edges = Vec::with_capacity(m);
        for (idx, line) in lines {
            edges.push(parse_pair(line, idx + 1)?);
        }
        if edges.len() != m {
            return Err(Error::Parse {
                line: hl + 1,
                msg: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        Self::new(n, edges)
    }
}

fn parse_pair(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 2 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected two integers, got `{line}`"),
        });
    }
    let p = |s: &str| {
        s.parse::<usize>().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad integer `{s}`: {e}"),
        })
    };
    Ok((p(toks[0])?, p(toks[1])?))
}

/// Möbius ladder on `n` vertices: the `n`-cycle plus chords `{i, i + n/2}`.
pub fn mobius_ladder(n: usize) -> Result<Graph> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "mobius ladder needs an even vertex count >= 4, got {n}"
        )));
    }
    let cycle = (0..n).map(|i| (i, (i + 1) % n));
    let rungs = (0..n / 2).map(|i| (i, i + n / 2));
    Graph::new(n, cycle.chain(rungs))
}

/// Max-cut as Ising minimization: `J_ij = -1` on edges, no field, so
/// `H(σ) = Σ_edges σ_i σ_j` and `cut = (|E| - H) / 2`.
pub fn maxcut_to_ising(g: &Graph) -> IsingProblem {
    let n = g.n_vertices();
    let mut j = DMatrix::zeros(n, n);
    for &(a, b) in g.edges() {
        j[(a, b)] = -1.0;
        j[(b, a)] = -1.0;
    }
    IsingProblem::new(j, DVector::zeros(n), 1.0).expect("graph couplings are valid")
}

/// Number of edges whose endpoints carry different spins.
pub fn cut_value(g: &Graph, sigma: &[i8]) -> Result<usize> {
    check_dim(g.n_vertices(), sigma.len(), "spin vector length")?;
    Ok(g.edges().iter().filter(|&&(a, b)| sigma[a] != sigma[b]).count())
}

/// Cut size implied by the energy of [`maxcut_to_ising`].
pub fn cut_from_energy(g: &Graph, energy: f64) -> usize {
    ((g.edges().len() as f64 - energy) / 2.0).round() as usize
}

/// Exhaustive max-cut; vertex 0 is pinned to `+1` by symmetry.
pub fn brute_force_maxcut(g: &Graph) -> Result<usize> {
    let n = g.n_vertices();
    if n > 30 {
        return Err(Error::TooLarge { n, cap: 30 });
    }
    if n <= 1 {
        return Ok(0);
    }
    let mut best = 0;
    for s in 0..(1u64 << (n - 1)) {
        let side = |v: usize| if v == 0 { 0 } else { (s >> (v - 1)) & 1 };
        let c = g.edges().iter().filter(|&&(a, b)| side(a) != side(b)).count();
        best = best.max(c);
    }
    Ok(best)
}
