//! Coupling graph of the control operators in an eigenbasis.

use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::operator::ControlHamiltonian;
use crate::spectrum::SpectralPoint;
use crate::tolerances::Tolerances;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub j: usize,
    pub k: usize,
    /// `max_l |<phi_j, H_l phi_k>|`
    pub weight: f64,
}

/// Undirected graph on levels `1..=n`; an edge `(j, k)`, `j < k`, exists when
/// some control operator couples the two eigenvectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingGraph {
    pub nodes: usize,
    pub edges: Vec<Edge>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Connectivity {
    pub connected: bool,
    /// Components as sorted lists of 1-based nodes, ordered by smallest node.
    pub components: Vec<Vec<usize>>,
}

/// Matrix elements of every `H_l` in the frame of `sp`.
pub fn build_graph(h: &ControlHamiltonian, sp: &SpectralPoint, tol: &Tolerances) -> Result<CouplingGraph> {
    let n = sp.dim();
    if n != h.dim() {
        return Err(CoreError::DimensionMismatch { expected: h.dim(), found: n });
    }
    let tau_deg = tol.degeneracy_threshold(sp.diameter());
    let (level, gap) = sp.min_gap();
    if gap <= tau_deg {
        return Err(CoreError::DegenerateSpectrum { level, gap });
    }
    let threshold = tol.edge * h.max_control_norm();
    let mut weights = vec![0.0f64; n * n];
    for hl in h.controlled() {
        let m = sp.frame.adjoint() * hl.matrix() * &sp.frame;
        for j in 0..n {
            for k in j + 1..n {
                let w = &mut weights[j * n + k];
                *w = w.max(m[(j, k)].norm());
            }
        }
    }
    let edges = (0..n)
        .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
        .filter(|&(j, k)| weights[j * n + k] > threshold)
        .map(|(j, k)| Edge {
            j: j + 1,
            k: k + 1,
            weight: weights[j * n + k],
        })
        .collect();
    Ok(CouplingGraph { nodes: n, edges, threshold })
}

pub fn is_connected(g: &CouplingGraph) -> Connectivity {
    let n = g.nodes;
    let mut uf = UnionFind::<usize>::new(n);
    for e in &g.edges {
        uf.union(e.j - 1, e.k - 1);
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut index_of_root = vec![usize::MAX; n];
    for v in 0..n {
        let r = uf.find_mut(v);
        if index_of_root[r] == usize::MAX {
            index_of_root[r] = components.len();
            components.push(Vec::new());
        }
        components[index_of_root[r]].push(v + 1);
    }
    Connectivity {
        connected: components.len() <= 1,
        components,
    }
}
