//! Topology matrices, RUAV graphs and their connectivity.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, DenseMatrix};
use crate::scalar::{dist3, Scalar, Vec3};

/// Positions of the remaining UAVs, ordered by strictly ascending UAV index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "TopologyRepr<T>",
    into = "TopologyRepr<T>",
    bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + serde::de::DeserializeOwned")
)]
pub struct TopologyMatrix<T> {
    indices: Vec<usize>,
    positions: Vec<Vec3<T>>,
}

#[derive(Serialize, Deserialize)]
struct TopologyRow<T> {
    index: usize,
    position: Vec3<T>,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr<T> {
    rows: Vec<TopologyRow<T>>,
}

impl<T: Scalar> TryFrom<TopologyRepr<T>> for TopologyMatrix<T> {
    type Error = Error;

    fn try_from(r: TopologyRepr<T>) -> Result<Self> {
        Self::new(r.rows.into_iter().map(|row| (row.index, row.position)).collect())
    }
}

impl<T: Scalar> From<TopologyMatrix<T>> for TopologyRepr<T> {
    fn from(t: TopologyMatrix<T>) -> Self {
        TopologyRepr {
            rows: t
                .indices
                .into_iter()
                .zip(t.positions)
                .map(|(index, position)| TopologyRow { index, position })
                .collect(),
        }
    }
}

impl<T: Scalar> TopologyMatrix<T> {
    /// Builds a topology from `(uav_index, position)` rows. Indices must be positive and
    /// strictly ascending, positions finite.
    pub fn new(rows: Vec<(usize, Vec3<T>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Degenerate("topology needs at least one row".into()));
        }
        for w in rows.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Contract(format!(
                    "UAV indices must be strictly ascending ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if rows[0].0 == 0 {
            return Err(Error::Contract("UAV indices start at 1".into()));
        }
        if rows.iter().any(|(_, p)| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Contract("non-finite position".into()));
        }
        let (indices, positions) = rows.into_iter().unzip();
        Ok(Self { indices, positions })
    }

    /// Rows numbered `1..=n` in the given order.
    pub fn from_positions(positions: Vec<Vec3<T>>) -> Result<Self> {
        Self::new(positions.into_iter().enumerate().map(|(i, p)| (i + 1, p)).collect())
    }

    /// Same index set with new positions.
    pub fn with_positions(&self, positions: Vec<Vec3<T>>) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::Contract("position count does not match index set".into()));
        }
        Ok(Self {
            indices: self.indices.clone(),
            positions,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn positions(&self) -> &[Vec3<T>] {
        &self.positions
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &Vec3<T>)> {
        self.indices.iter().copied().zip(self.positions.iter())
    }

    /// Row of a UAV index, if present.
    pub fn row_of(&self, uav: usize) -> Option<usize> {
        self.indices.binary_search(&uav).ok()
    }

    pub fn position_of(&self, uav: usize) -> Option<&Vec3<T>> {
        self.row_of(uav).map(|r| &self.positions[r])
    }

    pub fn distance(&self, a: usize, b: usize) -> T {
        dist3(&self.positions[a], &self.positions[b])
    }

    /// `n x 3` position block.
    pub fn to_matrix(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.len(), 3, |i, k| self.positions[i][k])
    }

    pub fn from_matrix(&self, m: &DenseMatrix<T>) -> Result<Self> {
        if m.rows() != self.len() || m.cols() != 3 {
            return Err(Error::Contract("position block shape mismatch".into()));
        }
        self.with_positions((0..m.rows()).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect())
    }

    /// Drops the given UAV indices.
    pub fn without(&self, removed: &std::collections::BTreeSet<usize>) -> Option<Self> {
        let rows: Vec<_> = self
            .rows()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(i, p)| (i, *p))
            .collect();
        if rows.is_empty() {
            None
        } else {
            Some(Self {
                indices: rows.iter().map(|r| r.0).collect(),
                positions: rows.iter().map(|r| r.1).collect(),
            })
        }
    }

    /// All pairwise distances `(a, b, d)` with `a < b` (row positions).
    pub fn pairwise(&self) -> Vec<(usize, usize, T)> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for a in 0..n {
            for b in (a + 1)..n {
                out.push((a, b, self.distance(a, b)));
            }
        }
        out
    }
}

impl TopologyMatrix<f64> {
    /// CSV with header `index,x,y,z`, meters.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "x", "y", "z"])?;
        for (i, p) in self.rows() {
            wr.write_record([i.to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let expected = ["index", "x", "y", "z"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::Contract(format!("expected CSV header index,x,y,z, got {headers:?}")));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|e| Error::Contract(format!("bad number {:?}: {e}", &rec[k])))
            };
            let index = rec[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Contract(format!("bad index {:?}: {e}", &rec[0])))?;
            rows.push((index, [parse(1)?, parse(2)?, parse(3)?]));
        }
        Self::new(rows)
    }
}

/// Arithmetic mean of the positions.
pub fn centroid<T: Scalar>(topology: &TopologyMatrix<T>) -> Vec3<T> {
    centroid_of(topology.positions())
}

pub fn centroid_of<T: Scalar>(positions: &[Vec3<T>]) -> Vec3<T> {
    let n = T::from_count(positions.len().max(1));
    let mut c = [T::zero(); 3];
    for p in positions {
        for k in 0..3 {
            c[k] = c[k] + p[k];
        }
    }
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Disjoint-set forest with path compression and union by rank.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            components: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Returns true when two distinct sets were merged.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.rank[ra] < self.rank[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        if self.rank[ra] == self.rank[rb] {
            self.rank[ra] = self.rank[ra].saturating_add(1);
        }
        self.components -= 1;
        true
    }

    pub fn components(&self) -> usize {
        self.components
    }
}

/// Number of connected components of the graph induced by `linked` on pairwise distances,
/// without materializing the adjacency.
pub fn cluster_count_with<T: Scalar>(topology: &TopologyMatrix<T>, linked: impl Fn(T) -> bool) -> usize {
    let n = topology.len();
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        for b in (a + 1)..n {
            if uf.components() == 1 {
                return 1;
            }
            if linked(topology.distance(a, b)) {
                uf.union(a, b);
            }
        }
    }
    uf.components()
}

/// Undirected 0/1 graph over a topology.
#[derive(Clone, Debug, PartialEq)]
pub struct RuavGraph<T> {
    topology: TopologyMatrix<T>,
    adjacency: Vec<bool>,
}

/// Edge iff `j != j'` and `predicate(distance)`.
pub fn build_graph<T: Scalar>(topology: TopologyMatrix<T>, predicate: impl Fn(T) -> bool) -> RuavGraph<T> {
    let n = topology.len();
    let mut adjacency = vec![false; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            if predicate(topology.distance(a, b)) {
                adjacency[a * n + b] = true;
                adjacency[b * n + a] = true;
            }
        }
    }
    RuavGraph { topology, adjacency }
}

impl<T: Scalar> RuavGraph<T> {
    pub fn topology(&self) -> &TopologyMatrix<T> {
        &self.topology
    }

    pub fn into_topology(self) -> TopologyMatrix<T> {
        self.topology
    }

    pub fn len(&self) -> usize {
        self.topology.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topology.is_empty()
    }

    #[inline]
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.len() + b]
    }

    pub fn degree(&self, a: usize) -> usize {
        let n = self.len();
        self.adjacency[a * n..(a + 1) * n].iter().filter(|&&e| e).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.len()).map(|a| self.degree(a)).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count() / 2
    }

    pub fn adjacency_matrix(&self) -> DenseMatrix<T> {
        let n = self.len();
        DenseMatrix::from_fn(n, n, |a, b| if self.has_edge(a, b) { T::one() } else { T::zero() })
    }

    /// `L = D - A` with exact integer entries.
    pub fn laplacian_int(&self) -> Vec<Vec<i64>> {
        let n = self.len();
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        if a == b {
                            self.degree(a) as i64
                        } else if self.has_edge(a, b) {
                            -1
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Component partition as UAV index sets, each sorted, ordered by smallest member.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut uf = UnionFind::new(n);
        for a in 0..n {
            for b in (a + 1)..n {
                if self.has_edge(a, b) {
                    uf.union(a, b);
                }
            }
        }
        let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        let mut order = Vec::new();
        for a in 0..n {
            let r = uf.find(a);
            let entry = by_root.entry(r).or_default();
            if entry.is_empty() {
                order.push(r);
            }
            entry.push(self.topology.indices()[a]);
        }
        order.into_iter().map(|r| by_root.remove(&r).unwrap_or_default()).collect()
    }

    pub fn cluster_count(&self) -> usize {
        let n = self.len();
        let mut uf = UnionFind::new(n);
        for a in 0..n {
            for b in (a + 1)..n {
                if self.has_edge(a, b) {
                    uf.union(a, b);
                }
            }
        }
        uf.components()
    }

    pub fn is_connected(&self) -> bool {
        self.cluster_count() == 1
    }
}

/// Graph Laplacian `L = D - A` as a scalar matrix.
pub fn laplacian<T: Scalar>(graph: &RuavGraph<T>) -> DenseMatrix<T> {
    let n = graph.len();
    let li = graph.laplacian_int();
    DenseMatrix::from_fn(n, n, |a, b| T::from_i64(li[a][b]).expect("small integer"))
}

pub fn cluster_count<T: Scalar>(graph: &RuavGraph<T>) -> usize {
    graph.cluster_count()
}

pub fn clusters<T: Scalar>(graph: &RuavGraph<T>) -> Vec<Vec<usize>> {
    graph.clusters()
}

/// Number of eigenvalues of the symmetric matrix `l` with `|lambda| < tol`.
pub fn zero_eig_multiplicity<T: Scalar>(l: &DenseMatrix<T>, tol: T) -> Result<usize> {
    if !(tol > T::zero()) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let eig = symmetric_eigenvalues(l)?;
    Ok(eig.iter().filter(|v| v.abs() < tol).count())
}

/// Zero tolerance used for Laplacians: `1e-8 * max(1, ||L||_inf)`.
pub fn laplacian_zero_tol<T: Scalar>(l: &DenseMatrix<T>) -> T {
    T::lit(1e-8) * crate::linalg::infinity_norm(l).max(T::one())
}
