//! Weighted undirected multigraphs and their matrix representations.
//!
//! Vertices are stored with compact 0-based indices; the original ids are
//! kept as labels. Every stored edge is oriented so that its lower-indexed
//! endpoint receives the positive incidence entry.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::error::{NetError, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    /// Lower endpoint (positive sign in B).
    pub i: usize,
    /// Upper endpoint (negative sign in B).
    pub j: usize,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    labels: Vec<String>,
    /// `swapped[e]` records that the input row listed the endpoints as (j, i).
    swapped: Vec<bool>,
}

impl Graph {
    /// Builds a graph on vertices `0..n` from index pairs. Vertices without
    /// edges are allowed here; they show up as singleton components.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if edges.is_empty() {
            return Err(NetError::EmptyEdgeList);
        }
        let mut out = Vec::with_capacity(edges.len());
        let mut swapped = Vec::with_capacity(edges.len());
        for (row, &(a, b, w)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(NetError::InvalidParameter(format!(
                    "edge {} references vertex {} outside 0..{n}",
                    row + 1,
                    a.max(b)
                )));
            }
            if a == b {
                return Err(NetError::LoopEdge {
                    row: row + 1,
                    vertex: a.to_string(),
                });
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(NetError::NonPositiveWeight { row: row + 1, weight: w });
            }
            out.push(Edge {
                i: a.min(b),
                j: a.max(b),
                w,
            });
            swapped.push(a > b);
        }
        Ok(Self {
            n,
            edges: out,
            labels: (1..=n).map(|k| k.to_string()).collect(),
            swapped,
        })
    }

    /// Same as [`Graph::from_edges`] with unit weights.
    pub fn unweighted(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let e: Vec<_> = pairs.iter().map(|&(a, b)| (a, b, 1.0)).collect();
        Self::from_edges(n, &e)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn swapped(&self) -> &[bool] {
        &self.swapped
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.n);
        self.labels = labels;
        self
    }

    pub fn degrees(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n);
        for e in &self.edges {
            d[e.i] += e.w;
            d[e.j] += e.w;
        }
        d
    }

    /// Total degree Σ d_i, i.e. twice the total edge weight.
    pub fn volume(&self) -> f64 {
        2.0 * self.edges.iter().map(|e| e.w).sum::<f64>()
    }

    pub fn matrices(&self) -> GraphMatrices {
        GraphMatrices::new(self)
    }

    pub fn neighbors(&self) -> NeighborIndex {
        NeighborIndex::new(self)
    }

    pub fn is_connected(&self) -> bool {
        connected_components(self).len() == 1
    }

    /// Errors unless the graph is connected and free of isolated vertices.
    pub fn require_connected(&self) -> Result<()> {
        let comps = connected_components(self);
        if comps.len() > 1 {
            if let Some(c) = comps.iter().find(|c| c.len() == 1) {
                return Err(NetError::IsolatedVertex { vertex: c[0] });
            }
            return Err(NetError::Disconnected {
                components: comps.len(),
            });
        }
        Ok(())
    }
}

/// Builds a graph from rows of (id, id, weight) with arbitrary string ids.
///
/// Ids are compacted to `0..n`: numerically when every id parses as an
/// integer, lexicographically otherwise. Row numbers in errors are 1-based.
pub fn build_graph<S: AsRef<str>>(rows: &[(S, S, f64)]) -> Result<Graph> {
    if rows.is_empty() {
        return Err(NetError::EmptyEdgeList);
    }
    for (row, (a, b, w)) in rows.iter().enumerate() {
        if a.as_ref() == b.as_ref() {
            return Err(NetError::LoopEdge {
                row: row + 1,
                vertex: a.as_ref().to_string(),
            });
        }
        if !(*w > 0.0) || !w.is_finite() {
            return Err(NetError::NonPositiveWeight { row: row + 1, weight: *w });
        }
    }
    let ids: Vec<&str> = rows
        .iter()
        .flat_map(|(a, b, _)| [a.as_ref(), b.as_ref()])
        .collect();
    let labels = compact_ids(&ids);
    let index: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(k, s)| (s.as_str(), k))
        .collect();
    let edges: Vec<_> = rows
        .iter()
        .map(|(a, b, w)| (index[a.as_ref()], index[b.as_ref()], *w))
        .collect();
    Ok(Graph::from_edges(labels.len(), &edges)?.with_labels(labels))
}

/// Sorted distinct ids: numeric order if all ids are integers.
pub(crate) fn compact_ids(ids: &[&str]) -> Vec<String> {
    let mut uniq: Vec<&str> = ids.to_vec();
    if uniq.iter().all(|s| s.parse::<i64>().is_ok()) {
        uniq.sort_by_key(|s| s.parse::<i64>().unwrap());
        uniq.dedup_by_key(|s| s.parse::<i64>().unwrap());
    } else {
        uniq.sort_unstable();
        uniq.dedup();
    }
    uniq.into_iter().map(str::to_string).collect()
}

/// B, A, D and L in sparse form.
#[derive(Clone, Debug)]
pub struct GraphMatrices {
    pub n: usize,
    pub m: usize,
    /// m×n oriented incidence with entries ±√w_e.
    pub b: CsrMatrix,
    pub a: CsrMatrix,
    pub d: DVector<f64>,
    pub l: CsrMatrix,
}

impl GraphMatrices {
    fn new(g: &Graph) -> Self {
        let (n, m) = (g.n(), g.m());
        let mut bt = Vec::with_capacity(2 * m);
        let mut at = Vec::with_capacity(2 * m);
        for (e, edge) in g.edges().iter().enumerate() {
            let s = edge.w.sqrt();
            bt.push((e, edge.i, s));
            bt.push((e, edge.j, -s));
            at.push((edge.i, edge.j, edge.w));
            at.push((edge.j, edge.i, edge.w));
        }
        let b = CsrMatrix::from_triplets(m, n, &bt);
        let a = CsrMatrix::from_triplets(n, n, &at);
        let d = g.degrees();
        let mut lt: Vec<_> = a.triplets().map(|(r, c, v)| (r, c, -v)).collect();
        lt.extend((0..n).map(|i| (i, i, d[i])));
        let l = CsrMatrix::from_triplets(n, n, &lt);
        Self { n, m, b, a, d, l }
    }

    /// Copy with the sign of every incidence row `e` with `flips[e]` reversed.
    pub fn reoriented(&self, flips: &[bool]) -> Self {
        assert_eq!(flips.len(), self.m);
        let t: Vec<_> = self
            .b
            .triplets()
            .map(|(r, c, v)| (r, c, if flips[r] { -v } else { v }))
            .collect();
        Self {
            b: CsrMatrix::from_triplets(self.m, self.n, &t),
            ..self.clone()
        }
    }

    pub fn volume(&self) -> f64 {
        self.d.sum()
    }

    pub fn laplacian_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.l.mul_vec(x)
    }
}

/// Per-vertex neighbor lists with summed adjacency weights.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    lists: Vec<Vec<(usize, f64)>>,
}

impl NeighborIndex {
    fn new(g: &Graph) -> Self {
        let a = g.matrices().a;
        Self {
            lists: (0..g.n()).map(|i| a.row(i).collect()).collect(),
        }
    }

    /// Neighbors of `i` with (A)_ij, sorted by neighbor index.
    pub fn of(&self, i: usize) -> &[(usize, f64)] {
        &self.lists[i]
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Vertex partition into components, largest first. Ties go to the component
/// holding the smallest vertex index; each component is sorted.
pub fn connected_components(g: &Graph) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(g.n());
    for e in g.edges() {
        uf.union(e.i, e.j);
    }
    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    for v in 0..g.n() {
        let r = uf.find(v);
        by_root.entry(r).or_default().push(v);
    }
    let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

/// Induced subgraph on a component with maps back to the parent graph.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: Graph,
    /// `vertex_map[new] = old`
    pub vertex_map: Vec<usize>,
    /// `edge_map[new] = old`
    pub edge_map: Vec<usize>,
}

pub fn largest_component(g: &Graph) -> Subgraph {
    let comps = connected_components(g);
    let keep = &comps[0];
    let mut new_id = vec![usize::MAX; g.n()];
    for (k, &v) in keep.iter().enumerate() {
        new_id[v] = k;
    }
    let mut edges = Vec::new();
    let mut edge_map = Vec::new();
    let mut swapped = Vec::new();
    for (e, edge) in g.edges().iter().enumerate() {
        if new_id[edge.i] != usize::MAX {
            edges.push(Edge {
                i: new_id[edge.i],
                j: new_id[edge.j],
                w: edge.w,
            });
            edge_map.push(e);
            swapped.push(g.swapped[e]);
        }
    }
    let graph = Graph {
        n: keep.len(),
        edges,
        labels: keep.iter().map(|&v| g.labels[v].clone()).collect(),
        swapped,
    };
    Subgraph {
        graph,
        vertex_map: keep.clone(),
        edge_map,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn rows(pairs: &[(&str, &str)]) -> Vec<(String, String, f64)> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string(), 1.0))
            .collect()
    }

    #[test]
    fn star_degrees() {
        let r: Vec<_> = (2..=8).map(|j| ("1".to_string(), j.to_string(), 1.0)).collect();
        let g = build_graph(&r).unwrap();
        assert_eq!(g.degrees().as_slice(), &[7.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn repeated_edge_is_a_multigraph() {
        let g = build_graph(&rows(&[("1", "2"), ("1", "2")])).unwrap();
        assert_eq!(g.m(), 2);
        assert_eq!(g.matrices().a.get(0, 1), 2.0);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = build_graph(&rows(&[("1", "2"), ("3", "3")])).unwrap_err();
        assert!(matches!(err, NetError::LoopEdge { row: 2, .. }));
        assert!(err.to_string().contains("loop edge"));
        let err = build_graph(&[("1", "2", 0.0)]).unwrap_err();
        assert!(matches!(err, NetError::NonPositiveWeight { row: 1, .. }));
        let empty: Vec<(String, String, f64)> = vec![];
        assert!(build_graph(&empty).unwrap_err().to_string().contains("m > 0 required"));
    }

    #[test]
    fn string_ids_are_compacted() {
        let g = build_graph(&rows(&[("bob", "alice"), ("carol", "bob")])).unwrap();
        assert_eq!(g.labels(), &["alice", "bob", "carol"]);
        assert_eq!(g.edges()[0], Edge { i: 0, j: 1, w: 1.0 });
        assert_eq!(g.swapped(), &[true, true]);
        let g = build_graph(&rows(&[("10", "9")])).unwrap();
        assert_eq!(g.labels(), &["9", "10"]);
    }

    #[test]
    fn single_weighted_edge() {
        let g = Graph::from_edges(2, &[(0, 1, 4.0)]).unwrap();
        let gm = g.matrices();
        assert_eq!(gm.b.to_dense(), DMatrix::from_row_slice(1, 2, &[2.0, -2.0]));
        assert_eq!(gm.l.to_dense(), DMatrix::from_row_slice(2, 2, &[4.0, -4.0, -4.0, 4.0]));
    }

    #[test]
    fn star3_laplacian() {
        let g = Graph::unweighted(3, &[(0, 1), (0, 2)]).unwrap();
        let l = g.matrices().l.to_dense();
        let expect = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 1.0, 0.0, -1.0, 0.0, 1.0]);
        assert_eq!(l, expect);
    }

    #[test]
    fn components_examples() {
        let g = Graph::unweighted(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(connected_components(&g).len(), 2);
        let g = Graph::unweighted(5, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(connected_components(&g), vec![vec![0, 1, 2], vec![3], vec![4]]);
        assert!(matches!(g.require_connected(), Err(NetError::IsolatedVertex { vertex: 3 })));
        let g = Graph::unweighted(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(connected_components(&g).len(), 1);
    }

    #[test]
    fn largest_component_examples() {
        let g = Graph::unweighted(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let s = largest_component(&g);
        assert_eq!(s.vertex_map, vec![0, 1, 2, 3]);
        assert_eq!(s.graph, g);

        let g = Graph::unweighted(5, &[(3, 4), (0, 1), (1, 2)]).unwrap();
        let s = largest_component(&g);
        assert_eq!(s.graph.n(), 3);
        assert_eq!(s.vertex_map, vec![0, 1, 2]);
        assert_eq!(s.edge_map, vec![1, 2]);

        // tie: two components of size 2, the one holding vertex 0 wins
        let g = Graph::unweighted(4, &[(2, 3), (0, 1)]).unwrap();
        assert_eq!(largest_component(&g).vertex_map, vec![0, 1]);
    }

    fn random_graph() -> impl Strategy<Value = Graph> {
        (2usize..30).prop_flat_map(|n| {
            prop::collection::vec((0..n, 0..n, 0.1f64..5.0), 1..60).prop_filter_map(
                "needs a non-loop edge",
                move |raw| {
                    let e: Vec<_> = raw.into_iter().filter(|(a, b, _)| a != b).collect();
                    Graph::from_edges(n, &e).ok()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn incidence_identities(g in random_graph()) {
            let gm = g.matrices();
            let b = gm.b.to_dense();
            let l = gm.l.to_dense();
            let da = DMatrix::from_diagonal(&gm.d) - gm.a.to_dense();
            let scale = l.norm().max(1.0);
            prop_assert!((b.transpose() * &b - &l).norm() <= 1e-12 * scale);
            prop_assert!((&l - da).norm() <= 1e-12 * scale);
            let rows = &b * DVector::from_element(g.n(), 1.0);
            prop_assert!(rows.amax() <= 1e-12);
            for i in 0..g.n() {
                prop_assert!((b.column(i).norm_squared() - gm.d[i]).abs() <= 1e-12 * scale);
            }
            prop_assert!(gm.a.diagonal().amax() == 0.0);
        }

        #[test]
        fn neighbor_index_symmetric(g in random_graph()) {
            let nb = g.neighbors();
            for i in 0..g.n() {
                for &(j, w) in nb.of(i) {
                    prop_assert!(nb.of(j).iter().any(|&(k, v)| k == i && v == w));
                }
            }
        }

        #[test]
        fn largest_component_idempotent(g in random_graph()) {
            let once = largest_component(&g);
            let twice = largest_component(&once.graph);
            prop_assert_eq!(&twice.graph, &once.graph);
            prop_assert!(once.graph.is_connected());
            prop_assert_eq!(twice.vertex_map, (0..once.graph.n()).collect::<Vec<_>>());
        }
    }
}
