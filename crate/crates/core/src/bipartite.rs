//! Two-way matched data: the stacked graph with B = (B₁, −B₂) and the
//! weighted one-mode projection onto the second vertex type.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{NetError, Result};
use crate::graph::{compact_ids, Graph};
use crate::sparse::CsrMatrix;

/// One matched observation with string ids.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedRow {
    pub i: String,
    pub j: String,
    pub y: f64,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteData {
    pub n1: usize,
    pub n2: usize,
    /// Type-1 endpoint of each row.
    pub rows_i: Vec<usize>,
    /// Type-2 endpoint of each row.
    pub rows_j: Vec<usize>,
    pub y: DVector<f64>,
    /// m×p covariates.
    pub x: DMatrix<f64>,
    pub labels1: Vec<String>,
    pub labels2: Vec<String>,
}

/// Compacts the two id namespaces separately. Ids are allowed to coincide
/// across types.
pub fn build_bipartite(rows: &[MatchedRow]) -> Result<BipartiteData> {
    if rows.is_empty() {
        return Err(NetError::EmptyInput);
    }
    let p = rows[0].x.len();
    for (k, r) in rows.iter().enumerate() {
        if r.x.len() != p {
            return Err(NetError::Parse {
                row: k + 1,
                message: format!("expected {p} covariates, found {}", r.x.len()),
            });
        }
    }
    let ids1: Vec<&str> = rows.iter().map(|r| r.i.as_str()).collect();
    let ids2: Vec<&str> = rows.iter().map(|r| r.j.as_str()).collect();
    let labels1 = compact_ids(&ids1);
    let labels2 = compact_ids(&ids2);
    let idx1: HashMap<&str, usize> = labels1.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let idx2: HashMap<&str, usize> = labels2.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let m = rows.len();
    Ok(BipartiteData {
        n1: labels1.len(),
        n2: labels2.len(),
        rows_i: rows.iter().map(|r| idx1[r.i.as_str()]).collect(),
        rows_j: rows.iter().map(|r| idx2[r.j.as_str()]).collect(),
        y: DVector::from_iterator(m, rows.iter().map(|r| r.y)),
        x: DMatrix::from_fn(m, p, |e, k| rows[e].x[k]),
        labels1,
        labels2,
    })
}

impl BipartiteData {
    /// Builds from compact indices; labels default to 1-based numbers.
    pub fn from_indices(
        n1: usize,
        n2: usize,
        pairs: &[(usize, usize)],
        y: DVector<f64>,
        x: DMatrix<f64>,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(NetError::EmptyInput);
        }
        if y.len() != pairs.len() || x.nrows() != pairs.len() {
            return Err(NetError::Dimension(format!(
                "{} rows but y has {} and X has {}",
                pairs.len(),
                y.len(),
                x.nrows()
            )));
        }
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n1 || j >= n2) {
            return Err(NetError::InvalidParameter(format!("row ({i}, {j}) out of range")));
        }
        Ok(Self {
            n1,
            n2,
            rows_i: pairs.iter().map(|p| p.0).collect(),
            rows_j: pairs.iter().map(|p| p.1).collect(),
            y,
            x,
            labels1: (1..=n1).map(|k| k.to_string()).collect(),
            labels2: (1..=n2).map(|k| k.to_string()).collect(),
        })
    }

    pub fn m(&self) -> usize {
        self.rows_i.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn with_outcomes(mut self, y: DVector<f64>, x: DMatrix<f64>) -> Self {
        assert_eq!(y.len(), self.m());
        assert_eq!(x.nrows(), self.m());
        self.y = y;
        self.x = x;
        self
    }

    /// m×n₁ indicator matrix.
    pub fn b1(&self) -> CsrMatrix {
        let t: Vec<_> = self.rows_i.iter().enumerate().map(|(e, &i)| (e, i, 1.0)).collect();
        CsrMatrix::from_triplets(self.m(), self.n1, &t)
    }

    /// m×n₂ indicator matrix.
    pub fn b2(&self) -> CsrMatrix {
        let t: Vec<_> = self.rows_j.iter().enumerate().map(|(e, &j)| (e, j, 1.0)).collect();
        CsrMatrix::from_triplets(self.m(), self.n2, &t)
    }

    pub fn degrees1(&self) -> Vec<usize> {
        let mut d = vec![0; self.n1];
        for &i in &self.rows_i {
            d[i] += 1;
        }
        d
    }

    pub fn degrees2(&self) -> Vec<usize> {
        let mut d = vec![0; self.n2];
        for &j in &self.rows_j {
            d[j] += 1;
        }
        d
    }

    /// Dense M_{B₁} = I − B₁(B₁′B₁)⁻¹B₁′ (rows sharing a type-1 vertex).
    pub fn m_b1_dense(&self) -> DMatrix<f64> {
        let m = self.m();
        let d = self.degrees1();
        DMatrix::from_fn(m, m, |a, b| {
            let eye = if a == b { 1.0 } else { 0.0 };
            if self.rows_i[a] == self.rows_i[b] {
                eye - 1.0 / d[self.rows_i[a]] as f64
            } else {
                eye
            }
        })
    }

    /// Applies M_{B₁} by demeaning within type-1 groups.
    pub fn demean_by_type1(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.degrees1();
        let mut sums = vec![0.0; self.n1];
        for (e, &i) in self.rows_i.iter().enumerate() {
            sums[i] += v[e];
        }
        DVector::from_fn(self.m(), |e, _| {
            let i = self.rows_i[e];
            v[e] - sums[i] / d[i] as f64
        })
    }

    /// Rows grouped by their type-1 vertex, each group in row order.
    pub fn rows_by_type1(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n1];
        for (e, &i) in self.rows_i.iter().enumerate() {
            groups[i].push(e);
        }
        groups
    }

    /// Stacked graph on n₁ + n₂ vertices: type-1 vertex i is vertex i, type-2
    /// vertex j is vertex n₁ + j. Each row becomes an edge with the positive
    /// sign on the type-1 endpoint, so the incidence matrix is (B₁, −B₂).
    pub fn stack_two_way(&self) -> Result<StackedGraph> {
        let edges: Vec<_> = self
            .rows_i
            .iter()
            .zip(&self.rows_j)
            .map(|(&i, &j)| (i, self.n1 + j, 1.0))
            .collect();
        let labels = self
            .labels1
            .iter()
            .map(|s| format!("i:{s}"))
            .chain(self.labels2.iter().map(|s| format!("j:{s}")))
            .collect();
        Ok(StackedGraph {
            graph: Graph::from_edges(self.n1 + self.n2, &edges)?.with_labels(labels),
            n1: self.n1,
        })
    }

    /// Rows in the largest connected component of the stacked graph, with
    /// ids outside it (including ids without rows) dropped. Also returns the number of dropped rows.
    pub fn restrict_to_largest_component(&self) -> Result<(BipartiteData, usize)> {
        let sub = crate::graph::largest_component(&self.stack_two_way()?.graph);
        let dropped = self.m() - sub.edge_map.len();
        if dropped == 0 && sub.graph.n() == self.n1 + self.n2 {
            return Ok((self.clone(), 0));
        }
        let rows: Vec<MatchedRow> = sub
            .edge_map
            .iter()
            .map(|&e| MatchedRow {
                i: self.labels1[self.rows_i[e]].clone(),
                j: self.labels2[self.rows_j[e]].clone(),
                y: self.y[e],
                x: self.x.row(e).iter().copied().collect(),
            })
            .collect();
        Ok((build_bipartite(&rows)?, dropped))
    }

    /// Weighted one-mode projection onto the type-2 vertices.
    pub fn one_mode_projection(&self) -> Projection {
        let groups = self.rows_by_type1();
        let per_connector: Vec<(Vec<(usize, usize)>, BTreeMap<(usize, usize), f64>)> = groups
            .par_iter()
            .map(|rows| {
                let di = rows.len() as f64;
                let mut pairs = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
                for (a, &e1) in rows.iter().enumerate() {
                    for &e2 in &rows[a + 1..] {
                        pairs.push((e1, e2));
                    }
                }
                let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
                for &e in rows {
                    *counts.entry(self.rows_j[e]).or_default() += 1;
                }
                let mut weights = BTreeMap::new();
                let cs: Vec<_> = counts.into_iter().collect();
                for (a, &(j, cj)) in cs.iter().enumerate() {
                    for &(jp, cjp) in &cs[a + 1..] {
                        weights.insert((j, jp), (cj * cjp) as f64 / di);
                    }
                }
                (pairs, weights)
            })
            .collect();

        let mut qt = Vec::new();
        let mut w = Vec::new();
        let mut connector = Vec::new();
        let mut adj: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let d1 = self.degrees1();
        for (i, (pairs, weights)) in per_connector.into_iter().enumerate() {
            for (e1, e2) in pairs {
                let r = connector.len();
                qt.push((r, e1, 1.0));
                qt.push((r, e2, -1.0));
                w.push(1.0 / (d1[i] as f64).sqrt());
                connector.push(i);
            }
            for (key, v) in weights {
                *adj.entry(key).or_default() += v;
            }
        }
        let m_prime = connector.len();
        let edges: Vec<(usize, usize, f64)> = adj.into_iter().map(|((j, jp), v)| (j, jp, v)).collect();
        Projection {
            n2: self.n2,
            q: CsrMatrix::from_triplets(m_prime, self.m(), &qt),
            w: DVector::from_vec(w),
            m_prime,
            connector,
            edges,
            labels: self.labels2.clone(),
        }
    }

    /// Dense B₂′M_{B₁}B₂.
    pub fn projected_laplacian_dense(&self) -> DMatrix<f64> {
        let b2 = self.b2().to_dense();
        b2.transpose() * self.m_b1_dense() * b2
    }
}

/// Stacked two-way graph; α = (μ, −η).
#[derive(Clone, Debug)]
pub struct StackedGraph {
    pub graph: Graph,
    pub n1: usize,
}

impl StackedGraph {
    /// Splits α into (μ, η) with η = −α restricted to the type-2 block.
    pub fn split(&self, alpha: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mu = alpha.rows(0, self.n1).into_owned();
        let eta = -alpha.rows(self.n1, alpha.len() - self.n1).into_owned();
        (mu, eta)
    }

    pub fn join(&self, mu: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            mu.len() + eta.len(),
            mu.iter().copied().chain(eta.iter().map(|v| -v)),
        )
    }
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub n2: usize,
    /// m′×m signed pairing matrix.
    pub q: CsrMatrix,
    /// Diagonal of W: 1/√d of the connecting type-1 vertex.
    pub w: DVector<f64>,
    pub m_prime: usize,
    /// Type-1 vertex behind each pair.
    pub connector: Vec<usize>,
    /// Distinct projected edges (j, j′, (A′)_{jj′}) with j < j′.
    pub edges: Vec<(usize, usize, f64)>,
    pub labels: Vec<String>,
}

impl Projection {
    pub fn graph(&self) -> Result<Graph> {
        Ok(Graph::from_edges(self.n2, &self.edges)?.with_labels(self.labels.clone()))
    }

    pub fn adjacency_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n2, self.n2);
        for &(j, jp, v) in &self.edges {
            a[(j, jp)] = v;
            a[(jp, j)] = v;
        }
        a
    }

    pub fn laplacian_dense(&self) -> DMatrix<f64> {
        let a = self.adjacency_dense();
        let d = DVector::from_fn(self.n2, |j, _| a.row(j).sum());
        DMatrix::from_diagonal(&d) - a
    }

    /// Applies W Q.
    pub fn wq_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.q.mul_vec(v).component_mul(&self.w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn skeleton(n1: usize, n2: usize, pairs: &[(usize, usize)]) -> BipartiteData {
        let m = pairs.len();
        BipartiteData::from_indices(n1, n2, pairs, DVector::zeros(m), DMatrix::zeros(m, 0)).unwrap()
    }

    fn row(i: &str, j: &str, y: f64, x: &[f64]) -> MatchedRow {
        MatchedRow {
            i: i.into(),
            j: j.into(),
            y,
            x: x.to_vec(),
        }
    }

    #[test]
    fn restrict_drops_small_component() {
        // rows 0-2 link {0,1} with {0,1}; row 3 is an isolated pair
        let bd = skeleton(3, 3, &[(0, 0), (0, 1), (1, 1), (2, 2)]);
        let (r, dropped) = bd.restrict_to_largest_component().unwrap();
        assert_eq!(dropped, 1);
        assert_eq!((r.n1, r.n2, r.m()), (2, 2, 3));
        assert_eq!(r.labels1, ["1", "2"]);
        let (same, zero) = r.restrict_to_largest_component().unwrap();
        assert_eq!(zero, 0);
        assert_eq!(same, r);
    }

    #[test]
    fn build_examples() {
        let bd = build_bipartite(&[row("s", "a", 1.0, &[]), row("s", "b", 2.0, &[])]).unwrap();
        assert_eq!((bd.n1, bd.n2, bd.m()), (1, 2, 2));
        // shared namespace strings stay separate
        let bd = build_bipartite(&[row("1", "1", 0.0, &[]), row("1", "1", 0.0, &[])]).unwrap();
        assert_eq!((bd.n1, bd.n2, bd.m()), (1, 1, 2));
        let bd = build_bipartite(&[
            row("1", "a", 0.0, &[1.0, 2.0]),
            row("2", "a", 0.0, &[3.0, 4.0]),
            row("2", "b", 0.0, &[5.0, 6.0]),
        ])
        .unwrap();
        assert_eq!(bd.x.shape(), (3, 2));
        assert!(build_bipartite(&[]).is_err());
        assert!(build_bipartite(&[row("1", "a", 0.0, &[1.0]), row("1", "b", 0.0, &[])]).is_err());
    }

    #[test]
    fn stacked_star() {
        let bd = skeleton(1, 2, &[(0, 0), (0, 1)]);
        let sg = bd.stack_two_way().unwrap();
        assert_eq!(sg.graph.degrees().as_slice(), &[2.0, 1.0, 1.0]);
        let b = sg.graph.matrices().b.to_dense();
        let b1 = bd.b1().to_dense();
        let b2 = bd.b2().to_dense();
        let mut expect = DMatrix::zeros(2, 3);
        expect.columns_mut(0, 1).copy_from(&b1);
        expect.columns_mut(1, 2).copy_from(&(-b2));
        assert_eq!(b, expect);

        let alpha = DVector::from_vec(vec![0.5, 1.0, -2.0]);
        let (mu, eta) = sg.split(&alpha);
        assert_eq!(eta.as_slice(), &[-1.0, 2.0]);
        assert_eq!(sg.join(&mu, &eta), alpha);
    }

    #[test]
    fn single_connector_weight() {
        let p = skeleton(1, 2, &[(0, 0), (0, 1)]).one_mode_projection();
        assert_eq!(p.edges, vec![(0, 1, 0.5)]);
        assert_eq!(p.q.to_dense(), DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
    }

    #[test]
    fn m_prime_count() {
        let p = skeleton(2, 4, &[(0, 0), (0, 1), (0, 2), (1, 2), (1, 3)]).one_mode_projection();
        assert_eq!(p.m_prime, 4);
        assert_eq!(p.connector, vec![0, 0, 0, 1]);
    }

    #[test]
    fn degree_one_connectors_give_no_pairs() {
        let p = skeleton(3, 3, &[(0, 0), (1, 1), (2, 2)]).one_mode_projection();
        assert_eq!(p.m_prime, 0);
        assert!(p.edges.is_empty());
        assert!(p.graph().is_err());
    }

    #[test]
    fn figure_shaped_fixture() {
        // three students over four teachers; student 1 sees teacher 0 twice
        let bd = skeleton(3, 4, &[(0, 0), (0, 1), (1, 0), (1, 0), (1, 2), (2, 2), (2, 3)]);
        let p = bd.one_mode_projection();
        let a = p.adjacency_dense();
        assert!((a[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((a[(0, 2)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((a[(2, 3)] - 0.5).abs() < 1e-15);
        assert_eq!(a[(1, 3)], 0.0);
        assert!((p.laplacian_dense() - bd.projected_laplacian_dense()).amax() < 1e-12);
    }

    fn random_fixture() -> impl Strategy<Value = BipartiteData> {
        (1usize..12, 1usize..10).prop_flat_map(|(n1, n2)| {
            prop::collection::vec((0..n1, 0..n2), 1..40)
                .prop_map(move |pairs| skeleton(n1, n2, &pairs))
        })
    }

    proptest! {
        #[test]
        fn projection_identities(bd in random_fixture()) {
            let p = bd.one_mode_projection();
            let q = p.q.to_dense();
            // every Q row has one +1 and one −1
            for r in 0..p.m_prime {
                let row = q.row(r);
                prop_assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                prop_assert_eq!(row.iter().filter(|&&v| v == -1.0).count(), 1);
            }
            prop_assert!((&q * bd.b1().to_dense()).iter().all(|&v| v == 0.0));
            let w2 = DMatrix::from_diagonal(&p.w.map(|v| v * v));
            let lhs = q.transpose() * w2 * &q;
            prop_assert!((lhs - bd.m_b1_dense()).amax() <= 1e-10);
            prop_assert!((p.laplacian_dense() - bd.projected_laplacian_dense()).amax() <= 1e-10);
            let expected: usize = bd.degrees1().iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
            prop_assert_eq!(p.m_prime, expected);
        }

        #[test]
        fn connected_data_projects_to_connected_graph(bd in random_fixture()) {
            let (bd, _) = bd.restrict_to_largest_component().unwrap();
            prop_assume!(bd.n2 >= 2);
            let p = bd.one_mode_projection();
            let g = p.graph().unwrap();
            prop_assert_eq!(crate::graph::connected_components(&g).len(), 1);
            let ev = nalgebra::SymmetricEigen::new(p.laplacian_dense()).eigenvalues;
            let cutoff = 1e-9 * ev.amax();
            prop_assert_eq!(ev.iter().filter(|&&v| v > cutoff).count(), bd.n2 - 1);
        }
    }
}
