//! Harmonic-mean connectivity statistics, finite-sample variance bounds,
//! standard errors and per-vertex diagnostics.
//!
//! The homoskedastic bounds use vol = Σ_i d_i for the level correction
//! 2σ²/vol, which is the normalizing constant of L* = (L + dd′/vol)⁻¹ − ιι′/vol.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{NetError, Result};
use crate::estimator::{max_column_norm, numerical_rank, Estimator, FixedEffectFit, Normalization};
use crate::graph::{Graph, GraphMatrices, NeighborIndex};
use crate::solve::LaplacianSolver;
use crate::spectral::{extremes, EigenMethod, DEFAULT_TOL};
use crate::stats::DecileRow;

/// Per-vertex and global harmonic means of the degree structure.
#[derive(Clone, Debug)]
pub struct HarmonicStats {
    pub d: DVector<f64>,
    /// h_i = (d_i⁻¹ Σ_j A_ij² / d_j)⁻¹
    pub h_i: DVector<f64>,
    /// H_i = (Σ_{j∈[i]} (h_i/d_i)/d_j / h_j)⁻¹
    pub big_h_i: DVector<f64>,
    /// h_i⁽²⁾ = (d_i⁻¹ Σ_j A_ij / d_j)⁻¹
    pub h_i2: DVector<f64>,
    /// harmonic mean of the degrees
    pub h: f64,
    /// H = (Σ_i (h/n)/d_i / h_i)⁻¹
    pub big_h: f64,
}

pub fn harmonic_stats(g: &Graph) -> Result<HarmonicStats> {
    let nb = g.neighbors();
    let d = g.degrees();
    let n = g.n();
    if let Some(v) = d.iter().position(|&x| x <= 0.0) {
        return Err(NetError::IsolatedVertex { vertex: v });
    }
    let h_i = DVector::from_fn(n, |i, _| {
        let s: f64 = nb.of(i).iter().map(|&(j, a)| a * a / d[j]).sum();
        d[i] / s
    });
    let h_i2 = DVector::from_fn(n, |i, _| {
        let s: f64 = nb.of(i).iter().map(|&(j, a)| a / d[j]).sum();
        d[i] / s
    });
    let big_h_i = DVector::from_fn(n, |i, _| {
        let s: f64 = nb.of(i).iter().map(|&(j, _)| (h_i[i] / d[i]) / d[j] / h_i[j]).sum();
        1.0 / s
    });
    let h = n as f64 / d.iter().map(|x| 1.0 / x).sum::<f64>();
    let big_h = 1.0 / (0..n).map(|i| (h / n as f64) / d[i] / h_i[i]).sum::<f64>();
    Ok(HarmonicStats {
        d,
        h_i,
        big_h_i,
        h_i2,
        h,
        big_h,
    })
}

/// (d_ij, 1/h_ij) for a vertex pair; 1/h_ij = 0 when d_ij = 0.
pub fn pair_stats(nb: &NeighborIndex, d: &DVector<f64>, i: usize, j: usize) -> (f64, f64) {
    let mut dij = 0.0;
    let mut s = 0.0;
    let (a, b) = (nb.of(i), nb.of(j));
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                let k = a[p].0;
                let w = a[p].1 * b[q].1;
                dij += w;
                s += w / d[k];
                p += 1;
                q += 1;
            }
        }
    }
    if dij == 0.0 {
        (0.0, 0.0)
    } else {
        (dij, s / dij)
    }
}

/// Graph-level quantities shared by the bound computations.
#[derive(Clone, Debug)]
pub struct Network {
    pub graph: Graph,
    pub gm: GraphMatrices,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub stats: HarmonicStats,
    pub solver: LaplacianSolver,
    nb: NeighborIndex,
}

impl Network {
    pub fn new(g: &Graph) -> Result<Self> {
        g.require_connected()?;
        let gm = g.matrices();
        let (lambda2, lambda_max) = extremes(&gm, DEFAULT_TOL, EigenMethod::Auto)?;
        Ok(Self {
            stats: harmonic_stats(g)?,
            solver: LaplacianSolver::new(&gm)?,
            nb: g.neighbors(),
            graph: g.clone(),
            gm,
            lambda2,
            lambda_max,
        })
    }

    pub fn n(&self) -> usize {
        self.gm.n
    }

    pub fn volume(&self) -> f64 {
        self.gm.volume()
    }

    pub fn neighbors(&self) -> &NeighborIndex {
        &self.nb
    }

    /// Diagonal of M_ι L* M_ι, the variance of the mean-zero estimator per σ².
    pub fn centered_lstar_diag(&self) -> Result<DVector<f64>> {
        let n = self.n();
        let diag = self.solver.diag()?;
        let row_sums = self.solver.apply(&DVector::from_element(n, 1.0))?;
        let total = row_sums.sum();
        let nf = n as f64;
        Ok(DVector::from_fn(n, |i, _| diag[i] - 2.0 * row_sums[i] / nf + total / (nf * nf)))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub exact: Vec<f64>,
}

/// σ²/d_i − 2σ²/vol ≤ var(α̂_i) ≤ (σ²/d_i)(1 + 1/(λ₂h_i)) − 2σ²/vol, together
/// with the exact σ²(L*)_ii.
pub fn vertex_variance_bounds(net: &Network, sigma2: f64) -> Result<VertexBounds> {
    let s = &net.stats;
    let shift = 2.0 * sigma2 / net.volume();
    let exact = net.solver.diag()?;
    Ok(VertexBounds {
        lower: s.d.iter().map(|&d| sigma2 / d - shift).collect(),
        upper: (0..net.n())
            .map(|i| sigma2 / s.d[i] * (1.0 + 1.0 / (net.lambda2 * s.h_i[i])) - shift)
            .collect(),
        exact: exact.iter().map(|v| sigma2 * v).collect(),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairBounds {
    pub lower: f64,
    pub upper: f64,
    pub exact: f64,
    pub d_ij: f64,
    /// 1/h_ij, zero when the pair has no common neighbor.
    pub inv_h_ij: f64,
}

/// Bounds on var(α̂_i − α̂_j).
pub fn pair_variance_bounds(net: &Network, sigma2: f64, i: usize, j: usize) -> Result<PairBounds> {
    if i == j {
        return Err(NetError::SameVertex(i));
    }
    let n = net.n();
    if i >= n || j >= n {
        return Err(NetError::InvalidParameter(format!("vertex out of range 0..{n}")));
    }
    let s = &net.stats;
    let (di, dj) = (s.d[i], s.d[j]);
    let aij = net.gm.a.get(i, j);
    let (d_ij, inv_h_ij) = pair_stats(&net.nb, &s.d, i, j);
    let lower = sigma2 * (1.0 / di + 1.0 / dj - 2.0 * aij / (di * dj));
    let second = 1.0 / (di * s.h_i[i]) + 1.0 / (dj * s.h_i[j]) - 2.0 * d_ij * inv_h_ij / (di * dj);
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e[j] = -1.0;
    let exact = sigma2 * e.dot(&net.solver.apply(&e)?);
    Ok(PairBounds {
        lower,
        upper: lower + sigma2 / net.lambda2 * second,
        exact,
        d_ij,
        inv_h_ij,
    })
}

/// Non-collinearity between X and B and the per-vertex covariate means.
#[derive(Clone, Debug)]
pub struct RhoXbar {
    /// λ_min((X′X)^{-1/2} X′M_B X (X′X)^{-1/2})
    pub rho: f64,
    /// ‖(X′X)⁻¹X′M_B X‖₂, equal to `rho` when p = 1
    pub rho_spectral_norm: f64,
    /// Row i holds x̄_i′ = b_i′X / d_i.
    pub xbar: DMatrix<f64>,
    /// Ω = X′X / m
    pub omega: DMatrix<f64>,
}

pub fn rho_and_xbar(gm: &GraphMatrices, x: &DMatrix<f64>) -> Result<RhoXbar> {
    let p = x.ncols();
    if p == 0 {
        return Err(NetError::InvalidParameter("ρ requires p ≥ 1".into()));
    }
    let rank = numerical_rank(x, max_column_norm(x));
    if rank < p {
        return Err(NetError::CollinearCovariates { rank, p });
    }
    let solver = LaplacianSolver::new(gm)?;
    let bx = gm.b.tr_mul_dense(x);
    let g = solver.apply_columns(&bx)?;
    let xtx = x.transpose() * x;
    let xmx = &xtx - bx.transpose() * &g;
    let xmx = (&xmx + xmx.transpose()) * 0.5;

    let eig = SymmetricEigen::new(xtx.clone());
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let k = &inv_sqrt * &xmx * &inv_sqrt;
    let rho = SymmetricEigen::new((&k + k.transpose()) * 0.5).eigenvalues.min().clamp(0.0, 1.0);
    let lit = xtx.clone().try_inverse().expect("X has full column rank") * &xmx;
    let rho_spectral_norm = lit.singular_values().max();

    let xbar = DMatrix::from_fn(gm.n, p, |i, c| bx[(i, c)] / gm.d[i]);
    Ok(RhoXbar {
        rho,
        rho_spectral_norm,
        xbar,
        omega: xtx / gm.m as f64,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GapBounds {
    pub rho: f64,
    pub bound: Vec<f64>,
    /// σ²[(B′M_X B)*_ii − (L*)_ii]
    pub exact_gap: Vec<f64>,
}

/// Bound on |var(α̌_i) − var(α̂_i)| from adding covariates.
pub fn covariate_gap_bounds(net: &Network, x: &DMatrix<f64>, sigma2: f64) -> Result<GapBounds> {
    let rx = rho_and_xbar(&net.gm, x)?;
    if rx.rho <= 1e-10 {
        return Err(NetError::RhoZero { rho: rx.rho });
    }
    let est = Estimator::from_matrices(net.gm.clone(), x)?;
    let with_x = est.variance_diag()?;
    let without = net.solver.diag()?;
    let m = net.gm.m as f64;
    let omega_inv = rx.omega.clone().try_inverse().expect("Ω is nonsingular");
    let s = &net.stats;
    let rho = rx.rho;
    let bound = (0..net.n())
        .map(|i| {
            let xb = rx.xbar.row(i).transpose();
            let quad = (xb.transpose() * &omega_inv * &xb)[(0, 0)] / m;
            2.0 * sigma2 / rho * ((1.0 - rho) / (net.lambda2 * s.d[i] * s.h_i[i]) + quad)
        })
        .collect();
    Ok(GapBounds {
        rho,
        bound,
        exact_gap: (0..net.n()).map(|i| sigma2 * (with_x[i] - without[i])).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AltBounds {
    /// (1/d_i)(σ²/λ₂)(1 + d_i/(n h))
    pub s2_upper: Vec<f64>,
    pub s3_lower: Vec<f64>,
    pub s3_upper: Vec<f64>,
    /// σ²(M_ι L* M_ι)_ii
    pub exact: Vec<f64>,
}

/// Bounds for the mean-zero normalization.
pub fn mean_zero_bounds(net: &Network, sigma2: f64) -> Result<AltBounds> {
    let s = &net.stats;
    let nf = net.n() as f64;
    let l2 = net.lambda2;
    let exact = net.centered_lstar_diag()?;
    let idx = 0..net.n();
    Ok(AltBounds {
        s2_upper: idx
            .clone()
            .map(|i| sigma2 / (s.d[i] * l2) * (1.0 + s.d[i] / (nf * s.h)))
            .collect(),
        s3_lower: idx
            .clone()
            .map(|i| sigma2 / s.d[i] * (1.0 - 2.0 / nf) - 2.0 * sigma2 / (nf * s.h_i2[i]))
            .collect(),
        s3_upper: idx
            .map(|i| {
                sigma2 / s.d[i] * (1.0 + 1.0 / (l2 * s.h_i[i])) + sigma2 / s.h * (2.0 / nf + 1.0 / (l2 * s.big_h))
            })
            .collect(),
        exact: exact.iter().map(|v| sigma2 * v).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeMode {
    /// b_i′Σ̌b_i with Σ̌ = diag(ǔǔ′)/m
    Plugin,
    /// b_i′Σ̌b_i with Σ̌ = diag(ǔǔ′)
    PluginUnscaled,
    /// σ̂²(B′M_X B)*_ii with σ̂² = ǔ′ǔ/(m − (n−1) − p)
    Homoskedastic,
}

#[derive(Clone, Debug, Serialize)]
pub struct StandardErrors {
    pub mode: SeMode,
    pub se: Vec<f64>,
    pub sigma2_hat: Option<f64>,
}

/// Homoskedastic error variance estimate ǔ′ǔ/(m − (n−1) − p).
pub fn sigma2_hat(fit: &FixedEffectFit) -> Result<f64> {
    let (m, n, p) = (fit.m(), fit.n(), fit.p());
    let needed = n - 1 + p;
    if m <= needed {
        return Err(NetError::NoResidualDf { m, needed });
    }
    Ok(fit.residuals.norm_squared() / (m - needed) as f64)
}

/// Per-edge squared residual sums b_i′ diag(ǔǔ′) b_i = Σ_e B_ei² ǔ_e².
pub fn meat(gm: &GraphMatrices, residuals: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(gm.n);
    for (e, c, v) in gm.b.triplets() {
        out[c] += v * v * residuals[e] * residuals[e];
    }
    out
}

/// diag of var(α̌)/σ² under the given normalization: V = L* + G(X′M_B X)⁻¹G′
/// for d′α = 0, and M_ι V M_ι for ι′α = 0.
pub fn variance_diag_normalized(est: &Estimator, normalization: Normalization) -> Result<DVector<f64>> {
    let v = est.variance_diag()?;
    if normalization == Normalization::DWeighted {
        return Ok(v);
    }
    let n = v.len();
    let ones = DVector::from_element(n, 1.0);
    let mut v_iota = est.solver().apply(&ones)?;
    if est.covariates().ncols() > 0 {
        let g = est.g();
        v_iota += g * (est.xmx_inverse() * (g.transpose() * &ones));
    }
    let nf = n as f64;
    let total = v_iota.sum();
    Ok(DVector::from_fn(n, |i, _| v[i] - 2.0 * v_iota[i] / nf + total / (nf * nf)))
}

pub fn standard_errors(est: &Estimator, fit: &FixedEffectFit, mode: SeMode) -> Result<StandardErrors> {
    let gm = est.matrices();
    match mode {
        SeMode::Plugin | SeMode::PluginUnscaled => {
            let scale = if mode == SeMode::Plugin { 1.0 / fit.m() as f64 } else { 1.0 };
            let bsb = meat(gm, &fit.residuals);
            Ok(StandardErrors {
                mode,
                se: (0..gm.n).map(|i| (bsb[i] * scale).sqrt() / gm.d[i]).collect(),
                sigma2_hat: None,
            })
        }
        SeMode::Homoskedastic => {
            let s2 = sigma2_hat(fit)?;
            let v = variance_diag_normalized(est, fit.normalization)?;
            Ok(StandardErrors {
                mode,
                se: v.iter().map(|x| (s2 * x.max(0.0)).sqrt()).collect(),
                sigma2_hat: Some(s2),
            })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexRow {
    pub id: String,
    pub d: f64,
    pub h_i: f64,
    #[serde(rename = "H_i")]
    pub big_h_i: f64,
    pub h_i2: f64,
    #[serde(rename = "Sdag_ii")]
    pub sdag_ii: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GlobalStats {
    pub n: usize,
    pub m: usize,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub h: f64,
    #[serde(rename = "H")]
    pub big_h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub trace_lstar_over_nm1: f64,
    pub trace_centered_lstar_over_nm1: f64,
    pub inv_h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnectivityReport {
    pub global: GlobalStats,
    pub vertices: Vec<VertexRow>,
    pub deciles: BTreeMap<String, DecileRow>,
}

/// Full per-vertex and global connectivity summary; `sigma2` sets the scale
/// of the exact variances and vertex variance bounds included per vertex.
pub fn connectivity_report(net: &Network, x: Option<&DMatrix<f64>>, sigma2: f64) -> Result<ConnectivityReport> {
    let s = &net.stats;
    let n = net.n();
    let diag = net.solver.diag()?;
    let centered = net.centered_lstar_diag()?;
    let sdag = diag.component_mul(&s.d);
    let rho = match x {
        Some(x) if x.ncols() > 0 => Some(rho_and_xbar(&net.gm, x)?.rho),
        _ => None,
    };
    let t2 = vertex_variance_bounds(net, sigma2)?;
    let vertices = (0..n)
        .map(|i| VertexRow {
            id: net.graph.label(i).to_string(),
            d: s.d[i],
            h_i: s.h_i[i],
            big_h_i: s.big_h_i[i],
            h_i2: s.h_i2[i],
            sdag_ii: sdag[i],
            var_exact: Some(t2.exact[i]),
            lower: Some(t2.lower[i]),
            upper: Some(t2.upper[i]),
            se: None,
        })
        .collect();
    let nm1 = (n as f64 - 1.0).max(1.0);
    let mut deciles = BTreeMap::new();
    deciles.insert("d".to_string(), DecileRow::of(s.d.as_slice()));
    deciles.insert("h_i".to_string(), DecileRow::of(s.h_i.as_slice()));
    deciles.insert("H_i".to_string(), DecileRow::of(s.big_h_i.as_slice()));
    deciles.insert("h_i2".to_string(), DecileRow::of(s.h_i2.as_slice()));
    deciles.insert("Sdag_ii".to_string(), DecileRow::of(sdag.as_slice()));
    Ok(ConnectivityReport {
        global: GlobalStats {
            n,
            m: net.gm.m,
            lambda2: net.lambda2,
            lambda_max: net.lambda_max,
            h: s.h,
            big_h: s.big_h,
            rho,
            trace_lstar_over_nm1: diag.sum() / nm1,
            trace_centered_lstar_over_nm1: centered.sum() / nm1,
            inv_h: 1.0 / s.h,
        },
        vertices,
        deciles,
    })
}

/// Variance ratios and confidence-interval widths.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    /// (S†)_ii = (L*)_ii / (1/d_i)
    pub ratio: Vec<f64>,
    pub ratio_deciles: DecileRow,
    pub trace_lstar_over_nm1: f64,
    pub inv_h: f64,
    /// 2 · 1.96 · √(σ²(L*)_ii)
    pub ci_width_exact: Vec<f64>,
    /// 2 · 1.96 · √(σ²/d_i)
    pub ci_width_first_order: Vec<f64>,
    pub ci_width_exact_deciles: DecileRow,
    pub ci_width_first_order_deciles: DecileRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_deciles: Option<DecileRow>,
}

pub fn diagnostics(net: &Network, sigma2: f64, se: Option<&StandardErrors>) -> Result<Diagnostics> {
    let diag = net.solver.diag()?;
    let d = &net.stats.d;
    let ratio: Vec<f64> = (0..net.n()).map(|i| diag[i] * d[i]).collect();
    let ci_exact: Vec<f64> = diag.iter().map(|v| 2.0 * 1.96 * (sigma2 * v).sqrt()).collect();
    let ci_first: Vec<f64> = d.iter().map(|v| 2.0 * 1.96 * (sigma2 / v).sqrt()).collect();
    Ok(Diagnostics {
        ratio_deciles: DecileRow::of(&ratio),
        ratio,
        trace_lstar_over_nm1: diag.sum() / (net.n() as f64 - 1.0).max(1.0),
        inv_h: 1.0 / net.stats.h,
        ci_width_exact_deciles: DecileRow::of(&ci_exact),
        ci_width_first_order_deciles: DecileRow::of(&ci_first),
        ci_width_exact: ci_exact,
        ci_width_first_order: ci_first,
        se_deciles: se.map(|s| DecileRow::of(&s.se)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::fit_full;
    use crate::generators::{complete, erdos_renyi, extended_hypercube, hypercube, star, wheel};
    use crate::graph::largest_component;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;

    fn random_connected(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Graph {
        let mut e = Vec::new();
        for v in 1..n {
            e.push((rng.random_range(0..v), v, rng.random_range(0.5..2.0)));
        }
        for _ in 0..extra {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                e.push((a, b, rng.random_range(0.5..2.0)));
            }
        }
        Graph::from_edges(n, &e).unwrap()
    }

    #[test]
    fn star_harmonic_means() {
        for n in 3..10 {
            let s = harmonic_stats(&star(n).unwrap()).unwrap();
            assert!((s.h_i[0] - 1.0).abs() < 1e-14);
            for i in 1..n {
                assert!((s.h_i[i] - (n - 1) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regular_families() {
        for nn in 1..6 {
            let s = harmonic_stats(&hypercube(nn).unwrap()).unwrap();
            assert!(s.d.iter().chain(s.h_i.iter()).all(|&v| (v - nn as f64).abs() < 1e-12));
            assert!((s.h - nn as f64).abs() < 1e-12);
            let s = harmonic_stats(&extended_hypercube(nn).unwrap()).unwrap();
            let k = (nn * (nn + 1) / 2) as f64;
            assert!(s.d.iter().chain(s.h_i.iter()).all(|&v| (v - k).abs() < 1e-12));
        }
        // wheel rim: h_i = 3 per the construction (degree-3 rim neighbors and a hub)
        let s = harmonic_stats(&wheel(8).unwrap()).unwrap();
        assert!(s.d.iter().skip(1).all(|&v| v == 3.0));
    }

    #[test]
    fn hypercube_vertex_bounds_example() {
        let net = Network::new(&hypercube(3).unwrap()).unwrap();
        let b = vertex_variance_bounds(&net, 1.0).unwrap();
        for i in 0..8 {
            assert!((b.lower[i] - (1.0 / 3.0 - 2.0 / 24.0)).abs() < 1e-14);
            assert!((b.upper[i] - ((1.0 / 3.0) * 1.5 - 2.0 / 24.0)).abs() < 1e-12);
            assert!(b.lower[i] <= b.exact[i] && b.exact[i] <= b.upper[i]);
        }
    }

    #[test]
    fn star_center_bounds() {
        let net = Network::new(&star(8).unwrap()).unwrap();
        let b = vertex_variance_bounds(&net, 1.0).unwrap();
        assert!((b.exact[0] - 1.0 / 28.0).abs() < 1e-14);
        assert!((b.lower[0] - 0.0).abs() < 1e-14);
        assert!((b.upper[0] - 1.0 / 7.0).abs() < 1e-14);
        for i in 0..8 {
            assert!(b.lower[i] <= b.exact[i] + 1e-12 && b.exact[i] <= b.upper[i] + 1e-12);
        }
    }

    #[test]
    fn s1_examples() {
        // 4-cycle: vertices 0 and 2 share neighbors {1, 3} and are not adjacent
        let g = Graph::unweighted(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let net = Network::new(&g).unwrap();
        let b = pair_variance_bounds(&net, 2.0, 0, 2).unwrap();
        assert!((b.exact - 2.0 * (0.5 + 0.5)).abs() < 1e-12);
        assert!((b.lower - b.exact).abs() < 1e-12 && (b.upper - b.exact).abs() < 1e-12);

        let k2 = Network::new(&Graph::unweighted(2, &[(0, 1)]).unwrap()).unwrap();
        let b = pair_variance_bounds(&k2, 1.0, 0, 1).unwrap();
        assert!((b.exact - 1.0).abs() < 1e-14);
        assert!(b.lower <= b.exact && b.exact <= b.upper);
        assert_eq!(b.d_ij, 0.0);
        assert_eq!(b.inv_h_ij, 0.0);
        assert!(matches!(pair_variance_bounds(&k2, 1.0, 1, 1), Err(NetError::SameVertex(1))));
    }

    #[test]
    fn rho_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_connected(10, 20, &mut rng);
        let gm = g.matrices();
        let b = gm.b.to_dense();
        let pb = &b * (b.transpose() * &b).pseudo_inverse(1e-12).unwrap() * b.transpose();
        let mb = DMatrix::identity(g.m(), g.m()) - &pb;

        let z = DMatrix::from_fn(g.m(), 1, |_, _| rng.sample(StandardNormal));
        let orth = &mb * &z;
        assert!((rho_and_xbar(&gm, &orth).unwrap().rho - 1.0).abs() < 1e-10);

        let in_range = &b * DMatrix::from_fn(10, 1, |_, _| rng.sample(StandardNormal));
        assert!(rho_and_xbar(&gm, &in_range).unwrap().rho < 1e-10);

        let x = DMatrix::from_fn(g.m(), 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = rho_and_xbar(&gm, &x).unwrap();
        let xtx = x.transpose() * &x;
        let eig = SymmetricEigen::new(xtx.clone());
        let is = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt())) * eig.eigenvectors.transpose();
        let c_tilde = &is * x.transpose() * &pb * &x * &is;
        assert!((1.0 - r.rho - c_tilde.singular_values().max()).abs() < 1e-10);
        assert!((0.0..=1.0).contains(&r.rho));

        // p = 1: both definitions coincide
        let x1 = x.columns(0, 1).into_owned();
        let r1 = rho_and_xbar(&gm, &x1).unwrap();
        assert!((r1.rho - r1.rho_spectral_norm).abs() < 1e-12);
    }

    #[test]
    fn gap_requires_covariates_and_noncollinearity() {
        let net = Network::new(&complete(5).unwrap()).unwrap();
        assert!(covariate_gap_bounds(&net, &DMatrix::zeros(10, 0), 1.0).is_err());
    }

    #[test]
    fn gap_with_orthogonal_covariates() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let g = random_connected(12, 25, &mut rng);
        let net = Network::new(&g).unwrap();
        let b = net.gm.b.to_dense();
        let pb = &b * (b.transpose() * &b).pseudo_inverse(1e-12).unwrap() * b.transpose();
        let z = DMatrix::from_fn(g.m(), 2, |_, _| rng.sample(StandardNormal));
        let x = &z - pb * &z;
        let gb = covariate_gap_bounds(&net, &x, 1.0).unwrap();
        for i in 0..g.n() {
            assert!(gb.exact_gap[i].abs() < 1e-10);
            assert!(gb.exact_gap[i] <= gb.bound[i] + 1e-12);
        }
    }

    #[test]
    fn alt_bounds_star_and_hypercube() {
        for g in [star(8).unwrap(), hypercube(4).unwrap()] {
            let net = Network::new(&g).unwrap();
            let b = mean_zero_bounds(&net, 1.0).unwrap();
            let ls = net.solver.lstar_dense().unwrap();
            let n = g.n();
            let mi = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
            let dense = (&mi * ls * &mi).diagonal();
            for i in 0..n {
                assert!((b.exact[i] - dense[i]).abs() < 1e-12);
                assert!(b.exact[i] <= b.s2_upper[i] + 1e-12);
                assert!(b.s3_lower[i] <= b.exact[i] + 1e-12 && b.exact[i] <= b.s3_upper[i] + 1e-12);
            }
        }
    }

    #[test]
    fn standard_error_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = random_connected(8, 20, &mut rng);
        let gm = g.matrices();
        let alpha = DVector::from_fn(8, |_, _| rng.sample(StandardNormal));
        let y = gm.b.mul_vec(&alpha);
        let x = DMatrix::zeros(g.m(), 0);
        let est = Estimator::new(&g, &x).unwrap();
        let fit = est.fit(&y).unwrap();
        for mode in [SeMode::Plugin, SeMode::PluginUnscaled, SeMode::Homoskedastic] {
            let se = standard_errors(&est, &fit, mode).unwrap();
            assert!(se.se.iter().all(|&v| v.abs() < 1e-7), "{mode:?}");
        }
        // plug-in variants differ by √m
        let noisy = &y + DVector::from_fn(g.m(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = est.fit(&noisy).unwrap();
        let a = standard_errors(&est, &fit, SeMode::Plugin).unwrap();
        let b = standard_errors(&est, &fit, SeMode::PluginUnscaled).unwrap();
        let m = g.m() as f64;
        for i in 0..8 {
            assert!((a.se[i] * m.sqrt() - b.se[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_variance_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let g = random_connected(9, 15, &mut rng);
        let x = DMatrix::from_fn(g.m(), 1, |_, _| rng.sample(StandardNormal));
        let est = Estimator::new(&g, &x).unwrap();
        let v = est.solver().lstar_dense().unwrap() + est.g() * est.xmx_inverse() * est.g().transpose();
        let mi = DMatrix::identity(9, 9) - DMatrix::from_element(9, 9, 1.0 / 9.0);
        let dense = (&mi * v * &mi).diagonal();
        let got = variance_diag_normalized(&est, Normalization::MeanZero).unwrap();
        assert!((got - dense).amax() < 1e-12);
    }

    #[test]
    fn homoskedastic_needs_residual_df() {
        let g = Graph::unweighted(3, &[(0, 1), (1, 2)]).unwrap();
        let fit = fit_full(&g, &DVector::from_vec(vec![1.0, 2.0]), &DMatrix::zeros(2, 0)).unwrap();
        assert!(matches!(sigma2_hat(&fit), Err(NetError::NoResidualDf { m: 2, needed: 2 })));
    }

    #[test]
    fn diagnostics_patterns() {
        let net = Network::new(&hypercube(4).unwrap()).unwrap();
        let dg = diagnostics(&net, 1.0, None).unwrap();
        assert!(dg.ratio.iter().all(|&r| (r - dg.ratio[0]).abs() < 1e-12));

        // sparse: long path-like chain with a few shortcuts
        let mut pairs: Vec<_> = (0..199).map(|i| (i, i + 1)).collect();
        pairs.extend([(0, 50), (100, 150)]);
        let net = Network::new(&Graph::unweighted(200, &pairs).unwrap()).unwrap();
        let dg = diagnostics(&net, 1.0, None).unwrap();
        assert!(dg.ratio_deciles.mean > 2.0 && dg.ratio_deciles.deciles[0] > 1.0);

        // dense Erdős–Rényi with p = 0.5
        let g = largest_component(&erdos_renyi(200, 0.5, 3).unwrap()).graph;
        let net = Network::new(&g).unwrap();
        let dg = diagnostics(&net, 1.0, None).unwrap();
        assert!(dg.ratio_deciles.deciles[0] > 0.95 && dg.ratio_deciles.deciles[8] < 1.05);
    }

    #[test]
    fn report_layout() {
        let net = Network::new(&star(5).unwrap()).unwrap();
        let r = connectivity_report(&net, None, 1.0).unwrap();
        assert_eq!(r.vertices.len(), 5);
        assert!(r.deciles.contains_key("H_i"));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["global"]["lambda2"].as_f64().unwrap() > 0.99);
        assert!(json["vertices"][0]["Sdag_ii"].is_number());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn bounds_contain_exact_variances(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(3..25);
            let extra = rng.random_range(0..2 * n);
            let g = random_connected(n, extra, &mut rng);
            let net = Network::new(&g).unwrap();
            let sigma2 = 1.3;
            let b = vertex_variance_bounds(&net, sigma2).unwrap();
            let alt = mean_zero_bounds(&net, sigma2).unwrap();
            for i in 0..n {
                prop_assert!(b.lower[i] <= b.exact[i] + 1e-10 && b.exact[i] <= b.upper[i] + 1e-10);
                let v = alt.exact[i];
                prop_assert!(alt.s3_lower[i] <= v + 1e-10);
                prop_assert!(v <= alt.s2_upper[i] + 1e-10 && v <= alt.s3_upper[i] + 1e-10);
            }
            let i = (seed as usize) % n;
            let pb = pair_variance_bounds(&net, sigma2, i, (i + 1) % n).unwrap();
            prop_assert!(pb.lower <= pb.exact + 1e-10 && pb.exact <= pb.upper + 1e-10);

            prop_assume!(g.m() >= n + 1);
            let x = DMatrix::from_fn(g.m(), 1, |_, _| rng.sample(StandardNormal));
            let rx = rho_and_xbar(&net.gm, &x).unwrap();
            prop_assert!((0.0..=1.0).contains(&rx.rho));
            let gap = covariate_gap_bounds(&net, &x, sigma2).unwrap();
            for i in 0..n {
                prop_assert!(gap.exact_gap[i] >= -1e-10 && gap.exact_gap[i] <= gap.bound[i] + 1e-10);
            }
        }
    }
}
