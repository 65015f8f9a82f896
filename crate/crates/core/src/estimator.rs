//! Constrained least squares for y = Xβ + Bα + u subject to d′α = 0.
//!
//! β̌ is computed first from the QR factorization of M_B X, where
//! M_B = I − B L* B′, and α̌ = L* B′(y − Xβ̌).

use nalgebra::{ColPivQR, DMatrix, DVector};
use serde::Serialize;

use crate::bipartite::{BipartiteData, StackedGraph};
use crate::error::{NetError, Result};
use crate::graph::{Graph, GraphMatrices};
use crate::solve::LaplacianSolver;

/// Relative threshold on |R_kk| used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// d′α = 0
    DWeighted,
    /// ι′α = 0
    MeanZero,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub p: usize,
    pub rank_x: usize,
    /// rank of (X, B); full rank is p + n − 1.
    pub rank_xb: usize,
    pub required_xb: usize,
    pub connected: bool,
}

#[derive(Clone, Debug)]
pub struct FixedEffectFit {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub normalization: Normalization,
    pub rank_report: RankReport,
}

impl FixedEffectFit {
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn m(&self) -> usize {
        self.residuals.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

/// Number of |R_kk| of a column-pivoted QR above `RANK_TOL · scale`.
pub fn numerical_rank(mat: &DMatrix<f64>, scale: f64) -> usize {
    if mat.ncols() == 0 || mat.nrows() == 0 {
        return 0;
    }
    let r = ColPivQR::new(mat.clone()).r();
    let k = r.nrows().min(r.ncols());
    (0..k).filter(|&i| r[(i, i)].abs() > RANK_TOL * scale).count()
}

pub fn max_column_norm(mat: &DMatrix<f64>) -> f64 {
    mat.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Reusable fitting context for a fixed graph and covariate matrix.
#[derive(Clone, Debug)]
pub struct Estimator {
    gm: GraphMatrices,
    solver: LaplacianSolver,
    x: DMatrix<f64>,
    /// G = L* B′X (n×p)
    g: DMatrix<f64>,
    /// thin QR factors of M_B X
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    rank_report: RankReport,
}

impl Estimator {
    /// Checks connectivity and the rank conditions, then factors.
    pub fn new(g: &Graph, x: &DMatrix<f64>) -> Result<Self> {
        g.require_connected()?;
        Self::from_matrices(g.matrices(), x)
    }

    /// Skips the connectivity pre-check; a disconnected graph then surfaces
    /// as a singular augmented system.
    pub fn from_matrices(gm: GraphMatrices, x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() != gm.m {
            return Err(NetError::Dimension(format!(
                "X has {} rows for {} edges",
                x.nrows(),
                gm.m
            )));
        }
        let solver = LaplacianSolver::new(&gm)?;
        let p = x.ncols();
        let scale = max_column_norm(x);
        let rank_x = numerical_rank(x, scale);
        if rank_x < p {
            return Err(NetError::CollinearCovariates { rank: rank_x, p });
        }
        let bx = gm.b.tr_mul_dense(x);
        let g = solver.apply_columns(&bx)?;
        let mbx = x - gm.b.mul_dense(&g);
        let rank_mbx = numerical_rank(&mbx, scale);
        let rank_report = RankReport {
            p,
            rank_x,
            rank_xb: gm.n - 1 + rank_mbx,
            required_xb: p + gm.n - 1,
            connected: true,
        };
        if rank_mbx < p {
            return Err(NetError::CollinearWithNetwork {
                deficiency: p - rank_mbx,
            });
        }
        let qr = mbx.qr();
        Ok(Self {
            q: qr.q(),
            r: qr.r(),
            gm,
            solver,
            x: x.clone(),
            g,
            rank_report,
        })
    }

    pub fn matrices(&self) -> &GraphMatrices {
        &self.gm
    }

    pub fn solver(&self) -> &LaplacianSolver {
        &self.solver
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn rank_report(&self) -> &RankReport {
        &self.rank_report
    }

    /// L* B′X
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// (X′M_B X)⁻¹ from the R factor.
    pub fn xmx_inverse(&self) -> DMatrix<f64> {
        let p = self.x.ncols();
        let rinv = self
            .r
            .clone()
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .expect("R is nonsingular after the rank check");
        &rinv * rinv.transpose()
    }

    pub fn fit(&self, y: &DVector<f64>) -> Result<FixedEffectFit> {
        if y.len() != self.gm.m {
            return Err(NetError::Dimension(format!(
                "y has {} entries for {} edges",
                y.len(),
                self.gm.m
            )));
        }
        let beta = if self.x.ncols() > 0 {
            self.r
                .solve_upper_triangular(&(self.q.transpose() * y))
                .expect("R is nonsingular after the rank check")
        } else {
            DVector::zeros(0)
        };
        let z = y - &self.x * &beta;
        let alpha = self.solver.apply(&self.gm.b.tr_mul_vec(&z))?;
        let residuals = &z - self.gm.b.mul_vec(&alpha);
        Ok(FixedEffectFit {
            alpha,
            beta,
            residuals,
            normalization: Normalization::DWeighted,
            rank_report: self.rank_report.clone(),
        })
    }

    /// diag((B′M_X B)*) = diag(L* + G (X′M_B X)⁻¹ G′).
    pub fn variance_diag(&self) -> Result<DVector<f64>> {
        let mut v = self.solver.diag()?;
        if self.x.ncols() > 0 {
            let inv = self.xmx_inverse();
            for i in 0..v.len() {
                let gi = self.g.row(i).transpose();
                v[i] += (gi.transpose() * &inv * &gi)[(0, 0)];
            }
        }
        Ok(v)
    }
}

/// α̂ = L* B′z for known β.
pub fn fit_alpha_known_beta(g: &Graph, z: &DVector<f64>) -> Result<DVector<f64>> {
    g.require_connected()?;
    let gm = g.matrices();
    if z.len() != gm.m {
        return Err(NetError::Dimension(format!("z has {} entries for {} edges", z.len(), gm.m)));
    }
    LaplacianSolver::new(&gm)?.apply(&gm.b.tr_mul_vec(z))
}

pub fn fit_full(g: &Graph, y: &DVector<f64>, x: &DMatrix<f64>) -> Result<FixedEffectFit> {
    Estimator::new(g, x)?.fit(y)
}

/// α̂⋄ = M_ι α̌.
pub fn fit_alternative_normalization(fit: &FixedEffectFit) -> FixedEffectFit {
    let mean = fit.alpha.mean();
    FixedEffectFit {
        alpha: fit.alpha.add_scalar(-mean),
        normalization: Normalization::MeanZero,
        ..fit.clone()
    }
}

/// η̌ and β̌ from the three equivalent routes, each with ι′η̌ = 0.
#[derive(Clone, Debug)]
pub struct EtaRoutes {
    pub joint: DVector<f64>,
    pub profiled: DVector<f64>,
    pub weighted_fd: DVector<f64>,
    pub beta_joint: DVector<f64>,
    pub beta_profiled: DVector<f64>,
    pub beta_weighted_fd: DVector<f64>,
}

fn center(v: DVector<f64>) -> DVector<f64> {
    let m = v.mean();
    v.add_scalar(-m)
}

/// Least squares of `target` on (Z₂, Z_X) with the last column of Z₂
/// dropped (η_last = 0). Returns (η, β).
fn ols_drop_last(z2: &DMatrix<f64>, zx: &DMatrix<f64>, target: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let n2 = z2.ncols();
    let p = zx.ncols();
    let rows = z2.nrows();
    let k = n2 - 1 + p;
    let design = DMatrix::from_fn(rows, k, |r, c| if c < n2 - 1 { z2[(r, c)] } else { zx[(r, c - (n2 - 1))] });
    if rows < k || numerical_rank(&design, max_column_norm(&design).max(1e-300)) < k {
        return Err(NetError::CollinearWithNetwork {
            deficiency: k - numerical_rank(&design, max_column_norm(&design).max(1e-300)),
        });
    }
    let qr = design.qr();
    let coef = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * target))
        .ok_or(NetError::CollinearWithNetwork { deficiency: 1 })?;
    let mut eta = DVector::zeros(n2);
    eta.rows_mut(0, n2 - 1).copy_from(&coef.rows(0, n2 - 1));
    Ok((eta, coef.rows(n2 - 1, p).into_owned()))
}

fn demean_cols(bd: &BipartiteData, mat: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<_> = mat.column_iter().map(|c| bd.demean_by_type1(&c.into_owned())).collect();
    if cols.is_empty() {
        DMatrix::zeros(mat.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn eta_profiled(bd: &BipartiteData) -> Result<(DVector<f64>, DVector<f64>)> {
    let b2 = bd.b2().to_dense();
    let (eta, beta) = ols_drop_last(&demean_cols(bd, &b2), &demean_cols(bd, &bd.x), &bd.demean_by_type1(&bd.y))?;
    Ok((center(eta), beta))
}

fn eta_weighted_fd(bd: &BipartiteData) -> Result<(DVector<f64>, DVector<f64>)> {
    let proj = bd.one_mode_projection();
    let b2 = bd.b2().to_dense();
    let wq = |mat: &DMatrix<f64>| {
        let out = proj.q.mul_dense(mat);
        DMatrix::from_fn(out.nrows(), out.ncols(), |r, c| out[(r, c)] * proj.w[r])
    };
    let (eta, beta) = ols_drop_last(&wq(&b2), &wq(&bd.x), &proj.wq_apply(&bd.y))?;
    Ok((center(eta), beta))
}

/// Joint fit on the stacked graph, OLS on the profiled equation, and OLS on
/// the weighted first differences.
pub fn fit_eta_three_ways(bd: &BipartiteData) -> Result<EtaRoutes> {
    let sg = bd.stack_two_way()?;
    let fit = fit_full(&sg.graph, &bd.y, &bd.x)?;
    let (_, eta_joint) = sg.split(&fit.alpha);
    let (eta_p, beta_p) = eta_profiled(bd)?;
    let (eta_w, beta_w) = eta_weighted_fd(bd)?;
    Ok(EtaRoutes {
        joint: center(eta_joint),
        profiled: eta_p,
        weighted_fd: eta_w,
        beta_joint: fit.beta,
        beta_profiled: beta_p,
        beta_weighted_fd: beta_w,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaRoute {
    Joint,
    Profiled,
    WeightedFd,
}

/// Two-way fit with μ̌, η̌ split out of the stacked α̌.
#[derive(Clone, Debug)]
pub struct TwoWayFit {
    pub stacked: StackedGraph,
    pub estimator: Estimator,
    /// Stacked α̌ = (μ̌, −η̌) under the requested normalization.
    pub fit: FixedEffectFit,
    pub mu: DVector<f64>,
    pub eta: DVector<f64>,
    pub route: EtaRoute,
}

/// Fits y = μ_i + η_j + xβ + u. Every route yields the same (μ̌, η̌) once the
/// common level is fixed by `normalization` on the stacked vector.
pub fn fit_two_way(bd: &BipartiteData, route: EtaRoute, normalization: Normalization) -> Result<TwoWayFit> {
    let stacked = bd.stack_two_way()?;
    let estimator = Estimator::new(&stacked.graph, &bd.x)?;
    let joint = estimator.fit(&bd.y)?;
    let (eta, beta) = match route {
        EtaRoute::Joint => (stacked.split(&joint.alpha).1, joint.beta.clone()),
        EtaRoute::Profiled => eta_profiled(bd)?,
        EtaRoute::WeightedFd => eta_weighted_fd(bd)?,
    };
    let partial = &bd.y - &bd.x * &beta;
    let mut mu = DVector::zeros(bd.n1);
    let mut count = vec![0usize; bd.n1];
    for e in 0..bd.m() {
        mu[bd.rows_i[e]] += partial[e] - eta[bd.rows_j[e]];
        count[bd.rows_i[e]] += 1;
    }
    for (v, c) in mu.iter_mut().zip(&count) {
        *v /= *c as f64;
    }
    let mut alpha = stacked.join(&mu, &eta);
    let shift = match normalization {
        Normalization::DWeighted => {
            let d = &estimator.matrices().d;
            d.dot(&alpha) / d.sum()
        }
        Normalization::MeanZero => alpha.mean(),
    };
    alpha.add_scalar_mut(-shift);
    let (mu, eta) = stacked.split(&alpha);
    let residuals = DVector::from_fn(bd.m(), |e, _| partial[e] - mu[bd.rows_i[e]] - eta[bd.rows_j[e]]);
    let fit = FixedEffectFit {
        alpha,
        beta,
        residuals,
        normalization,
        rank_report: estimator.rank_report().clone(),
    };
    Ok(TwoWayFit {
        stacked,
        estimator,
        fit,
        mu,
        eta,
        route,
    })
}

/// Unweighted OLS on the first differences Qy; not equivalent to the routes
/// above when type-1 degrees differ.
pub fn first_difference_ols(bd: &BipartiteData) -> Result<(DVector<f64>, DVector<f64>)> {
    let proj = bd.one_mode_projection();
    let b2 = bd.b2().to_dense();
    let (eta, beta) = ols_drop_last(&proj.q.mul_dense(&b2), &proj.q.mul_dense(&bd.x), &proj.q.mul_vec(&bd.y))?;
    Ok((center(eta), beta))
}
