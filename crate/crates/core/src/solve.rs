//! Application of the d-normalized pseudoinverse L* through the augmented
//! system (L + dd′/vol) x = b, where vol = Σ d_i.
//!
//! Small graphs use a dense Cholesky factor; large graphs use
//! Jacobi-preconditioned conjugate gradients with matrix-free products.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{NetError, Result};
use crate::graph::GraphMatrices;
use crate::sparse::CsrMatrix;

/// Largest n handled with dense factorizations.
pub const DENSE_CUTOFF: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Dense,
    Iterative,
}

#[derive(Clone, Debug)]
enum Backend {
    Dense(Cholesky<f64, Dyn>),
    Cg { l: CsrMatrix, precond: DVector<f64> },
}

#[derive(Clone, Debug)]
pub struct LaplacianSolver {
    d: DVector<f64>,
    vol: f64,
    backend: Backend,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl LaplacianSolver {
    pub fn new(gm: &GraphMatrices) -> Result<Self> {
        let kind = if gm.n <= DENSE_CUTOFF {
            SolverKind::Dense
        } else {
            SolverKind::Iterative
        };
        Self::with_kind(gm, kind)
    }

    pub fn with_kind(gm: &GraphMatrices, kind: SolverKind) -> Result<Self> {
        if let Some(v) = gm.d.iter().position(|&x| x <= 0.0) {
            return Err(NetError::IsolatedVertex { vertex: v });
        }
        let d = gm.d.clone();
        let vol = d.sum();
        let backend = match kind {
            SolverKind::Dense => {
                let m = augmented_dense(&gm.l.to_dense(), &d);
                Backend::Dense(checked_cholesky(m)?)
            }
            SolverKind::Iterative => Backend::Cg {
                l: gm.l.clone(),
                precond: d.map(|di| 1.0 / (di + di * di / vol)),
            },
        };
        Ok(Self {
            d,
            vol,
            backend,
            cg_tol: 1e-12,
            cg_max_iter: 20 * gm.n.max(50),
        })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn kind(&self) -> SolverKind {
        match self.backend {
            Backend::Dense(_) => SolverKind::Dense,
            Backend::Cg { .. } => SolverKind::Iterative,
        }
    }

    /// Solves (L + dd′/vol) x = b.
    pub fn solve_augmented(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.backend {
            Backend::Dense(ch) => Ok(ch.solve(b)),
            Backend::Cg { l, precond } => {
                let op = |x: &DVector<f64>| {
                    let mut y = l.mul_vec(x);
                    y.axpy(self.d.dot(x) / self.vol, &self.d, 1.0);
                    y
                };
                pcg(op, precond, b, self.cg_tol, self.cg_max_iter)
            }
        }
    }

    /// Computes L* b.
    pub fn apply(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = self.solve_augmented(b)?;
        let shift = b.sum() / self.vol;
        x.add_scalar_mut(-shift);
        Ok(x)
    }

    /// Applies L* to each column of `b`.
    pub fn apply_columns(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.ncols() == 0 {
            return Ok(DMatrix::zeros(self.n(), 0));
        }
        let cols: Vec<DVector<f64>> = (0..b.ncols())
            .into_par_iter()
            .map(|k| self.apply(&b.column(k).into_owned()))
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// The full matrix L*.
    pub fn lstar_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        match &self.backend {
            Backend::Dense(ch) => {
                let mut inv = ch.inverse();
                inv.add_scalar_mut(-1.0 / self.vol);
                Ok(inv)
            }
            Backend::Cg { .. } => self.apply_columns(&DMatrix::identity(n, n)),
        }
    }

    /// Diagonal of L*.
    pub fn diag(&self) -> Result<DVector<f64>> {
        let n = self.n();
        match &self.backend {
            Backend::Dense(_) => Ok(self.lstar_dense()?.diagonal()),
            Backend::Cg { .. } => {
                let vals: Vec<f64> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut e = DVector::zeros(n);
                        e[i] = 1.0;
                        self.apply(&e).map(|x| x[i])
                    })
                    .collect::<Result<_>>()?;
                Ok(DVector::from_vec(vals))
            }
        }
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn volume(&self) -> f64 {
        self.vol
    }
}

/// L + dd′/vol for a dense Laplacian-like matrix.
pub fn augmented_dense(lap: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let vol = d.sum();
    lap + d * d.transpose() / vol
}

/// The d-normalized generalized inverse of a PSD matrix with null vector ι:
/// (M + dd′/vol)⁻¹ − ιι′/vol.
pub fn star_inverse_dense(mat: &DMatrix<f64>, d: &DVector<f64>) -> Result<DMatrix<f64>> {
    let vol = d.sum();
    let ch = checked_cholesky(augmented_dense(mat, d))?;
    let mut inv = ch.inverse();
    inv.add_scalar_mut(-1.0 / vol);
    Ok(inv)
}

/// Cholesky factorization that also rejects numerically zero pivots.
fn checked_cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().amax();
    let ch = Cholesky::new(m).ok_or(NetError::SingularAugmented)?;
    let min_pivot = ch.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if min_pivot <= 1e-13 * scale {
        return Err(NetError::SingularAugmented);
    }
    Ok(ch)
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. `precond` holds the inverse diagonal.
pub fn pcg<F>(
    op: F,
    precond: &DVector<f64>,
    b: &DVector<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let bnorm = b.norm();
    let mut x = DVector::zeros(b.len());
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut z = r.component_mul(precond);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        let ap = op(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= rel_tol * bnorm {
            return Ok(x);
        }
        z = r.component_mul(precond);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(NetError::NonConvergence {
        iterations: max_iter,
        residual: r.norm() / bnorm,
    })
}
