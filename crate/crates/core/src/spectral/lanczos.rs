//! Restarted Lanczos with full reorthogonalization for one extreme eigenvalue
//! of a symmetric operator, restricted to the complement of a known unit
//! null vector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NetError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Stop once the Ritz residual norm falls below this value.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            krylov_dim: 120,
            max_restarts: 200,
            tol: 1e-8,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RitzPair {
    pub value: f64,
    pub vector: DVector<f64>,
    pub residual: f64,
    pub matvecs: usize,
}

fn project_out(v: &mut DVector<f64>, q: &DVector<f64>) {
    let c = q.dot(v);
    v.axpy(-c, q, 1.0);
}

/// Finds the requested extreme eigenpair of `op` on the orthogonal complement
/// of `deflate` (assumed unit norm).
pub fn extreme_eigenpair<F>(
    op: F,
    n: usize,
    deflate: &DVector<f64>,
    which: Which,
    opts: &LanczosOptions,
) -> Result<RitzPair>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let dim = opts.krylov_dim.min(n.saturating_sub(1)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    project_out(&mut start, deflate);
    let mut matvecs = 0;
    let mut last_residual = f64::INFINITY;

    for _ in 0..opts.max_restarts {
        let nrm = start.norm();
        if nrm == 0.0 {
            return Err(NetError::InvalidParameter("degenerate Lanczos start".into()));
        }
        let mut basis: Vec<DVector<f64>> = vec![start / nrm];
        let mut alpha = Vec::with_capacity(dim);
        let mut beta: Vec<f64> = Vec::with_capacity(dim);
        let mut exhausted = false;

        for k in 0..dim {
            let mut w = op(&basis[k]);
            matvecs += 1;
            project_out(&mut w, deflate);
            let a = basis[k].dot(&w);
            alpha.push(a);
            // two passes of Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for q in &basis {
                    project_out(&mut w, q);
                }
                project_out(&mut w, deflate);
            }
            let b = w.norm();
            if k + 1 == dim {
                beta.push(b);
                break;
            }
            if b <= 1e-14 * a.abs().max(1.0) {
                beta.push(0.0);
                exhausted = true;
                break;
            }
            beta.push(b);
            basis.push(w / b);
        }

        let k = alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let idx = (0..k)
            .reduce(|best, i| {
                let better = match which {
                    Which::Smallest => eig.eigenvalues[i] < eig.eigenvalues[best],
                    Which::Largest => eig.eigenvalues[i] > eig.eigenvalues[best],
                };
                if better {
                    i
                } else {
                    best
                }
            })
            .unwrap();
        let theta = eig.eigenvalues[idx];
        let y = eig.eigenvectors.column(idx);
        let mut x = DVector::zeros(n);
        for (q, &c) in basis.iter().zip(y.iter()) {
            x.axpy(c, q, 1.0);
        }
        let residual = (beta[k - 1] * y[k - 1]).abs();
        last_residual = residual;
        if residual <= opts.tol || exhausted || k >= n.saturating_sub(1) {
            // confirm with an explicit residual
            let mut r = op(&x);
            matvecs += 1;
            project_out(&mut r, deflate);
            r.axpy(-theta, &x, 1.0);
            let true_res = r.norm();
            if true_res <= opts.tol.max(1e-12) * 10.0 {
                return Ok(RitzPair {
                    value: theta,
                    vector: x,
                    residual: true_res,
                    matvecs,
                });
            }
            last_residual = true_res;
        }
        start = x;
    }
    Err(NetError::NonConvergence {
        iterations: matvecs,
        residual: last_residual,
    })
}
