//! Normalized Laplacian, spectral gap, Cheeger constant and the
//! d-normalized pseudoinverse L* = D^{-1/2} S† D^{-1/2}.

pub mod cheeger;
pub mod lanczos;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{NetError, Result};
use crate::graph::{Graph, GraphMatrices};
use crate::solve::{LaplacianSolver, DENSE_CUTOFF};

pub use cheeger::{cheeger_exact, CHEEGER_MAX_N};
use lanczos::{extreme_eigenpair, LanczosOptions, Which};

pub const DEFAULT_TOL: f64 = 1e-8;

fn inv_sqrt_degrees(gm: &GraphMatrices) -> Result<DVector<f64>> {
    if let Some(v) = gm.d.iter().position(|&x| x <= 0.0) {
        return Err(NetError::IsolatedVertex { vertex: v });
    }
    Ok(gm.d.map(|x| 1.0 / x.sqrt()))
}

/// S = D^{-1/2} L D^{-1/2} as a dense matrix.
pub fn normalized_laplacian(gm: &GraphMatrices) -> Result<DMatrix<f64>> {
    let s = inv_sqrt_degrees(gm)?;
    let mut out = gm.l.to_dense();
    for i in 0..gm.n {
        for j in 0..gm.n {
            out[(i, j)] *= s[i] * s[j];
        }
    }
    Ok(out)
}

/// Unit null vector D^{1/2}ι / ‖D^{1/2}ι‖ of S.
pub fn null_vector(gm: &GraphMatrices) -> DVector<f64> {
    let v = gm.d.map(f64::sqrt);
    let nrm = v.norm();
    v / nrm
}

/// All eigenvalues of S in ascending order.
pub fn spectrum(gm: &GraphMatrices) -> Result<DVector<f64>> {
    let s = normalized_laplacian(gm)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(ev))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    /// Dense up to n = 2000, Lanczos above.
    Auto,
    Dense,
    Lanczos,
}

impl EigenMethod {
    fn resolve(self, n: usize) -> Self {
        match self {
            EigenMethod::Auto if n <= DENSE_CUTOFF => EigenMethod::Dense,
            EigenMethod::Auto => EigenMethod::Lanczos,
            m => m,
        }
    }
}

fn lanczos_extreme(gm: &GraphMatrices, which: Which, tol: f64) -> Result<f64> {
    let s = inv_sqrt_degrees(gm)?;
    let psi = null_vector(gm);
    let op = |x: &DVector<f64>| {
        let y = gm.a.mul_vec(&x.component_mul(&s)).component_mul(&s);
        x - y
    };
    let opts = LanczosOptions {
        tol,
        ..Default::default()
    };
    Ok(extreme_eigenpair(op, gm.n, &psi, which, &opts)?.value)
}

/// Smallest nonzero and largest eigenvalue of S.
pub fn extremes(gm: &GraphMatrices, tol: f64, method: EigenMethod) -> Result<(f64, f64)> {
    match method.resolve(gm.n) {
        EigenMethod::Dense => {
            let ev = spectrum(gm)?;
            let n = ev.len();
            Ok((ev[1.min(n - 1)], ev[n - 1]))
        }
        _ => Ok((
            lanczos_extreme(gm, Which::Smallest, tol)?,
            lanczos_extreme(gm, Which::Largest, tol)?,
        )),
    }
}

/// Spectral gap λ₂ of a connected graph.
pub fn lambda2(g: &Graph, tol: f64) -> Result<f64> {
    lambda2_with(g, tol, EigenMethod::Auto)
}

pub fn lambda2_with(g: &Graph, tol: f64, method: EigenMethod) -> Result<f64> {
    g.require_connected()?;
    let gm = g.matrices();
    match method.resolve(g.n()) {
        EigenMethod::Dense => Ok(spectrum(&gm)?[1]),
        _ => lanczos_extreme(&gm, Which::Smallest, tol),
    }
}

/// Interval for C implied by λ₂: 2C ≥ λ₂ gives C ≥ λ₂/2 and
/// λ₂ ≥ 1 − √(1 − C²) gives C ≤ √(λ₂(2 − λ₂)).
pub fn cheeger_interval(lambda2: f64) -> (f64, f64) {
    let upper = (lambda2 * (2.0 - lambda2)).max(0.0).sqrt().min(1.0);
    (lambda2 / 2.0, upper)
}

/// Checks 2C ≥ λ₂ ≥ 1 − √(1 − C²) ≥ C²/2 with additive slack.
pub fn cheeger_chain_holds(c: f64, lambda2: f64, slack: f64) -> bool {
    let mid = 1.0 - (1.0 - c * c).max(0.0).sqrt();
    2.0 * c + slack >= lambda2 && lambda2 + slack >= mid && mid + slack >= c * c / 2.0
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralSummary {
    pub lambda2: f64,
    pub lambda_max: f64,
    /// Exact value, present when n ≤ 24.
    pub cheeger: Option<f64>,
    /// Range for C implied by λ₂.
    pub cheeger_bounds: (f64, f64),
}

pub fn spectral_summary(g: &Graph, tol: f64) -> Result<SpectralSummary> {
    g.require_connected()?;
    let gm = g.matrices();
    let (lambda2, lambda_max) = extremes(&gm, tol, EigenMethod::Auto)?;
    let cheeger = if g.n() <= CHEEGER_MAX_N {
        Some(cheeger_exact(g)?)
    } else {
        None
    };
    Ok(SpectralSummary {
        lambda2,
        lambda_max,
        cheeger,
        cheeger_bounds: cheeger_interval(lambda2),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinvMethod {
    DenseEigen,
    LinearSolve,
    StochasticDiag,
}

#[derive(Clone, Debug)]
pub struct PseudoinverseBundle {
    /// Dense L*, present up to n = 2000.
    pub lstar: Option<DMatrix<f64>>,
    pub diag_lstar: DVector<f64>,
    pub diag_sdag: DVector<f64>,
    pub method: PinvMethod,
}

/// L* through the augmented solve (L + dd′/vol)⁻¹ − ιι′/vol.
pub fn pseudoinverse_star(gm: &GraphMatrices) -> Result<PseudoinverseBundle> {
    let solver = LaplacianSolver::new(gm)?;
    let (lstar, diag_lstar) = if gm.n <= DENSE_CUTOFF {
        let ls = solver.lstar_dense()?;
        let dg = ls.diagonal();
        (Some(ls), dg)
    } else {
        (None, solver.diag()?)
    };
    let diag_sdag = diag_lstar.component_mul(&gm.d);
    Ok(PseudoinverseBundle {
        lstar,
        diag_lstar,
        diag_sdag,
        method: PinvMethod::LinearSolve,
    })
}

/// L* = D^{-1/2} S† D^{-1/2} from a full eigendecomposition of S.
pub fn lstar_eigen(gm: &GraphMatrices) -> Result<DMatrix<f64>> {
    let s_inv = inv_sqrt_degrees(gm)?;
    let eig = SymmetricEigen::new(normalized_laplacian(gm)?);
    let n = gm.n;
    let cutoff = 1e-10 * eig.eigenvalues.amax();
    let mut sdag = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam > cutoff {
            let v = eig.eigenvectors.column(k);
            sdag += v * v.transpose() / lam;
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| s_inv[i] * sdag[(i, j)] * s_inv[j]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagMode {
    Exact,
    Stochastic { k_probes: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct DiagEstimate {
    pub values: DVector<f64>,
    /// Per-entry standard error; only for the stochastic estimator.
    pub se: Option<DVector<f64>>,
    pub method: PinvMethod,
}

/// Diagonal of S†, i.e. d_i (L*)_ii.
pub fn diag_sdag(g: &Graph, mode: DiagMode) -> Result<DiagEstimate> {
    g.require_connected()?;
    let gm = g.matrices();
    match mode {
        DiagMode::Exact => {
            let b = pseudoinverse_star(&gm)?;
            Ok(DiagEstimate {
                values: b.diag_sdag,
                se: None,
                method: b.method,
            })
        }
        DiagMode::Stochastic { k_probes, seed } => stochastic_diag(&gm, k_probes, seed),
    }
}

/// Rademacher probe estimator mean_k v_k ⊙ S† v_k. Probe k draws from stream
/// k of a ChaCha8 generator seeded with `seed`, so results do not depend on
/// the thread count.
fn stochastic_diag(gm: &GraphMatrices, k_probes: usize, seed: u64) -> Result<DiagEstimate> {
    if k_probes < 8 {
        return Err(NetError::TooFewProbes(k_probes));
    }
    let solver = LaplacianSolver::new(gm)?;
    let sq = gm.d.map(f64::sqrt);
    let n = gm.n;
    let samples: Vec<DVector<f64>> = (0..k_probes)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let v = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let sv = solver.apply(&v.component_mul(&sq))?.component_mul(&sq);
            Ok(v.component_mul(&sv))
        })
        .collect::<Result<_>>()?;
    let kf = k_probes as f64;
    let mean = samples.iter().fold(DVector::zeros(n), |acc, s| acc + s) / kf;
    let var = samples
        .iter()
        .fold(DVector::zeros(n), |acc: DVector<f64>, s| {
            acc + (s - &mean).map(|x| x * x)
        })
        / (kf - 1.0);
    Ok(DiagEstimate {
        values: mean,
        se: Some(var.map(|v| (v / kf).sqrt())),
        method: PinvMethod::StochasticDiag,
    })
}
