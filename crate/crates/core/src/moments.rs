//! Cross-sectional moments of the estimated effects and their bias corrections.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{NetError, Result};
use crate::estimator::{Estimator, FixedEffectFit};
use crate::inference::StandardErrors;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub functional: String,
    pub tau_hat: f64,
    pub bias_hat: f64,
    pub tau_corrected: f64,
    /// σ̂²tr(L*)/(n−1), reported next to the correction actually applied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_trace_lstar: Option<f64>,
}

impl MomentEstimate {
    pub fn new(functional: impl Into<String>, tau_hat: f64, bias_hat: f64) -> Self {
        Self {
            functional: functional.into(),
            tau_hat,
            bias_hat,
            tau_corrected: tau_hat - bias_hat,
            bias_trace_lstar: None,
        }
    }
}

/// α̌′M_ι α̌/(n−1).
pub fn sample_variance(fit: &FixedEffectFit) -> Result<f64> {
    sample_variance_of(&fit.alpha)
}

pub fn sample_variance_of(a: &DVector<f64>) -> Result<f64> {
    let n = a.len();
    if n < 2 {
        return Err(NetError::InvalidParameter("sample variance needs n ≥ 2".into()));
    }
    let mean = a.mean();
    Ok(a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
}

/// Expected upward bias of the sample variance per unit σ².
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceBias {
    /// tr(V)/(n−1)
    pub trace: f64,
    /// tr(M_ι V M_ι)/(n−1), the exact expectation of the bias
    pub centered_trace: f64,
}

/// Trace terms for V = var(α̌)/σ² = L* + G(X′M_B X)⁻¹G′; with p = 0 this is
/// tr(L*) and tr(M_ι L* M_ι).
pub fn variance_traces(est: &Estimator) -> Result<VarianceBias> {
    let n = est.matrices().n;
    if n < 2 {
        return Err(NetError::InvalidParameter("need n ≥ 2".into()));
    }
    let diag = est.variance_diag()?;
    let ones = DVector::from_element(n, 1.0);
    let mut v_iota = est.solver().apply(&ones)?;
    if est.covariates().ncols() > 0 {
        let g = est.g();
        v_iota += g * (est.xmx_inverse() * (g.transpose() * &ones));
    }
    let tr = diag.sum();
    let nm1 = (n - 1) as f64;
    Ok(VarianceBias {
        trace: tr / nm1,
        centered_trace: (tr - v_iota.sum() / n as f64) / nm1,
    })
}

/// Both bias variants of the sample variance under homoskedastic errors.
pub fn variance_bias_homoskedastic(est: &Estimator, sigma2: f64) -> Result<VarianceBias> {
    let t = variance_traces(est)?;
    Ok(VarianceBias {
        trace: sigma2 * t.trace,
        centered_trace: sigma2 * t.centered_trace,
    })
}

/// Sample variance minus σ̂² tr(M_ι V M_ι)/(n−1).
pub fn bias_corrected_variance(est: &Estimator, fit: &FixedEffectFit, sigma2_hat: f64) -> Result<MomentEstimate> {
    let b = variance_bias_homoskedastic(est, sigma2_hat)?;
    let mut out = MomentEstimate::new("variance", sample_variance(fit)?, b.centered_trace);
    out.bias_trace_lstar = Some(b.trace);
    Ok(out)
}

/// τ̌ = n⁻¹Σφ(α̌_i) and b̌ = n⁻¹Σ φ″(α̌_i)/2 · se_i², where se_i² is the plug-in
/// b_i′Σ̌b_i/d_i².
pub fn functional_bias<F, F2>(
    name: &str,
    fit: &FixedEffectFit,
    phi: F,
    phi2: F2,
    ses: &StandardErrors,
) -> Result<MomentEstimate>
where
    F: Fn(f64) -> f64,
    F2: Fn(f64) -> f64,
{
    let n = fit.alpha.len();
    if ses.se.len() != n {
        return Err(NetError::Dimension(format!("{} standard errors for {n} effects", ses.se.len())));
    }
    let nf = n as f64;
    let tau = fit.alpha.iter().map(|&a| phi(a)).sum::<f64>() / nf;
    let bias = fit
        .alpha
        .iter()
        .zip(&ses.se)
        .map(|(&a, &s)| phi2(a) / 2.0 * s * s)
        .sum::<f64>()
        / nf;
    Ok(MomentEstimate::new(name, tau, bias))
}
