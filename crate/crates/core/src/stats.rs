//! Summary statistics used by the reports and the Monte Carlo checks.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with the n − 1 divisor.
pub fn sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Quantile by linear interpolation between order statistics
/// (Hyndman–Fan type 7). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, standard deviation and deciles 1–9.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecileRow {
    pub mean: f64,
    pub sd: f64,
    pub deciles: [f64; 9],
}

impl DecileRow {
    pub fn of(x: &[f64]) -> Self {
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        let mut deciles = [0.0; 9];
        for (k, d) in deciles.iter_mut().enumerate() {
            *d = quantile_sorted(&s, (k + 1) as f64 / 10.0);
        }
        Self {
            mean: mean(x),
            sd: sd(x),
            deciles,
        }
    }
}

/// One-sample Kolmogorov–Smirnov test against N(0, 1). Returns (D, p-value).
pub fn ks_test_standard_normal(x: &[f64]) -> (f64, f64) {
    let normal = Normal::new(0.0, 1.0).expect("valid parameters");
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &v) in s.iter().enumerate() {
        let f = normal.cdf(v);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    let sqrt_n = n.sqrt();
    (d, kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Ordinary least squares slope of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
