//! Graph families with closed-form spectral gaps and random fixtures.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bipartite::BipartiteData;
use crate::error::{NetError, Result};
use crate::graph::Graph;

fn need(ok: bool, msg: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(NetError::InvalidParameter(msg.into()))
    }
}

/// N-dimensional hypercube on 2^N vertices; vertices adjacent when their
/// binary labels differ in one bit.
pub fn hypercube(dim: usize) -> Result<Graph> {
    need((1..=24).contains(&dim), "hypercube needs 1 ≤ N ≤ 24")?;
    let n = 1usize << dim;
    let mut pairs = Vec::with_capacity(dim * n / 2);
    for v in 0..n {
        for b in 0..dim {
            let u = v ^ (1 << b);
            if v < u {
                pairs.push((v, u));
            }
        }
    }
    Graph::unweighted(n, &pairs)
}

/// Hypercube with extra edges between all vertices at Hamming distance two.
pub fn extended_hypercube(dim: usize) -> Result<Graph> {
    need((1..=20).contains(&dim), "extended hypercube needs 1 ≤ N ≤ 20")?;
    let n = 1usize << dim;
    let mut pairs = Vec::new();
    for v in 0..n {
        for b in 0..dim {
            let u = v ^ (1 << b);
            if v < u {
                pairs.push((v, u));
            }
            for c in b + 1..dim {
                let u = v ^ (1 << b) ^ (1 << c);
                if v < u {
                    pairs.push((v, u));
                }
            }
        }
    }
    Graph::unweighted(n, &pairs)
}

/// Star with center 0 and leaves 1..n.
pub fn star(n: usize) -> Result<Graph> {
    need(n >= 3, "star needs n ≥ 3")?;
    let pairs: Vec<_> = (1..n).map(|v| (0, v)).collect();
    Graph::unweighted(n, &pairs)
}

/// Hub 0 joined to every vertex of the cycle 1..n (rim of n − 1 vertices).
pub fn wheel(n: usize) -> Result<Graph> {
    need(n >= 4, "wheel needs n ≥ 4")?;
    let rim = n - 1;
    let mut pairs: Vec<_> = (1..n).map(|v| (0, v)).collect();
    pairs.extend((0..rim).map(|k| (1 + k, 1 + (k + 1) % rim)));
    Graph::unweighted(n, &pairs)
}

pub fn complete(n: usize) -> Result<Graph> {
    need(n >= 2, "complete graph needs n ≥ 2")?;
    let pairs: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    Graph::unweighted(n, &pairs)
}

pub fn hypercube_lambda2(dim: usize) -> f64 {
    2.0 / dim as f64
}

pub fn extended_hypercube_lambda2(dim: usize) -> f64 {
    4.0 / (dim as f64 + 1.0)
}

pub fn star_lambda2(_n: usize) -> f64 {
    1.0
}

/// Spectral gap of `wheel(n)`: min{4/3, 1 − (2/3)cos(2π/(n−1))}, the cycle
/// term taken over the n − 1 rim vertices.
pub fn wheel_lambda2(n: usize) -> f64 {
    wheel_lambda2_rim(n - 1)
}

/// min{4/3, 1 − (2/3)cos(2π/r)} for a wheel whose rim has r vertices.
pub fn wheel_lambda2_rim(r: usize) -> f64 {
    (4.0 / 3.0f64).min(1.0 - (2.0 / 3.0) * (2.0 * PI / r as f64).cos())
}

pub fn complete_lambda2(n: usize) -> f64 {
    n as f64 / (n as f64 - 1.0)
}

/// G(n, p) with geometric skipping over the n(n−1)/2 candidate pairs.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    need(n >= 2, "Erdős–Rényi needs n ≥ 2")?;
    need(p > 0.0 && p <= 1.0, "Erdős–Rényi needs p ∈ (0, 1]")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n * (n - 1) / 2;
    let mut pairs = Vec::new();
    if p == 1.0 {
        pairs.extend((0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))));
    } else {
        let log_q = (1.0 - p).ln();
        let mut k: usize = 0;
        let (mut a, mut row_start) = (0usize, 0usize);
        loop {
            let u: f64 = 1.0 - rng.random::<f64>();
            let skip = (u.ln() / log_q).floor();
            if skip >= (total - k) as f64 {
                break;
            }
            k += skip as usize;
            // pair index k → (a, b) in row-major upper-triangular order
            while k >= row_start + (n - 1 - a) {
                row_start += n - 1 - a;
                a += 1;
            }
            pairs.push((a, a + 1 + (k - row_start)));
            k += 1;
            if k >= total {
                break;
            }
        }
    }
    if pairs.is_empty() {
        return Err(NetError::EmptyEdgeList);
    }
    Graph::unweighted(n, &pairs)
}

/// Each type-1 vertex links to `edges_per_type1` distinct type-2 vertices
/// drawn uniformly. Outcomes are zero and there are no covariates.
pub fn random_bipartite(n1: usize, n2: usize, edges_per_type1: usize, seed: u64) -> Result<BipartiteData> {
    need(n1 >= 1 && n2 >= 1, "need n1, n2 ≥ 1")?;
    need(
        (1..=n2).contains(&edges_per_type1),
        "edges_per_type1 must lie in 1..=n2",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n1 * edges_per_type1);
    for i in 0..n1 {
        let mut js = sample(&mut rng, n2, edges_per_type1).into_vec();
        js.sort_unstable();
        pairs.extend(js.into_iter().map(|j| (i, j)));
    }
    let m = pairs.len();
    BipartiteData::from_indices(n1, n2, &pairs, DVector::zeros(m), DMatrix::zeros(m, 0))
}

/// Random connected weighted graph: a random recursive tree plus `extra`
/// random chords, weights in [0.5, 2).
pub fn random_connected(n: usize, extra: usize, seed: u64) -> Result<Graph> {
    need(n >= 2, "need n ≥ 2")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Vec::with_capacity(n - 1 + extra);
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
    Graph::from_edges(n, &e)
}
