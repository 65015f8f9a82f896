use crate::error::{NetError, Result};
use crate::graph::Graph;

/// Largest vertex count accepted by [`cheeger_exact`].
pub const CHEEGER_MAX_N: usize = 24;

/// Exact Cheeger constant by enumerating every vertex subset in Gray-code
/// order, updating the cut weight and volume one vertex at a time.
pub fn cheeger_exact(g: &Graph) -> Result<f64> {
    let n = g.n();
    if n > CHEEGER_MAX_N {
        return Err(NetError::CheegerTooLarge {
            n,
            max: CHEEGER_MAX_N,
        });
    }
    g.require_connected()?;
    let nb = g.neighbors();
    let d = g.degrees();
    let total: f64 = d.sum();

    let mut in_u = vec![false; n];
    let mut cut = 0.0;
    let mut vol = 0.0;
    let mut best = f64::INFINITY;
    // vertex n-1 never enters U: complements give the same ratio
    let count: u64 = 1u64 << (n - 1);
    for step in 1..count {
        let v = step.trailing_zeros() as usize;
        let (mut inside, mut outside) = (0.0, 0.0);
        for &(u, w) in nb.of(v) {
            if in_u[u] {
                inside += w;
            } else {
                outside += w;
            }
        }
        if in_u[v] {
            in_u[v] = false;
            cut += inside - outside;
            vol -= d[v];
        } else {
            in_u[v] = true;
            cut += outside - inside;
            vol += d[v];
        }
        let denom = vol.min(total - vol);
        if denom > 0.0 {
            let ratio = cut.max(0.0) / denom;
            if ratio < best {
                best = ratio;
            }
        }
    }
    Ok(best)
}
