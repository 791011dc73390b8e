//! Reference implementations used to cross-check the library.
#![allow(dead_code)]

use std::path::PathBuf;

/// Minimizes `Σ (z - α·[1, v])² + λ Σ_{i ≥ first} α_i²` by plain gradient
/// descent with step `1 / L`, where `L` bounds the Hessian's largest
/// eigenvalue by its trace.
pub fn gd_ridge(rows: &[Vec<u8>], z: &[f64], lambda: f64, penalize_intercept: bool) -> Vec<f64> {
    let k = rows[0].len();
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().map(|&b| f64::from(b))).collect())
        .collect();
    let first = usize::from(!penalize_intercept);
    let trace: f64 = x.iter().flatten().map(|v| v * v).sum::<f64>() + lambda * (k + 1) as f64;
    let step = 1.0 / trace;
    let mut alpha = vec![0.0; k + 1];
    for _ in 0..2_000_000 {
        let mut grad = vec![0.0; k + 1];
        for (row, &target) in x.iter().zip(z) {
            let r: f64 = row.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() - target;
            for (g, v) in grad.iter_mut().zip(row) {
                *g += r * v;
            }
        }
        for i in first..=k {
            grad[i] += lambda * alpha[i];
        }
        let norm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        for (a, g) in alpha.iter_mut().zip(&grad) {
            *a -= step * g;
        }
        if norm < 1e-11 {
            break;
        }
    }
    alpha
}

fn sse(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum()
}

/// Every contiguous 3-partition of the descending-sorted scores that keeps
/// equal values together, as `(cost, a, b)` with runs `[..a]`, `[a..b]`, `[b..]`.
pub fn all_partitions(sorted_desc: &[f64]) -> Vec<(f64, usize, usize)> {
    let n = sorted_desc.len();
    let ok = |j: usize| sorted_desc[j - 1] != sorted_desc[j];
    let mut out = Vec::new();
    for a in 1..n {
        for b in a + 1..n {
            if ok(a) && ok(b) {
                let cost = sse(&sorted_desc[..a]) + sse(&sorted_desc[a..b]) + sse(&sorted_desc[b..]);
                out.push((cost, a, b));
            }
        }
    }
    out
}

/// Exhaustive minimal-SSE split. Among near-equal costs the partition with
/// the latest cuts wins.
pub fn exhaustive_cluster(sorted_desc: &[f64]) -> Option<(f64, usize, usize)> {
    let parts = all_partitions(sorted_desc);
    let min = parts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    parts
        .into_iter()
        .filter(|p| p.0 <= min + 1e-12 * (1.0 + min.abs()))
        .max_by_key(|p| (p.2, p.1))
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_config() -> PathBuf {
    fixture_dir().join("scarlet.toml")
}
