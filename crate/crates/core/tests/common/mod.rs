//! Reference computations shared by the property and acceptance tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use replaycl::replay::{Distance, Pick};

/// Values on a coarse grid so equal distances (ties) are common.
pub fn grid_rows(r: &mut ChaCha8Rng, n: usize, width: usize) -> Vec<f64> {
    (0..n * width).map(|_| r.random_range(0..5) as f64 * 0.25).collect()
}

pub fn oracle_distance(d: Distance, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let diff = a[i] - b[i];
        s += match d {
            Distance::L1 => diff.abs(),
            Distance::L2 => diff * diff,
        };
    }
    match d {
        Distance::L1 => s,
        Distance::L2 => s.sqrt(),
    }
}

/// Stable sort of all candidates by distance, truncated to `k`.
pub fn oracle_k(dist: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap());
    idx.truncate(k);
    idx
}

pub fn oracle_label(probs: &[f64], classes: usize, k: usize, d: Distance) -> Vec<(usize, usize)> {
    let n = probs.len() / classes;
    let mut out = Vec::new();
    for c in 0..classes {
        let onehot: Vec<f64> = (0..classes).map(|j| if j == c { 1.0 } else { 0.0 }).collect();
        let dist: Vec<f64> = (0..n)
            .map(|i| oracle_distance(d, &probs[i * classes..(i + 1) * classes], &onehot))
            .collect();
        out.extend(oracle_k(&dist, k).into_iter().map(|i| (i, c)));
    }
    out
}

pub fn oracle_centroid(emb: &[f64], cents: &[f64], w: usize, k: usize, d: Distance) -> Vec<(usize, usize)> {
    let n = emb.len() / w;
    let mut out = Vec::new();
    for c in 0..cents.len() / w {
        let dist: Vec<f64> = (0..n)
            .map(|i| oracle_distance(d, &emb[i * w..(i + 1) * w], &cents[c * w..(c + 1) * w]))
            .collect();
        out.extend(oracle_k(&dist, k).into_iter().map(|i| (i, c)));
    }
    out
}

pub fn oracle_batch(emb: &[f64], cents: &[f64], w: usize, labels: &[usize], budget: usize, d: Distance) -> Vec<(usize, usize)> {
    let n = emb.len() / w;
    let dist: Vec<f64> = (0..n)
        .map(|i| {
            let mut best = f64::INFINITY;
            for c in cents.chunks(w) {
                best = best.min(oracle_distance(d, &emb[i * w..(i + 1) * w], c));
            }
            best
        })
        .collect();
    oracle_k(&dist, budget).into_iter().map(|i| (i, labels[i])).collect()
}

pub fn pairs(p: &[Pick]) -> Vec<(usize, usize)> {
    p.iter().map(|p| (p.candidate, p.label)).collect()
}

