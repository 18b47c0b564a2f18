//! Selection kernels over precomputed embeddings.
//!
//! Every scheme reduces to "the k candidates with the smallest distance",
//! ordered by `(distance, candidate index)` so ties resolve deterministically.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    L1,
    L2,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Distance::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }
}

/// One chosen candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pick {
    pub candidate: usize,
    pub label: usize,
    pub distance: f64,
}

/// Indices of the `k` smallest distances, ties broken by ascending index.
pub fn k_smallest(dist: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    let k = k.min(idx.len());
    let cmp = |&a: &usize, &b: &usize| dist[a].total_cmp(&dist[b]).then(a.cmp(&b));
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
    }
    idx.truncate(k);
    idx.sort_by(cmp);
    idx
}

fn rows(data: &[f64], width: usize) -> Result<usize> {
    if width == 0 || !data.len().is_multiple_of(width) {
        return Err(Error::config("embedding rows are ragged"));
    }
    if data.is_empty() {
        return Err(Error::config("candidate pool is empty"));
    }
    Ok(data.len() / width)
}

fn per_class(
    candidates: &[f64],
    targets: &[f64],
    width: usize,
    k: usize,
    distance: Distance,
) -> Result<Vec<Pick>> {
    let n = rows(candidates, width)?;
    if !targets.len().is_multiple_of(width) {
        return Err(Error::config("target rows are ragged"));
    }
    let classes = targets.len() / width;
    let pick = |c: usize| -> Vec<Pick> {
        let t = &targets[c * width..(c + 1) * width];
        let dist: Vec<f64> = (0..n)
            .map(|i| distance.eval(&candidates[i * width..(i + 1) * width], t))
            .collect();
        k_smallest(&dist, k)
            .into_iter()
            .map(|i| Pick {
                candidate: i,
                label: c,
                distance: dist[i],
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let picks: Vec<Vec<Pick>> = (0..classes).into_par_iter().map(pick).collect();
    #[cfg(not(feature = "parallel"))]
    let picks: Vec<Vec<Pick>> = (0..classes).map(pick).collect();
    Ok(picks.into_iter().flatten().collect())
}

/// For each class `c`, the `k` candidates whose probability rows are closest
/// to the one-hot vector `e_c`. `probs` is `[pool, classes]`.
pub fn select_by_label_distance(probs: &[f64], classes: usize, k: usize, distance: Distance) -> Result<Vec<Pick>> {
    let mut onehot = vec![0.0; classes * classes];
    for c in 0..classes {
        onehot[c * classes + c] = 1.0;
    }
    per_class(probs, &onehot, classes, k, distance)
}

/// For each class, the `k` candidate embeddings closest to its centroid.
/// `centroids` is `[classes, width]`.
pub fn select_by_class_centroid(
    embeddings: &[f64],
    centroids: &[f64],
    width: usize,
    k: usize,
    distance: Distance,
) -> Result<Vec<Pick>> {
    per_class(embeddings, centroids, width, k, distance)
}

/// The `budget` candidates nearest to any batch centroid, each labelled with
/// its `labels` entry. Results are in ascending `(distance, index)` order.
pub fn select_by_batch_centroid(
    embeddings: &[f64],
    centroids: &[f64],
    width: usize,
    labels: &[usize],
    budget: usize,
    distance: Distance,
) -> Result<Vec<Pick>> {
    let n = rows(embeddings, width)?;
    if centroids.is_empty() || !centroids.len().is_multiple_of(width) {
        return Err(Error::config("need at least one batch centroid"));
    }
    if labels.len() != n {
        return Err(Error::config("one label per candidate is required"));
    }
    let nearest = |i: usize| -> f64 {
        let e = &embeddings[i * width..(i + 1) * width];
        centroids
            .chunks(width)
            .map(|c| distance.eval(e, c))
            .fold(f64::INFINITY, f64::min)
    };
    #[cfg(feature = "parallel")]
    let dist: Vec<f64> = (0..n).into_par_iter().map(nearest).collect();
    #[cfg(not(feature = "parallel"))]
    let dist: Vec<f64> = (0..n).map(nearest).collect();
    Ok(k_smallest(&dist, budget)
        .into_iter()
        .map(|i| Pick {
            candidate: i,
            label: labels[i],
            distance: dist[i],
        })
        .collect())
}

/// Row-wise argmax, lowest index on ties.
pub fn argmax_rows(scores: &[f64], width: usize) -> Vec<usize> {
    scores
        .chunks(width)
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Arithmetic mean of the rows in each group; groups with no rows are errors.
pub fn group_means(embeddings: &[f64], width: usize, groups: &[usize], group_count: usize) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; group_count * width];
    let mut counts = vec![0usize; group_count];
    for (row, &g) in embeddings.chunks(width).zip(groups) {
        if g >= group_count {
            return Err(Error::config(format!("group {g} outside 0..{group_count}")));
        }
        counts[g] += 1;
        for (s, &v) in sums[g * width..(g + 1) * width].iter_mut().zip(row) {
            *s += v;
        }
    }
    let empty: Vec<usize> = (0..group_count).filter(|&g| counts[g] == 0).collect();
    if !empty.is_empty() {
        return Err(Error::config(format!("no samples for classes {empty:?}")));
    }
    for g in 0..group_count {
        sums[g * width..(g + 1) * width]
            .iter_mut()
            .for_each(|s| *s /= counts[g] as f64);
    }
    Ok(sums)
}
