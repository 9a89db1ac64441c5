//! Lloyd's k-means with greedy k-means++ seeding.
//!
//! Results are a pure function of the inputs and the seed: the assignment
//! step runs in parallel per point, every reduction runs in ascending point
//! order.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::score::{dispersion_score, ScoreKind, ScoreResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the largest squared centroid displacement is at most this.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iter: 300,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Total squared distance from each point to its assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step; the first entry belongs to the
    /// seeding, the last one equals `inertia`.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Picks the first index whose running weight exceeds `target`.
fn weighted_index(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return i;
        }
    }
    // Rounding can leave `target` just above the total.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Greedy k-means++: each new centre is the best of `2 + ln k` candidates
/// drawn proportionally to the squared distance to the nearest chosen centre.
fn seed_centroids(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (m, d) = x.dim();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = Array2::zeros((k, d));
    let first = rng.random_range(0..m);
    centroids.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, x.row(first)))
        .collect();

    for c in 1..k {
        let potential: f64 = closest.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let candidate = if potential > 0.0 {
                weighted_index(&closest, rng.random::<f64>() * potential)
            } else {
                rng.random_range(0..m)
            };
            let updated: Vec<f64> = x
                .rows()
                .into_iter()
                .zip(&closest)
                .map(|(r, &old)| old.min(sq_dist(r, x.row(candidate))))
                .collect();
            let score: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                best = Some((score, candidate, updated));
            }
        }
        let (_, chosen, updated) = best.expect("at least two trials");
        centroids.row_mut(c).assign(&x.row(chosen));
        closest = updated;
    }
    centroids
}

/// Nearest centroid per point (ties to the lowest index) and its distance.
fn assign(x: ArrayView2<f64>, centroids: &Array2<f64>) -> Vec<(usize, f64)> {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let mut best = (0, sq_dist(row, centroids.row(0)));
            for (j, c) in centroids.rows().into_iter().enumerate().skip(1) {
                let dist = sq_dist(row, c);
                if dist < best.1 {
                    best = (j, dist);
                }
            }
            best
        })
        .collect()
}

fn update(x: ArrayView2<f64>, assigned: &[(usize, f64)], previous: &Array2<f64>) -> Array2<f64> {
    let (k, d) = previous.dim();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &(j, _)) in assigned.iter().enumerate() {
        let mut row = sums.row_mut(j);
        row += &x.row(i);
        counts[j] += 1;
    }
    // Empty clusters take the points farthest from their current centroid.
    let mut far: Vec<usize> = (0..assigned.len()).collect();
    far.sort_by(|&a, &b| assigned[b].1.total_cmp(&assigned[a].1).then(a.cmp(&b)));
    let mut far = far.into_iter();
    for (j, count) in counts.iter_mut().enumerate() {
        if *count == 0 {
            let p = far.next().unwrap_or(0);
            sums.row_mut(j).assign(&x.row(p));
            *count = 1;
        } else {
            let n = *count as f64;
            sums.row_mut(j).mapv_inplace(|v| v / n);
        }
    }
    sums
}

pub fn kmeans(features: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let m = features.nrows();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if cfg.k == 0 || cfg.k > m {
        return Err(Error::InvalidK { k: cfg.k, m });
    }
    if cfg.max_iter == 0 || cfg.tol.is_nan() || cfg.tol < 0.0 {
        return Err(Error::ConfigInvalid(format!(
            "max_iter={} tol={}",
            cfg.max_iter, cfg.tol
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = seed_centroids(features, cfg.k, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let assigned = assign(features, &centroids);
        history.push(assigned.iter().map(|a| a.1).sum());
        let next = update(features, &assigned, &centroids);
        let shift = next
            .rows()
            .into_iter()
            .zip(centroids.rows())
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max);
        centroids = next;
        if shift <= cfg.tol {
            break;
        }
    }

    let assigned = assign(features, &centroids);
    let inertia: f64 = assigned.iter().map(|a| a.1).sum();
    history.push(inertia);
    Ok(KMeansResult {
        centroids,
        assignments: assigned.into_iter().map(|a| a.0).collect(),
        inertia,
        iterations,
        inertia_history: history,
    })
}

/// Weighted dispersion of the k-means partition, with cluster sizes as
/// weights. Needs no classifier.
pub fn kmeans_dispersion(features: ArrayView2<f64>, k: usize, seed: u64) -> Result<ScoreResult> {
    let result = kmeans(features, &KMeansConfig::new(k, seed))?;
    let mut score = dispersion_score(features, &result.assignments, k, true)?;
    score.kind = ScoreKind::KmeansDispersion;
    Ok(score)
}
