use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::{self, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest-inertia run wins.
    pub n_init: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, max_iter: 300, tol: 1e-6, n_init: 10, seed }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning run.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding and default settings.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_with(points, &KMeansConfig::new(k, seed))
}

pub fn kmeans_with(points: &Matrix, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.rows();
    if n == 0 {
        return Err(Error::Empty("k-means input has no points".into()));
    }
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= n, got k={} n={n}", cfg.k)));
    }
    let mut best: Option<KMeansResult> = None;
    for run in 0..cfg.n_init.max(1) {
        let mut rng = rng::seeded(rng::derive(cfg.seed, run as u64));
        let result = lloyd(points, cfg, &mut rng);
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one run"))
}

fn lloyd(points: &Matrix, cfg: &KMeansConfig, rng: &mut SeededRng) -> KMeansResult {
    let mut centroids = plus_plus_init(points, cfg.k, rng);
    let mut assignments = assign(points, &centroids).0;
    let mut trace = Vec::new();
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let (labels, _) = assign(points, &centroids);
        let labels = repair_empty(points, &mut centroids, labels, cfg.k);
        trace.push(inertia_of(points, &centroids, &labels));
        let updated = means(points, &labels, cfg.k);
        let shift = (0..cfg.k)
            .map(|c| sq_dist(updated.row(c), centroids.row(c)).sqrt())
            .fold(0.0, f64::max);
        let unchanged = it > 0 && labels == assignments;
        centroids = updated;
        assignments = labels;
        if unchanged || shift <= cfg.tol {
            break;
        }
    }
    let (labels, _) = assign(points, &centroids);
    let labels = repair_empty(points, &mut centroids, labels, cfg.k);
    if labels != assignments {
        centroids = means(points, &labels, cfg.k);
        assignments = labels;
    }
    let inertia = inertia_of(points, &centroids, &assignments);
    KMeansResult { centroids, assignments, inertia, inertia_trace: trace, iterations }
}

/// k-means++ seeding: first center uniform, the rest sampled proportional to
/// squared distance from the nearest chosen center.
pub(crate) fn plus_plus_init(points: &Matrix, k: usize, rng: &mut SeededRng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            if d2[pick] == 0.0 {
                // rounding walked off the end; take the last positive weight
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Nearest-centroid labels (ties to the lowest index) and squared distances.
pub(crate) fn assign(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(points.rows());
    let mut dists = Vec::with_capacity(points.rows());
    for p in points.iter_rows() {
        let mut best = (0usize, f64::INFINITY);
        for (c, cen) in centroids.iter_rows().enumerate() {
            let d = sq_dist(p, cen);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels.push(best.0);
        dists.push(best.1);
    }
    (labels, dists)
}

/// Gives every empty cluster the point farthest from its own centroid,
/// drawn from clusters that have more than one member, and moves the empty
/// centroid onto that point.
fn repair_empty(
    points: &Matrix,
    centroids: &mut Matrix,
    mut labels: Vec<usize>,
    k: usize,
) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, sq_dist(points.row(i), centroids.row(labels[i]))))
            .fold(None::<(usize, f64)>, |acc, (i, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = far {
            counts[labels[i]] -= 1;
            labels[i] = empty;
            counts[empty] = 1;
            centroids.row_mut(empty).copy_from_slice(points.row(i));
        }
    }
    labels
}

pub(crate) fn means(points: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let d = points.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(p) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = count as f64;
            sums.row_mut(c).iter_mut().for_each(|v| *v /= inv);
        }
    }
    sums
}

pub fn inertia_of(points: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    points.iter_rows().zip(labels).map(|(p, &l)| sq_dist(p, centroids.row(l))).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
