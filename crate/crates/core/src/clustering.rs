//! Seeded, optionally weighted Lloyd k-means with k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after each Lloyd iteration; non-increasing.
    pub inertia_history: Vec<f64>,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Point indices grouped by cluster, in ascending index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Picks an index with probability proportional to `mass`.
fn sample_proportional(mass: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = mass.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            acc += m;
            last = Some(i);
            if target < acc {
                return Some(i);
            }
        }
    }
    last
}

fn plus_plus_init(
    points: &[Vec<f64>],
    weights: &[f64],
    k: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    let first = sample_proportional(weights, rng).unwrap_or(0);
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[first]))
        .collect();
    while centroids.len() < k {
        let mass: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let next = match sample_proportional(&mass, rng) {
            Some(i) => i,
            // every weighted point already coincides with a centroid
            None => rng.random_range(0..points.len()),
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &points[next]));
        }
    }
    centroids
}

fn inertia(points: &[Vec<f64>], weights: &[f64], assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assign)
        .zip(weights)
        .map(|((p, &c), w)| w * squared_distance(p, &centroids[c]))
        .sum()
}

/// Clusters `points` into at most `k` groups.
///
/// `k` is clamped to the number of points. Ties in assignment go to the lowest
/// centroid index. A cluster left empty is reseeded at the point farthest from
/// its current centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    weights: Option<&[f64]>,
    rng: &mut impl Rng,
) -> Result<ClusterResult> {
    if points.is_empty() {
        return Err(Error::invalid("kmeans needs at least one point"));
    }
    if k == 0 {
        return Err(Error::invalid("kmeans needs k >= 1"));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::invalid("kmeans points have zero dimension"));
    }
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("kmeans points have mixed dimensions"));
    }
    let uniform;
    let weights = match weights {
        Some(w) => {
            if w.len() != points.len() {
                return Err(Error::invalid("weights length differs from points"));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::invalid("weights must be finite and >= 0"));
            }
            if w.iter().all(|x| *x == 0.0) {
                return Err(Error::invalid("all weights are zero"));
            }
            w
        }
        None => {
            uniform = vec![1.0; points.len()];
            &uniform[..]
        }
    };
    let k = k.min(points.len());

    let mut centroids = plus_plus_init(points, weights, k, rng);
    let mut assignments = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut iterations_run = 0;

    for _ in 0..MAX_ITERATIONS {
        iterations_run += 1;
        for (a, p) in assignments.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut mass = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for ((p, &c), &w) in points.iter().zip(&assignments).zip(weights) {
            counts[c] += 1;
            mass[c] += w;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += w * x;
            }
        }

        let mut movement: f64 = 0.0;
        let mut next = centroids.clone();
        for j in 0..k {
            if counts[j] > 0 && mass[j] > 0.0 {
                next[j] = sums[j].iter().map(|s| s / mass[j]).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, squared_distance(p, &next[assignments[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                next[j] = points[far.0].clone();
            }
            movement = movement.max(squared_distance(&next[j], &centroids[j]).sqrt());
        }
        centroids = next;
        history.push(inertia(points, weights, &assignments, &centroids));
        if movement < TOLERANCE {
            break;
        }
    }

    Ok(ClusterResult {
        inertia: *history.last().unwrap_or(&0.0),
        assignments,
        centroids,
        iterations_run,
        inertia_history: history,
    })
}

/// Index of the member closest to `centroid`; ties go to the smallest index.
pub fn nearest_to_centroid(members: &[(usize, &[f64])], centroid: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(idx, v) in members {
        let d = squared_distance(v, centroid);
        best = match best {
            Some((bi, bd)) if bd < d || (bd == d && bi < idx) => Some((bi, bd)),
            _ => Some((idx, d)),
        };
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::invalid("nearest_to_centroid on empty member list"))
}
