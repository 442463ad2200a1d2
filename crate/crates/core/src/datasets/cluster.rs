//! k-means over user factors and super-user construction.

use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DatasetError, FactorModel};

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective: Vec<f64>,
    pub converged: bool,
    pub reseeds: usize,
}

impl KMeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.nrows()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == cluster).collect()
    }
}

fn sq_dist(a: &RowDVector<f64>, b: &RowDVector<f64>) -> f64 {
    (a - b).norm_squared()
}

fn row(m: &DMatrix<f64>, i: usize) -> RowDVector<f64> {
    m.row(i).into_owned()
}

fn nearest(point: &RowDVector<f64>, centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = sq_dist(point, &row(centroids, c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with farthest-point seeding. The first centroid is a
/// seeded random user; each further one is the user farthest from all
/// centroids chosen so far.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansResult, DatasetError> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(DatasetError::Config(format!("k = {k} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut min_dist: Vec<f64> = (0..n).map(|i| sq_dist(&row(points, i), &row(points, first))).collect();
    for c in 1..k {
        let far = argmax(&min_dist);
        centroids.set_row(c, &points.row(far));
        for (i, d) in min_dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(&row(points, i), &row(points, far)));
        }
    }

    let mut assignment = vec![usize::MAX; n];
    let mut objective = Vec::new();
    let mut converged = false;
    let mut reseeds = 0;
    for _ in 0..MAX_ITERATIONS {
        let mut dists = vec![0.0; n];
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(&row(points, i), &centroids);
            changed |= assignment[i] != c;
            assignment[i] = c;
            dists[i] = d;
        }
        if !changed {
            converged = true;
            break;
        }
        // empty clusters take the point farthest from its own centroid
        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            sizes[c] += 1;
        }
        for c in 0..k {
            if sizes[c] == 0 {
                let far = (0..n)
                    .filter(|&i| sizes[assignment[i]] > 1)
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("k <= n leaves a cluster with spare points");
                sizes[assignment[far]] -= 1;
                sizes[c] = 1;
                assignment[far] = c;
                dists[far] = 0.0;
                reseeds += 1;
            }
        }
        let mut sums = DMatrix::zeros(k, points.ncols());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            let mut r = sums.row_mut(c);
            r += points.row(i);
            counts[c] += 1;
        }
        for c in 0..k {
            let mean = sums.row(c) / counts[c] as f64;
            centroids.set_row(c, &mean);
        }
        objective.push(wcss(points, &assignment, &centroids));
    }
    Ok(KMeansResult {
        assignment,
        centroids,
        objective,
        converged,
        reseeds,
    })
}

/// Clusters the user factor rows.
pub fn kmeans_users(model: &FactorModel, k: usize, seed: u64) -> Result<KMeansResult, DatasetError> {
    kmeans(&model.u, k, seed)
}

fn wcss(points: &DMatrix<f64>, assignment: &[usize], centroids: &DMatrix<f64>) -> f64 {
    (0..points.nrows())
        .map(|i| sq_dist(&row(points, i), &row(centroids, assignment[i])))
        .sum()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// One user per latent state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuperUser {
    pub users: Vec<usize>,
    pub pairing: Vec<(usize, usize)>,
}

/// Draws one user uniformly from each cluster, then for each pair `(a, b)`
/// replaces the state-`b` user by the member of cluster `b` closest to the
/// state-`a` user.
pub fn sample_super_user(
    model: &FactorModel,
    assignment: &[usize],
    num_clusters: usize,
    pairing: &[(usize, usize)],
    seed: u64,
) -> Result<SuperUser, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members: Vec<Vec<usize>> = (0..num_clusters)
        .map(|c| (0..assignment.len()).filter(|&i| assignment[i] == c).collect())
        .collect();
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(DatasetError::Config(format!("cluster {c} has no users")));
    }
    let mut users: Vec<usize> = members.iter().map(|m| m[rng.random_range(0..m.len())]).collect();
    for &(a, b) in pairing {
        if a >= num_clusters || b >= num_clusters || a == b {
            return Err(DatasetError::Config(format!("invalid pair ({a}, {b})")));
        }
        let anchor = row(&model.u, users[a]);
        let mut best = (members[b][0], f64::INFINITY);
        for &j in &members[b] {
            let d = sq_dist(&anchor, &row(&model.u, j));
            if d < best.1 {
                best = (j, d);
            }
        }
        users[b] = best.0;
    }
    Ok(SuperUser {
        users,
        pairing: pairing.to_vec(),
    })
}
