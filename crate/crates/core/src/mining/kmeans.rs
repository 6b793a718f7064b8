use serde::{Deserialize, Serialize};

use super::rng::XorShift64Star;
use super::{MiningError, Result};
use crate::matrix::{squared_distance, FeatureMatrix};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    #[serde(default)]
    pub inertia: f64,
    #[serde(default)]
    pub iterations: usize,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map(Vec::len).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids.is_empty() {
            return Err(MiningError::BadModel("k-means model has no centroids".into()));
        }
        let d = self.dim();
        if self.centroids.iter().any(|c| c.len() != d) {
            return Err(MiningError::BadModel("centroids have different lengths".into()));
        }
        Ok(())
    }
}

/// A fitted model plus the inertia measured after every assignment step.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: KMeansModel,
    pub inertia_history: Vec<f64>,
}

pub fn kmeans_fit(x: &FeatureMatrix, k: usize, seed: u64) -> Result<KMeansModel> {
    kmeans_fit_traced(x, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).map(|f| f.model)
}

/// k-means++ seeding from an xorshift64* stream, then Lloyd iterations until
/// the largest centroid shift drops below `tol` or `max_iter` is reached.
/// Assignment ties go to the lowest centroid index; a cluster left empty is
/// re-seeded at the point farthest from its assigned centroid.
pub fn kmeans_fit_traced(x: &FeatureMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansFit> {
    let n = x.rows();
    if k == 0 {
        return Err(MiningError::BadK { k, n });
    }
    if n < k {
        return Err(MiningError::TooFewPoints { needed: k, got: n });
    }
    let mut rng = XorShift64Star::new(seed);
    let mut centroids = plus_plus_init(x, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let inertia = assign_all(x, &centroids, &mut labels, &mut dists);
        history.push(inertia);

        let d = x.cols();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (row, &l) in x.iter_rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            if counts[c] > 0 {
                next.push(sums[c].iter().map(|s| s / counts[c] as f64).collect::<Vec<f64>>());
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                next.push(x.row(far).to_vec());
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < tol {
            break;
        }
    }

    let inertia = assign_all(x, &centroids, &mut labels, &mut dists);
    history.push(inertia);
    Ok(KMeansFit {
        model: KMeansModel {
            centroids,
            inertia,
            iterations,
        },
        inertia_history: history,
    })
}

fn plus_plus_init(x: &FeatureMatrix, k: usize, rng: &mut XorShift64Star) -> Vec<Vec<f64>> {
    let n = x.rows();
    let mut centroids = vec![x.row(rng.below(n)).to_vec()];
    let mut d2: Vec<f64> = x.iter_rows().map(|r| squared_distance(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                if acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave target just above the running sum.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            rng.below(n)
        };
        let c = x.row(pick).to_vec();
        for (dist, row) in d2.iter_mut().zip(x.iter_rows()) {
            *dist = dist.min(squared_distance(row, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign_all(x: &FeatureMatrix, centroids: &[Vec<f64>], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, row) in x.iter_rows().enumerate() {
        let (l, d) = nearest(centroids, row);
        labels[i] = l;
        dists[i] = d;
        inertia += d;
    }
    inertia
}

/// Index of the nearest centroid (lowest index on ties) and the Euclidean
/// distance to it.
pub fn kmeans_assign(m: &KMeansModel, x: &[f64]) -> Result<(usize, f64)> {
    m.validate()?;
    if x.len() != m.dim() {
        return Err(MiningError::DimMismatch {
            expected: m.dim(),
            got: x.len(),
        });
    }
    let (i, d2) = nearest(&m.centroids, x);
    Ok((i, d2.sqrt()))
}

/// Distance from `x` to its nearest centroid.
pub fn anomaly_score(m: &KMeansModel, x: &[f64]) -> Result<f64> {
    kmeans_assign(m, x).map(|(_, d)| d)
}
