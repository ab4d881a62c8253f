//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ContextVector;
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids.is_empty() {
            return Err(Error::invalid("cluster model has no centroids"));
        }
        let d = self.dim();
        if self.centroids.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("centroids have inconsistent dimensions"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: ClusterModel,
    /// Within-cluster sum of squares after the seeding step and after every
    /// Lloyd iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Nearest centroid by Euclidean distance; ties go to the lowest id.
pub fn assign_cluster(x: &ContextVector, model: &ClusterModel) -> Result<usize> {
    if x.dim() != model.dim() {
        return Err(Error::invalid(format!(
            "context has dimension {}, centroids have {}",
            x.dim(),
            model.dim()
        )));
    }
    Ok(nearest(x.as_slice(), &model.centroids).0)
}

pub fn objective(points: &[ContextVector], model: &ClusterModel) -> f64 {
    points
        .iter()
        .map(|p| nearest(p.as_slice(), &model.centroids).1)
        .sum()
}

fn count_distinct(points: &[ContextVector]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.0.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

pub fn kmeans_fit(
    points: &[ContextVector],
    k: usize,
    max_iters: usize,
    tol: f64,
    rng: &mut SimRng,
) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("k-means needs at least one point"));
    }
    let d = points[0].dim();
    if points.iter().any(|p| p.dim() != d) {
        return Err(Error::invalid("points have inconsistent dimensions"));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(Error::invalid(format!(
            "k-means needs at least {k} distinct points, found {distinct}"
        )));
    }

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].0.clone());
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(&p.0, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 {
                    if target < w {
                        chosen = Some(i);
                        break;
                    }
                    target -= w;
                }
            }
            // rounding can run off the end; take the last positive weight
            chosen.unwrap_or_else(|| dist.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            return Err(Error::Internal("k-means++ ran out of distinct points".into()));
        };
        let c = points[pick].0.clone();
        for (i, p) in points.iter().enumerate() {
            let dd = sq_dist(&p.0, &c);
            if dd < dist[i] {
                dist[i] = dd;
            }
        }
        centroids.push(c);
    }

    let mut assignment = vec![0usize; n];
    let mut trace = Vec::new();
    let mut model = ClusterModel { centroids };
    trace.push(objective(points, &model));
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let mut point_cost = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, dd) = nearest(&p.0, &model.centroids);
            assignment[i] = c;
            point_cost[i] = dd;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(&p.0) {
                *s += v;
            }
        }
        // An empty cluster takes over the worst-served point.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[assignment[i]] > 1)
                    .max_by(|&a, &b| point_cost[a].total_cmp(&point_cost[b]).then(b.cmp(&a)))
                    .ok_or_else(|| Error::Internal("cannot repair empty cluster".into()))?;
                let old = assignment[far];
                counts[old] -= 1;
                for (s, v) in sums[old].iter_mut().zip(&points[far].0) {
                    *s -= v;
                }
                assignment[far] = c;
                counts[c] = 1;
                sums[c] = points[far].0.clone();
                point_cost[far] = 0.0;
            }
        }
        let mut shift: f64 = 0.0;
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            let centre: Vec<f64> = sums[c].iter().map(|s| s * inv).collect();
            shift = shift.max(sq_dist(&centre, &model.centroids[c]).sqrt());
            next.push(centre);
        }
        model.centroids = next;
        trace.push(objective(points, &model));
        if shift < tol {
            break;
        }
    }
    Ok(KMeansFit {
        model,
        objective_trace: trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn cv(v: &[f64]) -> ContextVector {
        ContextVector(v.to_vec())
    }

    #[test]
    fn identical_points_single_centroid() {
        let pts = vec![cv(&[1.5, -2.0]); 3];
        let fit = kmeans_fit(&pts, 1, 50, 1e-9, &mut stream(1, Stream::KMeans)).unwrap();
        assert_eq!(fit.model.centroids, vec![vec![1.5, -2.0]]);
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = vec![cv(&[1.0]), cv(&[1.0]), cv(&[2.0])];
        assert!(kmeans_fit(&pts, 3, 50, 1e-9, &mut stream(1, Stream::KMeans)).is_err());
        assert!(kmeans_fit(&pts, 2, 50, 1e-9, &mut stream(1, Stream::KMeans)).is_ok());
    }

    #[test]
    fn assignment_ties_and_identity() {
        let model = ClusterModel {
            centroids: vec![
                vec![10.0, 10.0],
                vec![1.0, 0.0],
                vec![5.0, 5.0],
                vec![3.0, 3.0],
                vec![-1.0, 0.0],
            ],
        };
        assert_eq!(assign_cluster(&cv(&[3.0, 3.0]), &model).unwrap(), 3);
        assert_eq!(assign_cluster(&cv(&[0.0, 0.0]), &model).unwrap(), 1);
        assert!(assign_cluster(&cv(&[0.0]), &model).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let pts: Vec<ContextVector> = (0..60).map(|i| cv(&[(i % 7) as f64, (i % 5) as f64 * 0.5])).collect();
        let a = kmeans_fit(&pts, 4, 100, 1e-9, &mut stream(3, Stream::KMeans)).unwrap();
        let b = kmeans_fit(&pts, 4, 100, 1e-9, &mut stream(3, Stream::KMeans)).unwrap();
        assert_eq!(a.model, b.model);
    }
}
