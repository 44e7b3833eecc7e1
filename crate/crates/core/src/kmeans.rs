//! Lloyd's k-means with Forgy initialization.

use crate::dataset::VectorSet;
use crate::distance::l2_sq;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_ITERS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub k: usize,
    pub iters: usize,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            iters: DEFAULT_ITERS,
            seed,
        }
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters = iters;
        self
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: VectorSet,
    /// Quantization error (sum of squared distances to the nearest centroid)
    /// at the start of each iteration, followed by the error of the returned
    /// centroids. Length `iters + 1`.
    pub objective: Vec<f64>,
}

/// Index and distance of the nearest centroid; ties go to the lower index.
#[inline]
pub(crate) fn nearest(centroids: &[f32], d: usize, x: &[f32]) -> (usize, f32) {
    let mut best = 0usize;
    let mut best_dist = f32::INFINITY;
    for (i, c) in centroids.chunks_exact(d).enumerate() {
        let dist = l2_sq(x, c);
        if dist < best_dist {
            best = i;
            best_dist = dist;
        }
    }
    (best, best_dist)
}

/// Nearest centroid to `x` under squared Euclidean distance.
pub fn assign(centroids: &VectorSet, x: &[f32]) -> Result<usize> {
    if centroids.is_empty() {
        return Err(Error::argument("no centroids to assign to"));
    }
    if centroids.dim() != x.len() {
        return Err(Error::argument(format!(
            "vector dimension {} differs from centroid dimension {}",
            x.len(),
            centroids.dim()
        )));
    }
    Ok(nearest(centroids.as_slice(), centroids.dim(), x).0)
}

pub fn kmeans(data: &VectorSet, params: &KMeansParams) -> Result<VectorSet> {
    Ok(train(data, params)?.centroids)
}

/// Runs `params.iters` Lloyd iterations and reports the objective trace.
pub fn train(data: &VectorSet, params: &KMeansParams) -> Result<KMeansResult> {
    let KMeansParams { k, iters, seed } = *params;
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    if iters == 0 {
        return Err(Error::argument("iters must be at least 1"));
    }
    if data.len() < k {
        return Err(Error::argument(format!(
            "k-means needs at least k={k} points, got {}",
            data.len()
        )));
    }
    let n = data.len();
    let d = data.dim();

    let mut rng = SeededRng::new(seed);
    let mut centroids = Vec::with_capacity(k * d);
    for i in rng.sample_distinct(n, k) {
        centroids.extend_from_slice(data.row(i));
    }

    let mut assignment = vec![0usize; n];
    let mut objective = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        objective.push(assign_all(data, &centroids, &mut assignment));
        update(data, &mut centroids, &mut assignment, k);
    }
    objective.push(assign_all(data, &centroids, &mut assignment));

    Ok(KMeansResult {
        centroids: VectorSet::new(d, centroids)?,
        objective,
    })
}

fn assign_all(data: &VectorSet, centroids: &[f32], assignment: &mut [usize]) -> f64 {
    let d = data.dim();
    let mut total = 0.0f64;
    for (slot, x) in assignment.iter_mut().zip(data.rows()) {
        let (c, dist) = nearest(centroids, d, x);
        *slot = c;
        total += dist as f64;
    }
    total
}

/// Moves each centroid to the mean of its points. A centroid left without
/// points is moved onto the point farthest from its own centroid, and that
/// point is reassigned to it.
fn update(data: &VectorSet, centroids: &mut [f32], assignment: &mut [usize], k: usize) {
    let d = data.dim();
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];
    for (&c, x) in assignment.iter().zip(data.rows()) {
        counts[c] += 1;
        for (s, &v) in sums[c * d..(c + 1) * d].iter_mut().zip(x) {
            *s += v as f64;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let inv = 1.0 / counts[c] as f64;
        for (dst, &s) in centroids[c * d..(c + 1) * d]
            .iter_mut()
            .zip(&sums[c * d..(c + 1) * d])
        {
            *dst = (s * inv) as f32;
        }
    }

    if counts.iter().all(|&c| c > 0) {
        return;
    }
    let mut dists: Vec<f32> = assignment
        .iter()
        .zip(data.rows())
        .map(|(&c, x)| l2_sq(x, &centroids[c * d..(c + 1) * d]))
        .collect();
    for empty in 0..k {
        if counts[empty] != 0 {
            continue;
        }
        let mut far = 0usize;
        for (i, &dist) in dists.iter().enumerate() {
            if dist > dists[far] {
                far = i;
            }
        }
        centroids[empty * d..(empty + 1) * d].copy_from_slice(data.row(far));
        counts[assignment[far]] -= 1;
        counts[empty] = 1;
        assignment[far] = empty;
        dists[far] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_rows(set: &VectorSet) -> Vec<Vec<f32>> {
        let mut rows: Vec<Vec<f32>> = set.rows().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows
    }

    #[test]
    fn distinct_points_are_a_fixed_point() {
        let data = VectorSet::new(2, vec![0.0, 0.0, 5.0, 1.0, -3.0, 2.0, 9.0, 9.0]).unwrap();
        let result = train(&data, &KMeansParams::new(4, 1)).unwrap();
        assert_eq!(sorted_rows(&result.centroids), sorted_rows(&data));
        assert_eq!(*result.objective.last().unwrap(), 0.0);
    }

    #[test]
    fn identical_points_single_cluster() {
        let data = VectorSet::new(3, [1.5f32, -2.0, 0.25].repeat(20)).unwrap();
        let c = kmeans(&data, &KMeansParams::new(1, 8)).unwrap();
        assert_eq!(c.row(0), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn rejects_bad_params() {
        let data = VectorSet::new(1, vec![0.0, 1.0]).unwrap();
        assert!(kmeans(&data, &KMeansParams::new(3, 0)).is_err());
        assert!(kmeans(&data, &KMeansParams::new(0, 0)).is_err());
        assert!(kmeans(&data, &KMeansParams::new(1, 0).with_iters(0)).is_err());
    }

    #[test]
    fn assign_by_inspection() {
        let centroids = VectorSet::new(1, vec![0.0, 10.0]).unwrap();
        assert_eq!(assign(&centroids, &[4.0]).unwrap(), 0);
        assert_eq!(assign(&centroids, &[5.0]).unwrap(), 0);
        assert_eq!(assign(&centroids, &[6.0]).unwrap(), 1);
        assert!(assign(&centroids, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn assign_exact_hit() {
        let centroids =
            VectorSet::new(2, (0..10).flat_map(|i| [i as f32, -(i as f32)]).collect()).unwrap();
        assert_eq!(assign(&centroids, &[3.0, -3.0]).unwrap(), 3);
    }

    #[test]
    fn empty_cluster_is_repaired() {
        // Forgy may pick two points of the same tight blob; repair must still
        // leave every centroid with members.
        let mut data = Vec::new();
        for i in 0..30 {
            data.push(i as f32 * 1e-3);
        }
        data.extend([100.0, 200.0, 300.0]);
        let data = VectorSet::new(1, data).unwrap();
        for seed in 0..20 {
            let c = kmeans(&data, &KMeansParams::new(4, seed)).unwrap();
            let mut counts = [0usize; 4];
            for x in data.rows() {
                counts[assign(&c, x).unwrap()] += 1;
            }
            assert!(counts.iter().all(|&n| n > 0), "seed {seed}: {counts:?}");
        }
    }
}
