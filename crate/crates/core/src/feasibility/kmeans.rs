use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Independent seedings per `kmeans` call; the lowest-inertia run wins.
pub const RESTARTS: usize = 10;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub silhouette: f64,
    pub inertia: f64,
    /// `(k, inertia)` pairs; a single entry unless filled by an elbow scan.
    pub inertia_curve: Vec<(usize, f64)>,
}

/// One Lloyd run.
#[derive(Debug, Clone)]
pub(crate) struct LloydRun<T> {
    pub assignments: Vec<usize>,
    pub centroids: Array2<T>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

pub(crate) fn squared_distance<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    let mut acc = [T::zero(); 8];
    let (a, b) = (a.as_slice().expect("contiguous"), b.as_slice().expect("contiguous"));
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (*x - *y) * (*x - *y);
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Nearest centroid per row (ties go to the lower index) and the squared
/// distance to it, via `|x|^2 - 2 x.c + |c|^2`.
fn assign<T: Scalar>(x: ArrayView2<T>, row_norms: &Array1<T>, centroids: &Array2<T>) -> (Vec<usize>, Vec<T>) {
    let cross = x.dot(&centroids.t());
    let c_norms: Vec<T> = centroids.rows().into_iter().map(|c| c.dot(&c)).collect();
    let mut labels = Vec::with_capacity(x.nrows());
    let mut dists = Vec::with_capacity(x.nrows());
    for (i, row) in cross.rows().into_iter().enumerate() {
        let mut best = (0, T::infinity());
        for (j, &xc) in row.iter().enumerate() {
            let d = (row_norms[i] - T::c(2.0) * xc + c_norms[j]).max(T::zero());
            if d < best.1 {
                best = (j, d);
            }
        }
        labels.push(best.0);
        dists.push(best.1);
    }
    (labels, dists)
}

/// Greedy farthest-point seeding from a random first centroid.
fn seed_centroids<T: Scalar>(x: ArrayView2<T>, k: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<T> = x.rows().into_iter().map(|r| squared_distance(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let mut next = 0;
        for i in 1..n {
            if nearest[i] > nearest[next] {
                next = i;
            }
        }
        if nearest[next] == T::zero() {
            // duplicates only: take the first row not yet chosen
            next = (0..n).find(|i| !chosen.contains(i)).expect("k <= n");
        }
        chosen.push(next);
        for (i, r) in x.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(r, x.row(next)));
        }
    }
    x.select(Axis(0), &chosen)
}

pub(crate) fn lloyd<T: Scalar>(x: ArrayView2<T>, k: usize, rng: &mut ChaCha8Rng) -> LloydRun<T> {
    let n = x.nrows();
    let row_norms: Array1<T> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut centroids = seed_centroids(x, k, rng);
    let mut trace = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    loop {
        let (labels, dists) = assign(x, &row_norms, &centroids);
        trace.push(dists.iter().map(|d| d.as_f64()).sum());
        if prev.as_ref() == Some(&labels) || trace.len() > MAX_ITERATIONS {
            return LloydRun {
                assignments: labels,
                inertia: *trace.last().expect("nonempty"),
                centroids,
                trace,
            };
        }
        let mut sums = Array2::<T>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (row, &l) in x.rows().into_iter().zip(&labels) {
            sums.row_mut(l).scaled_add(T::one(), &row);
            counts[l] += 1;
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                let inv = T::one() / T::c(counts[j] as f64);
                centroids.row_mut(j).assign(&sums.row(j).mapv(|v| v * inv));
            } else {
                // re-seed an empty cluster at the worst-served point
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].partial_cmp(&dists[b]).expect("finite"))
                    .expect("k <= n");
                taken[far] = true;
                centroids.row_mut(j).assign(&x.row(far));
            }
        }
        prev = Some(labels);
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Precondition(format!("k = {k}; need at least 2 clusters")));
    }
    if k > n {
        return Err(Error::Precondition(format!("k = {k} exceeds {n} points")));
    }
    Ok(())
}

/// Best of [`RESTARTS`] Lloyd runs; clustering reads only the rows.
pub(crate) fn best_of_restarts<T: Scalar>(x: ArrayView2<T>, k: usize, seed: u64) -> LloydRun<T> {
    let mut best: Option<LloydRun<T>> = None;
    for r in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let run = lloyd(x, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("RESTARTS > 0")
}

/// Euclidean k-means with farthest-point seeding and [`RESTARTS`] restarts.
pub fn kmeans<T: Scalar>(features: &FeatureMatrix<T>, k: usize, seed: u64) -> Result<ClusterReport> {
    let x = features.rows();
    check_k(x.nrows(), k)?;
    let run = best_of_restarts(x, k, seed);
    let silhouette = silhouette_score(features, &run.assignments)?;
    Ok(ClusterReport {
        k,
        centroids: run
            .centroids
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect(),
        assignments: run.assignments,
        silhouette,
        inertia: run.inertia,
        inertia_curve: vec![(k, run.inertia)],
    })
}

/// Mean silhouette `(b - a) / max(a, b)` over all points, Euclidean.
///
/// Points in singleton clusters score 0, as do points with `a = b = 0`.
pub fn silhouette_score<T: Scalar>(features: &FeatureMatrix<T>, assignments: &[usize]) -> Result<f64> {
    let x = features.rows();
    let n = x.nrows();
    if assignments.len() != n {
        return Err(Error::Dimension { left: n, right: assignments.len() });
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::Precondition("silhouette needs at least 2 clusters".into()));
    }
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Precondition(format!("cluster {empty} is empty")));
    }
    // sums[i * k + c]: total distance from point i to members of cluster c
    let mut sums = vec![0.0f64; n * k];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(x.row(i), x.row(j)).as_f64().sqrt();
            sums[i * k + assignments[j]] += d;
            sums[j * k + assignments[i]] += d;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[i * k + own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[i * k + c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Inertia for `k = 1..=k_max`; `k = 1` is the total squared deviation.
pub fn inertia_curve<T: Scalar>(features: &FeatureMatrix<T>, k_max: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    let x = features.rows();
    if k_max > x.nrows() {
        return Err(Error::Precondition(format!("k_max = {k_max} exceeds {} points", x.nrows())));
    }
    let mean = x.mean_axis(Axis(0)).ok_or_else(|| Error::Precondition("no points".into()))?;
    let i1: f64 = x.rows().into_iter().map(|r| squared_distance(r, mean.view()).as_f64()).sum();
    let mut curve = vec![(1, i1)];
    for k in 2..=k_max {
        curve.push((k, best_of_restarts(x, k, seed).inertia));
    }
    Ok(curve)
}

/// The k in `[2, k_max - 1]` with the largest second difference of the
/// inertia curve (the sharpest bend); ties pick the smaller k.
pub fn elbow_select<T: Scalar>(features: &FeatureMatrix<T>, k_max: usize, seed: u64) -> Result<usize> {
    if k_max < 3 {
        return Err(Error::Precondition(format!("k_max = {k_max}; need at least 3")));
    }
    Ok(elbow_of_curve(&inertia_curve(features, k_max, seed)?))
}

pub(crate) fn elbow_of_curve(curve: &[(usize, f64)]) -> usize {
    let mut best = (curve[1].0, f64::NEG_INFINITY);
    for w in curve.windows(3) {
        let bend = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if bend > best.1 {
            best = (w[1].0, bend);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix<f64> {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        FeatureMatrix::new(Array2::from_shape_vec((rows.len(), d), flat).unwrap(), None).unwrap()
    }

    fn blobs(centres: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        let mut v = Vec::new();
        for c in centres {
            for _ in 0..per {
                v.push(c[0] + noise.sample(&mut rng));
                v.push(c[1] + noise.sample(&mut rng));
            }
        }
        FeatureMatrix::new(Array2::from_shape_vec((centres.len() * per, 2), v).unwrap(), None).unwrap()
    }

    #[test]
    fn separable_1d_blobs() {
        let f = matrix(&[&[0.0], &[0.1], &[10.0], &[10.1]]);
        let r = kmeans(&f, 2, 0).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        assert!(r.assignments.iter().all(|&a| a < 2));
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let f = matrix(&[&[0.0, 1.0], &[3.0, 1.0], &[5.0, -2.0], &[0.5, 0.5]]);
        let r = kmeans(&f, 4, 1).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn invalid_k() {
        let f = matrix(&[&[0.0], &[1.0]]);
        assert!(kmeans(&f, 1, 0).is_err());
        assert!(kmeans(&f, 3, 0).is_err());
    }

    #[test]
    fn duplicate_points_still_cluster() {
        let f = matrix(&[&[1.0], &[1.0], &[1.0], &[2.0]]);
        let r = kmeans(&f, 3, 0).unwrap();
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn lloyd_inertia_never_increases_and_is_nearest_centroid() {
        let f = blobs(&[[0.0, 0.0], [3.0, 0.5], [1.0, 4.0], [-2.0, 2.0]], 40, 1.2, 9);
        for seed in 0..5 {
            let run = lloyd(f.rows(), 4, &mut ChaCha8Rng::seed_from_u64(seed));
            for w in run.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", run.trace);
            }
            for (i, row) in f.rows().rows().into_iter().enumerate() {
                let d: Vec<f64> = run.centroids.rows().into_iter().map(|c| squared_distance(row, c)).collect();
                let min = d.iter().copied().fold(f64::INFINITY, f64::min);
                assert!(d[run.assignments[i]] <= min + 1e-9);
            }
        }
    }

    #[test]
    fn kmeans_is_deterministic() {
        let f = blobs(&[[0.0, 0.0], [2.0, 2.0], [4.0, 0.0]], 30, 1.0, 2);
        assert_eq!(kmeans(&f, 3, 5).unwrap(), kmeans(&f, 3, 5).unwrap());
    }

    #[test]
    fn silhouette_hand_value() {
        let f = matrix(&[&[0.0], &[0.1], &[10.0], &[10.1]]);
        let s = silhouette_score(&f, &[0, 0, 1, 1]).unwrap();
        // point 0: a = 0.1, b = 10.05; point 1: a = 0.1, b = 9.95; symmetric for the other blob
        let expected = (9.95 / 10.05 + 9.85 / 9.95) / 2.0;
        assert!((s - expected).abs() < 1e-12, "{s}");
        assert!((s - 0.990).abs() < 1e-3);
    }

    #[test]
    fn silhouette_identical_points_is_zero() {
        let p: &[f64] = &[1.0, 1.0];
        let f = matrix(&[p; 4]);
        assert_eq!(silhouette_score(&f, &[0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn silhouette_errors() {
        let f = matrix(&[&[0.0], &[1.0], &[2.0]]);
        assert!(silhouette_score(&f, &[0, 0, 0]).is_err());
        assert!(silhouette_score(&f, &[0, 2, 0]).is_err());
        assert!(silhouette_score(&f, &[0, 1]).is_err());
    }

    #[test]
    fn silhouette_of_random_labels_is_near_zero() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_simple_fn((120, 3), || rng.random_range(0.0..1.0));
            let labels: Vec<usize> = (0..120).map(|i| if i < 3 { i } else { rng.random_range(0..3) }).collect();
            let f = FeatureMatrix::new(x, None).unwrap();
            let s = silhouette_score(&f, &labels).unwrap();
            assert!(s.abs() < 0.2, "seed {seed}: {s}");
        }
    }

    #[test]
    fn elbow_finds_planted_clusters() {
        let two = blobs(&[[0.0, 0.0], [10.0, 0.0]], 25, 0.3, 1);
        assert_eq!(elbow_select(&two, 6, 0).unwrap(), 2);
        let h = 10.0 * 3f64.sqrt() / 2.0;
        let three = blobs(&[[0.0, 0.0], [10.0, 0.0], [5.0, h]], 25, 0.3, 2);
        assert_eq!(elbow_select(&three, 6, 0).unwrap(), 3);
    }

    #[test]
    fn elbow_preconditions() {
        let f = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        assert!(elbow_select(&f, 2, 0).is_err());
        assert!(elbow_select(&f, 5, 0).is_err());
    }
}
