use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Axis};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scores on the top-3 principal components, in decreasing variance order.
///
/// Eigen-decomposes whichever of the covariance (D x D) or Gram (N x N)
/// matrix is smaller. Component signs are fixed so the largest-magnitude
/// score in each column is positive.
pub fn project_3d<T: Scalar>(features: &FeatureMatrix<T>) -> Result<Array2<f64>> {
    let x = features.rows();
    let (n, d) = x.dim();
    if d < 3 {
        return Err(Error::Precondition(format!("projection needs at least 3 features, got {d}")));
    }
    if n == 0 {
        return Err(Error::Precondition("no points to project".into()));
    }
    let xf = x.mapv(|v| v.as_f64());
    let mean = xf.mean_axis(Axis(0)).expect("n > 0");
    let centred = &xf - &mean;
    let c = DMatrix::from_row_iterator(n, d, centred.iter().copied());

    let mut scores = Array2::<f64>::zeros((n, 3));
    if d <= n {
        let eig = SymmetricEigen::new(c.transpose() * &c);
        for (col, idx) in top_indices(eig.eigenvalues.as_slice(), 3).into_iter().enumerate() {
            let proj = &c * eig.eigenvectors.column(idx);
            for i in 0..n {
                scores[[i, col]] = proj[i];
            }
        }
    } else {
        // Gram route: for eigenpair (lambda, u) of C C^T the scores are sqrt(lambda) u
        let eig = SymmetricEigen::new(&c * c.transpose());
        for (col, idx) in top_indices(eig.eigenvalues.as_slice(), 3).into_iter().enumerate() {
            let s = eig.eigenvalues[idx].max(0.0).sqrt();
            for i in 0..n {
                scores[[i, col]] = s * eig.eigenvectors[(i, idx)];
            }
        }
    }
    for mut col in scores.columns_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(scores)
}

fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite eigenvalues"));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    fn column_variances(s: &Array2<f64>) -> Vec<f64> {
        s.columns().into_iter().map(|c| c.var(0.0)).collect()
    }

    fn dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn three_d_input_is_a_rigid_motion() {
        let x = random(40, 3, 1);
        let s = project_3d(&FeatureMatrix::new(x.clone(), None).unwrap()).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                assert!((dist(x.row(i), x.row(j)) - dist(s.row(i), s.row(j))).abs() < 1e-6);
            }
        }
        let v = column_variances(&s);
        assert!(v[0] >= v[1] && v[1] >= v[2]);
    }

    #[test]
    fn rank_one_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dir: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Array2::from_shape_fn((30, 10), |(i, j)| (i as f64 - 7.0) * dir[j]);
        let s = project_3d(&FeatureMatrix::new(x, None).unwrap()).unwrap();
        let v = column_variances(&s);
        assert!(v[0] > 1.0);
        assert!(v[1] < 1e-9 && v[2] < 1e-9, "{v:?}");
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // d > n takes the Gram route; the transposed problem the covariance route
        let x = random(12, 20, 4);
        let wide = project_3d(&FeatureMatrix::new(x.clone(), None).unwrap()).unwrap();
        let mut tall = x.clone();
        tall.append(Axis(0), x.view()).unwrap();
        tall.append(Axis(0), x.view()).unwrap();
        let tall = project_3d(&FeatureMatrix::new(tall, None).unwrap()).unwrap();
        for i in 0..12 {
            for c in 0..3 {
                assert!((wide[[i, c]] - tall[[i, c]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn random_matrix_projection_and_variance_order() {
        let s = project_3d(&FeatureMatrix::new(random(100, 50, 5), None).unwrap()).unwrap();
        assert_eq!(s.dim(), (100, 3));
        let v = column_variances(&s);
        assert!(v[0] >= v[1] && v[1] >= v[2] && v[2] >= 0.0);
    }

    #[test]
    fn too_few_dimensions() {
        assert!(project_3d(&FeatureMatrix::new(random(5, 2, 0), None).unwrap()).is_err());
    }
}
