//! Clustering study over intercepted activations: can an eavesdropper tell
//! source models, cut layers or output classes apart without labels?

mod kmeans;
mod pca;

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use kmeans::{elbow_select, inertia_curve, kmeans, silhouette_score, ClusterReport, RESTARTS};
pub use pca::project_3d;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ActivationTensor;

/// One flattened activation per row, plus optional ground-truth tags that
/// are used for scoring only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    rows: Array2<T>,
    tags: Option<Vec<String>>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(rows: Array2<T>, tags: Option<Vec<String>>) -> Result<Self> {
        if let Some(index) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(t) = &tags {
            if t.len() != rows.nrows() {
                return Err(Error::Dimension { left: rows.nrows(), right: t.len() });
            }
        }
        Ok(Self { rows, tags })
    }

    /// Flattens every activation; all must share one element count.
    pub fn from_activations(samples: &[ActivationTensor<T>]) -> Result<Self> {
        Self::from_vectors(samples.iter().map(|s| s.values().to_vec()).collect())
    }

    fn from_vectors(vectors: Vec<Vec<T>>) -> Result<Self> {
        let d = vectors.first().map_or(0, |v| v.len());
        if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
            return Err(Error::Dimension { left: d, right: bad.len() });
        }
        let n = vectors.len();
        let flat = vectors.into_iter().flatten().collect();
        Self::new(Array2::from_shape_vec((n, d), flat).expect("checked lengths"), None)
    }

    pub fn rows(&self) -> ArrayView2<'_, T> {
        self.rows.view()
    }

    pub fn tags(&self) -> Option<&[String]> {
        self.tags.as_deref()
    }

    pub fn with_tag(mut self, tag: &str) -> Self {
        self.tags = Some(vec![tag.to_string(); self.rows.nrows()]);
        self
    }

    pub fn with_tags(self, tags: Vec<String>) -> Result<Self> {
        Self::new(self.rows, Some(tags))
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// The given rows, in order; tags follow their rows.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Precondition(format!("row {bad} outside {} rows", self.len())));
        }
        let tags = self.tags.as_ref().map(|t| indices.iter().map(|&i| t[i].clone()).collect());
        Ok(Self { rows: self.rows.select(Axis(0), indices), tags })
    }

    /// Rows of every part, in order. Tags are kept only if every part has them.
    pub fn stack(parts: &[&FeatureMatrix<T>]) -> Result<Self> {
        let d = parts.first().map_or(0, |p| p.dim());
        if let Some(bad) = parts.iter().find(|p| p.dim() != d) {
            return Err(Error::Dimension { left: d, right: bad.dim() });
        }
        let views: Vec<ArrayView2<T>> = parts.iter().map(|p| p.rows()).collect();
        let rows = if views.is_empty() {
            Array2::zeros((0, 0))
        } else {
            ndarray::concatenate(Axis(0), &views).expect("equal widths")
        };
        let tags = parts
            .iter()
            .map(|p| p.tags.clone())
            .collect::<Option<Vec<_>>>()
            .map(|t| t.into_iter().flatten().collect());
        Ok(Self { rows, tags })
    }
}

/// Splits `features` into one dataset per distinct label, tagged
/// `class <label>`, in ascending label order.
pub fn split_by_label<T: Scalar>(features: &FeatureMatrix<T>, labels: &[usize]) -> Result<Vec<(FeatureMatrix<T>, String)>> {
    if labels.len() != features.len() {
        return Err(Error::Dimension { left: features.len(), right: labels.len() });
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            Ok((features.select(&idx)?, format!("class {c}")))
        })
        .collect()
}

/// Turns activation sets of possibly different shapes into matrices of one
/// width. Sets that already agree on element count are flattened as is;
/// otherwise each activation is mean-pooled per channel and zero-padded to
/// the largest channel count.
pub fn harmonize<T: Scalar>(sets: &[&[ActivationTensor<T>]]) -> Result<Vec<FeatureMatrix<T>>> {
    let numel = |s: &[ActivationTensor<T>]| s.first().map(|a| a.values().len());
    let first = sets.first().and_then(|s| numel(s));
    let uniform = sets
        .iter()
        .all(|s| s.iter().all(|a| Some(a.values().len()) == first));
    if uniform {
        return sets.iter().map(|s| FeatureMatrix::from_activations(s)).collect();
    }
    let width = sets
        .iter()
        .flat_map(|s| s.iter())
        .map(|a| a.shape().dims().last().copied().unwrap_or(0))
        .max()
        .unwrap_or(0);
    sets.iter()
        .map(|s| {
            FeatureMatrix::from_vectors(
                s.iter()
                    .map(|a| {
                        let mut v = a.channel_means();
                        v.resize(width, T::zero());
                        v
                    })
                    .collect(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSummary {
    pub tag: String,
    pub count: usize,
    /// Cluster holding most of this tag's points.
    pub majority_cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub tags: Vec<TagSummary>,
    pub k: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub feature_dim: usize,
    /// Silhouette of the k-means partition.
    pub silhouette: f64,
    /// Silhouette of the ground-truth tag partition, for reference.
    pub tag_silhouette: f64,
    /// Fraction of points whose cluster's majority tag is their own tag.
    pub purity: f64,
    pub inertia: f64,
    pub assignments: Vec<usize>,
    /// Tag index of every pooled row.
    pub row_tags: Vec<usize>,
}

impl StudyReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Majority-vote purity of `assignments` against `labels`.
pub fn purity(assignments: &[usize], labels: &[usize]) -> f64 {
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let t = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k * t];
    for (&a, &l) in assignments.iter().zip(labels) {
        counts[a * t + l] += 1;
    }
    let agree: usize = counts.chunks(t.max(1)).map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    agree as f64 / assignments.len().max(1) as f64
}

/// Pools the tagged datasets, clusters them with `k` = number of datasets
/// and scores the clustering against the tags.
pub fn differentiability_study<T: Scalar>(datasets: &[(FeatureMatrix<T>, String)], seed: u64) -> Result<StudyReport> {
    if datasets.len() < 2 {
        return Err(Error::Precondition(format!(
            "differentiability study needs at least 2 tagged datasets, got {}",
            datasets.len()
        )));
    }
    let d = datasets[0].0.dim();
    if let Some((bad, _)) = datasets.iter().find(|(f, _)| f.dim() != d) {
        return Err(Error::Dimension { left: d, right: bad.dim() });
    }
    if let Some((_, tag)) = datasets.iter().find(|(f, _)| f.is_empty()) {
        return Err(Error::Precondition(format!("dataset {tag:?} is empty")));
    }
    let parts: Vec<&FeatureMatrix<T>> = datasets.iter().map(|(f, _)| f).collect();
    // tags never reach the clustering
    let features = FeatureMatrix { rows: FeatureMatrix::stack(&parts)?.rows, tags: None };
    let row_tags: Vec<usize> = datasets
        .iter()
        .enumerate()
        .flat_map(|(i, (f, _))| std::iter::repeat_n(i, f.len()))
        .collect();
    let k = datasets.len();
    let report = kmeans(&features, k, seed)?;
    let tag_silhouette = silhouette_score(&features, &row_tags)?;

    let tags = datasets
        .iter()
        .enumerate()
        .map(|(i, (f, tag))| {
            let mut per = vec![0usize; k];
            for (&a, &t) in report.assignments.iter().zip(&row_tags) {
                if t == i {
                    per[a] += 1;
                }
            }
            let majority_cluster = (0..k).max_by_key(|&c| (per[c], std::cmp::Reverse(c))).unwrap_or(0);
            TagSummary { tag: tag.clone(), count: f.len(), majority_cluster }
        })
        .collect();
    Ok(StudyReport {
        tags,
        k,
        seed,
        n_samples: features.len(),
        feature_dim: d,
        silhouette: report.silhouette,
        tag_silhouette,
        purity: purity(&report.assignments, &row_tags),
        inertia: report.inertia,
        assignments: report.assignments,
        row_tags,
    })
}

/// CSV of 3-D projections: `index,tag,cluster,pc1,pc2,pc3`.
pub fn write_projection_csv(path: &Path, scores: &Array2<f64>, tags: &[String], clusters: &[usize]) -> Result<()> {
    if tags.len() != scores.nrows() || clusters.len() != scores.nrows() {
        return Err(Error::Dimension { left: scores.nrows(), right: tags.len().min(clusters.len()) });
    }
    let mut out = String::from("index,tag,cluster,pc1,pc2,pc3\n");
    for (i, row) in scores.rows().into_iter().enumerate() {
        out.push_str(&format!("{i},{},{},{},{},{}\n", tags[i], clusters[i], row[0], row[1], row[2]));
    }
    let mut f = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}
