//! Datasets, Dirichlet label-skew partitioning and feature-skew transforms.

mod idx;
mod partition;
mod skew;

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::numerics::Batch;
use crate::rng;

pub use idx::{dataset_from_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use partition::{
    class_shares, dirichlet_partition, skew_statistic, PartitionMode, ShardAssignment,
};
pub use skew::{apply_feature_skew, FeatureTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Schema(alloc::format!(
                "{} rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(domain!("dataset needs at least one class"));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Schema(alloc::format!(
                "label {y} outside {num_classes} classes"
            )));
        }
        if !features.is_finite() {
            return Err(Error::Numerical("non-finite feature".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split: self.split,
        }
    }

    pub fn batch(&self) -> Batch {
        Batch {
            features: self.features.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = alloc::vec![0; self.num_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Shuffle and split off the last `test_fraction` of rows as a test set.
    pub fn train_test_split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(domain!("test fraction must lie in [0, 1)"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::rng_for(seed, &[rng::tag::DATA, 1]));
        let n_test = math::round(self.len() as f64 * test_fraction) as usize;
        let (train, test) = idx.split_at(self.len() - n_test);
        let mut tr = self.subset(train);
        tr.split = Split::Train;
        let mut te = self.subset(test);
        te.split = Split::Test;
        Ok((tr, te))
    }
}

/// Class means for [`gen_synthetic`], centred at the origin with every pair
/// of means exactly `separation` apart when `dim ≥ classes`, on a regular
/// polygon (adjacent means `separation` apart) in the first two coordinates
/// when `2 ≤ dim < classes`, and on a line when `dim = 1`.
fn class_means(num_classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            let mut m = alloc::vec![0.0; dim];
            if dim >= num_classes {
                m[c] = separation / core::f64::consts::SQRT_2;
            } else if dim >= 2 {
                let radius =
                    separation / (2.0 * math::sin(core::f64::consts::PI / num_classes as f64));
                let t = 2.0 * core::f64::consts::PI * c as f64 / num_classes as f64;
                m[0] = radius * math::cos(t);
                m[1] = radius * math::sin(t);
            } else {
                m[0] = separation * c as f64;
            }
            m
        })
        .collect();
    let centroid: Vec<f64> = (0..dim)
        .map(|j| means.iter().map(|m| m[j]).sum::<f64>() / num_classes as f64)
        .collect();
    for m in &mut means {
        for (v, c) in m.iter_mut().zip(&centroid) {
            *v -= c;
        }
    }
    means
}

/// Gaussian blobs with unit noise, rows shuffled.
pub fn gen_synthetic(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if dim < 1 {
        return Err(domain!("synthetic data needs dim ≥ 1"));
    }
    if num_classes == 0 || per_class == 0 {
        return Err(domain!("class and sample counts must be positive"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(domain!("separation must be finite and non-negative"));
    }
    let means = class_means(num_classes, dim, separation);
    let mut r = rng::rng_for(seed, &[rng::tag::DATA]);
    let mut order: Vec<usize> = (0..num_classes * per_class)
        .map(|i| i / per_class)
        .collect();
    order.shuffle(&mut r);
    let mut data = Vec::with_capacity(order.len() * dim);
    for &c in &order {
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut r);
            data.push(means[c][j] + z);
        }
    }
    Dataset::new(
        Matrix::from_vec(order.len(), dim, data)?,
        order,
        num_classes,
        Split::Train,
    )
}
