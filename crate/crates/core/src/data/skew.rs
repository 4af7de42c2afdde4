use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTransform {
    /// Givens rotation by `angle` on disjoint coordinate pairs; the pairing
    /// is a seeded permutation, an odd leftover coordinate is untouched.
    Rotate(f64),
    Scale(f64),
    Bias(Vec<f64>),
}

pub fn apply_feature_skew(
    features: &Matrix,
    transform: &FeatureTransform,
    seed: u64,
) -> Result<Matrix> {
    let mut out = features.clone();
    match transform {
        FeatureTransform::Rotate(angle) => {
            if !angle.is_finite() {
                return Err(domain!("rotation angle must be finite"));
            }
            let mut perm: Vec<usize> = (0..features.cols()).collect();
            perm.shuffle(&mut rng::rng_for(seed, &[rng::tag::SKEW]));
            let (c, s) = (math::cos(*angle), math::sin(*angle));
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                for pair in perm.chunks_exact(2) {
                    let (a, b) = (row[pair[0]], row[pair[1]]);
                    row[pair[0]] = c * a - s * b;
                    row[pair[1]] = s * a + c * b;
                }
            }
        }
        FeatureTransform::Scale(f) => {
            if !f.is_finite() {
                return Err(domain!("scale factor must be finite"));
            }
            if *f == 0.0 {
                return Err(domain!("scale factor 0 destroys the features"));
            }
            out.as_mut_slice().iter_mut().for_each(|v| *v *= f);
        }
        FeatureTransform::Bias(b) => {
            if b.len() != features.cols() {
                return Err(Error::Schema(alloc::format!(
                    "bias of length {} for {} features",
                    b.len(),
                    features.cols()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(domain!("bias must be finite"));
            }
            for i in 0..out.rows() {
                for (v, bj) in out.row_mut(i).iter_mut().zip(b) {
                    *v += bj;
                }
            }
        }
    }
    Ok(out)
}
