//! Dense toy models (multinomial logistic regression and small perceptrons),
//! cross-entropy with optional proximal term, analytic backpropagation and
//! the SGD / Adam / L-BFGS optimizers.

mod model;
mod optim;
mod smoothness;

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::rng;

pub(crate) use model::log_softmax_row;
pub use model::{
    argmax, backward, forward, input_gradient, kl_divergence, loss_and_grad, predict,
    soft_cross_entropy_and_grad, softmax_row, softmax_rows, ForwardCache, Prox,
};
pub use optim::{AdamState, LbfgsState, OptimizerKind, OptimizerState};
pub use smoothness::{beta_probe_samples, estimate_beta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Layer shapes of a dense network. The activation applies to hidden
/// layers only; the last layer emits raw logits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSchema {
    layer_dims: Vec<(usize, usize)>,
    activation: Activation,
    num_classes: usize,
}

impl ModelSchema {
    pub fn new(layer_dims: Vec<(usize, usize)>, activation: Activation) -> Result<Self> {
        if layer_dims.is_empty() {
            return Err(Error::Schema("model needs at least one layer".into()));
        }
        for (i, &(inp, out)) in layer_dims.iter().enumerate() {
            if inp == 0 || out == 0 {
                return Err(Error::Schema(alloc::format!(
                    "layer {i} has a zero dimension"
                )));
            }
            if i > 0 && layer_dims[i - 1].1 != inp {
                return Err(Error::Schema(alloc::format!(
                    "layer {} output {} does not feed layer {} input {}",
                    i - 1,
                    layer_dims[i - 1].1,
                    i,
                    inp
                )));
            }
        }
        let num_classes = layer_dims[layer_dims.len() - 1].1;
        Ok(Self {
            layer_dims,
            activation,
            num_classes,
        })
    }

    /// Multinomial logistic regression.
    pub fn logistic(input: usize, classes: usize) -> Result<Self> {
        Self::new(vec![(input, classes)], Activation::Identity)
    }

    pub fn mlp(
        input: usize,
        hidden: &[usize],
        classes: usize,
        activation: Activation,
    ) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, classes));
        Self::new(dims, activation)
    }

    pub fn layer_dims(&self) -> &[(usize, usize)] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0].0
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len()
    }

    /// Σ (in+1)·out.
    pub fn param_count(&self) -> usize {
        self.layer_dims.iter().map(|&(i, o)| (i + 1) * o).sum()
    }

    /// Offset of layer `l`'s weight block; its bias follows the weights.
    pub(crate) fn layer_offset(&self, l: usize) -> usize {
        self.layer_dims[..l].iter().map(|&(i, o)| (i + 1) * o).sum()
    }
}

/// Flat parameters: per layer, the (out × in) weight matrix row-major,
/// then the bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub schema: ModelSchema,
}

impl ParamVector {
    pub fn new(schema: ModelSchema, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.param_count() {
            return Err(Error::Schema(alloc::format!(
                "{} values for a schema of {} parameters",
                values.len(),
                schema.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        Ok(Self { values, schema })
    }

    pub fn zeros(schema: &ModelSchema) -> Self {
        Self {
            values: vec![0.0; schema.param_count()],
            schema: schema.clone(),
        }
    }

    /// Glorot-style normal initialisation, zero biases.
    pub fn init(schema: &ModelSchema, seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let mut values = Vec::with_capacity(schema.param_count());
        for &(inp, out) in schema.layer_dims() {
            let std = math::sqrt(2.0 / (inp + out) as f64);
            for _ in 0..inp * out {
                let z: f64 = StandardNormal.sample(&mut r);
                values.push(z * std);
            }
            values.extend(core::iter::repeat_n(0.0, out));
        }
        Self {
            values,
            schema: schema.clone(),
        }
    }

    /// Uniform draw in `[-scale, scale]`, used by property tests.
    pub fn random(schema: &ModelSchema, scale: f64, seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let values = (0..schema.param_count())
            .map(|_| r.random_range(-scale..=scale))
            .collect();
        Self {
            values,
            schema: schema.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.schema.clone(), values)
    }

    pub fn check_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.schema != other.schema {
            return Err(Error::Schema("parameter schemas differ".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (inp, out) = self.schema.layer_dims[l];
        let off = self.schema.layer_offset(l);
        let w = &self.values[off..off + inp * out];
        let b = &self.values[off + inp * out..off + (inp + 1) * out];
        (w, b)
    }
}

/// Features and integer labels of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Schema(alloc::format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub(crate) fn check(&self, schema: &ModelSchema) -> Result<()> {
        if self.is_empty() {
            return Err(domain!("empty batch"));
        }
        if self.features.cols() != schema.input_dim() {
            return Err(Error::Schema(alloc::format!(
                "batch has {} features, model expects {}",
                self.features.cols(),
                schema.input_dim()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= schema.num_classes()) {
            return Err(Error::Schema(alloc::format!(
                "label {bad} outside {} classes",
                schema.num_classes()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_chaining_is_validated() {
        assert!(ModelSchema::new(vec![(3, 4), (5, 2)], Activation::Relu).is_err());
        let s = ModelSchema::mlp(3, &[4], 2, Activation::Relu).unwrap();
        assert_eq!(s.param_count(), 4 * 4 + 5 * 2);
        assert_eq!(s.num_classes(), 2);
        assert_eq!(s.layer_offset(1), 16);
    }

    #[test]
    fn param_vector_rejects_wrong_length_and_nan() {
        let s = ModelSchema::logistic(2, 2).unwrap();
        assert!(ParamVector::new(s.clone(), vec![0.0; 5]).is_err());
        assert!(matches!(
            ParamVector::new(s, vec![f64::NAN; 6]),
            Err(Error::Numerical(_))
        ));
    }
}
