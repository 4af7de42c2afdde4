//! Server-side ensemble distillation on generated "hard shadow" inputs.
//!
//! A conditional generator maps Gaussian noise plus a one-hot label to a
//! feature vector. It climbs the disagreement loss
//! `L = Σ_k KL(softmax(global) ‖ softmax(member_k))` while the global model
//! descends it, until `L ≤ φ` or the step budget runs out. The loss is a KL
//! distillation loss; the module keeps its historical name.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::numerics::{
    backward, forward, input_gradient, log_softmax_row, soft_cross_entropy_and_grad, softmax_rows,
    Activation, ForwardCache, ModelSchema, ParamVector,
};
use crate::rng;

pub const DEFAULT_NOISE_DIM: usize = 16;
pub const DEFAULT_HIDDEN: usize = 32;

/// Conditional generator `G(z, y; Θ)`, a one-hidden-layer ReLU network on
/// `[z, onehot(y)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub params: ParamVector,
    pub noise_dim: usize,
    /// Label prior `p_t(Y)`.
    pub prior: Vec<f64>,
    /// Features are squashed to `bound·tanh(h/bound)`; unbounded when
    /// infinite.
    pub bound: f64,
}

impl GeneratorModel {
    pub fn new(
        noise_dim: usize,
        hidden: usize,
        data_dim: usize,
        prior: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if noise_dim == 0 {
            return Err(domain!("generator needs a noise dimension ≥ 1"));
        }
        check_prior(&prior)?;
        let schema = ModelSchema::mlp(
            noise_dim + prior.len(),
            &[hidden],
            data_dim,
            Activation::Relu,
        )?;
        Ok(Self {
            params: ParamVector::init(&schema, seed),
            noise_dim,
            prior,
            bound: f64::INFINITY,
        })
    }

    pub fn with_params(params: ParamVector, noise_dim: usize, prior: Vec<f64>) -> Result<Self> {
        check_prior(&prior)?;
        if params.schema.input_dim() != noise_dim + prior.len() {
            return Err(Error::Schema(alloc::format!(
                "generator input {} ≠ noise {} + classes {}",
                params.schema.input_dim(),
                noise_dim,
                prior.len()
            )));
        }
        Ok(Self {
            params,
            noise_dim,
            prior,
            bound: f64::INFINITY,
        })
    }

    /// Keep generated features inside `(−bound, bound)`. Without a bound the
    /// ascent step can grow the features without limit, and the distillation
    /// gradient grows with them.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(domain!("feature bound must be positive, got {bound}"));
        }
        self.bound = bound;
        Ok(self)
    }

    /// Raw network output and the (squashed) features.
    fn features(&self, z: &Matrix) -> Result<(ForwardCache, Matrix)> {
        let cache = forward(&self.params, z)?;
        let mut x = cache.logits().clone();
        if self.bound.is_finite() {
            let b = self.bound;
            x.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = b * crate::math::tanh(*v / b));
        }
        Ok((cache, x))
    }

    pub fn num_classes(&self) -> usize {
        self.prior.len()
    }

    pub fn data_dim(&self) -> usize {
        self.params.schema.num_classes()
    }

    /// Noise-and-label input rows with their labels.
    fn inputs(&self, batch_size: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let c = self.num_classes();
        let width = self.noise_dim + c;
        let mut r = rng::rng(seed);
        let mut x = Matrix::zeros(batch_size, width);
        let mut labels = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let row = x.row_mut(i);
            for v in &mut row[..self.noise_dim] {
                *v = StandardNormal.sample(&mut r);
            }
            let y = sample_categorical(&self.prior, r.random::<f64>());
            row[self.noise_dim + y] = 1.0;
            labels.push(y);
        }
        (x, labels)
    }
}

fn check_prior(prior: &[f64]) -> Result<()> {
    if prior.is_empty() {
        return Err(domain!("label prior is empty"));
    }
    if prior.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(domain!("label prior has a negative or non-finite entry"));
    }
    let s: f64 = prior.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(domain!("label prior sums to {s}, not 1"));
    }
    Ok(())
}

/// Inverse-CDF draw; `u ∈ [0, 1)`. Never returns a zero-probability class.
fn sample_categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &pk) in p.iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        last = k;
        acc += pk;
        if u < acc {
            return k;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowBatch {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub round: u64,
}

pub fn generate_shadow(gen: &GeneratorModel, batch_size: usize, seed: u64) -> Result<ShadowBatch> {
    if batch_size == 0 {
        return Err(domain!("shadow batch size must be ≥ 1"));
    }
    let (z, labels) = gen.inputs(batch_size, seed);
    let features = gen.features(&z)?.1;
    if !features.is_finite() {
        return Err(Error::Numerical(
            "generator produced non-finite features".into(),
        ));
    }
    Ok(ShadowBatch {
        features,
        labels,
        round: 0,
    })
}

fn check_members(global: &ParamVector, members: &[&ParamVector]) -> Result<()> {
    if members.is_empty() {
        return Err(domain!("distillation needs at least one member"));
    }
    for m in members {
        global.check_compatible(m)?;
    }
    Ok(())
}

/// Batch mean of `Σ_k KL(softmax(global(x)) ‖ softmax(member_k(x)))`.
pub fn distill_loss(
    global: &ParamVector,
    members: &[&ParamVector],
    shadow: &ShadowBatch,
) -> Result<f64> {
    check_members(global, members)?;
    Ok(loss_and_input_grad(global, members, &shadow.features, false)?.0)
}

/// The loss on `x` and, when asked, its gradient with respect to `x`.
fn loss_and_input_grad(
    global: &ParamVector,
    members: &[&ParamVector],
    x: &Matrix,
    want_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    let n = x.rows();
    if n == 0 {
        return Err(domain!("empty shadow batch"));
    }
    let g_logits = forward(global, x)?.logits().clone();
    let c = g_logits.cols();
    let lp: Vec<Vec<f64>> = (0..n).map(|i| log_softmax_row(g_logits.row(i))).collect();
    let mut d_global = Matrix::zeros(n, c);
    let mut grad = want_grad.then(|| Matrix::zeros(n, x.cols()));
    let mut total = 0.0;
    for m in members {
        let m_logits = forward(m, x)?.logits().clone();
        let mut d_member = Matrix::zeros(n, c);
        for i in 0..n {
            let lq = log_softmax_row(m_logits.row(i));
            let p: Vec<f64> = lp[i].iter().map(|v| crate::math::exp(*v)).collect();
            let kl: f64 = (0..c)
                .map(|j| {
                    if p[j] > 0.0 {
                        p[j] * (lp[i][j] - lq[j])
                    } else {
                        0.0
                    }
                })
                .sum();
            total += kl;
            if want_grad {
                // ∂KL/∂z_global = p⊙(log p − log q − KL), ∂KL/∂z_member = q − p
                let dg = d_global.row_mut(i);
                let dm = d_member.row_mut(i);
                for j in 0..c {
                    dg[j] += p[j] * (lp[i][j] - lq[j] - kl) / n as f64;
                    dm[j] = (crate::math::exp(lq[j]) - p[j]) / n as f64;
                }
            }
        }
        if let Some(g) = grad.as_mut() {
            let gm = input_gradient(m, x, &d_member)?;
            axpy(1.0, gm.as_slice(), g.as_mut_slice());
        }
    }
    if let Some(g) = grad.as_mut() {
        let gg = input_gradient(global, x, &d_global)?;
        axpy(1.0, gg.as_slice(), g.as_mut_slice());
    }
    let loss = total / n as f64;
    if !loss.is_finite() || grad.as_ref().is_some_and(|g| !g.is_finite()) {
        return Err(Error::Numerical("distillation loss diverged".into()));
    }
    Ok((loss.max(0.0), grad))
}

/// ∂L/∂Θ through the generator for fixed noise-and-label inputs.
fn generator_grad(
    gen: &GeneratorModel,
    z: &Matrix,
    global: &ParamVector,
    members: &[&ParamVector],
) -> Result<(f64, Vec<f64>)> {
    let (cache, x) = gen.features(z)?;
    let (loss, dx) = loss_and_input_grad(global, members, &x, true)?;
    let mut dx = dx.expect("gradient requested");
    if gen.bound.is_finite() {
        let b = gen.bound;
        for (d, v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *d *= 1.0 - (v / b) * (v / b);
        }
    }
    Ok((loss, backward(&gen.params, &cache, &dx).0))
}

/// Ensemble soft labels `softmax(mean_k logits_k)`: the normalised
/// geometric mean of the member distributions, which is also the per-row
/// minimiser of `Σ_k KL(p ‖ q_k)` over `p`.
pub fn ensemble_targets(members: &[&ParamVector], x: &Matrix) -> Result<Matrix> {
    let mut mean = Matrix::zeros(x.rows(), members[0].schema.num_classes());
    let w = 1.0 / members.len() as f64;
    for m in members {
        let logits = forward(m, x)?.logits().clone();
        axpy(w, logits.as_slice(), mean.as_mut_slice());
    }
    Ok(softmax_rows(&mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WganConfig {
    /// Exit threshold φ.
    pub phi: f64,
    /// Maximum generator/global step pairs.
    pub budget: usize,
    pub batch_size: usize,
    pub generator_lr: f64,
    pub global_lr: f64,
}

impl Default for WganConfig {
    fn default() -> Self {
        Self {
            phi: 0.2,
            budget: 50,
            batch_size: 128,
            generator_lr: 0.05,
            global_lr: 0.5,
        }
    }
}

impl WganConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0) || !self.phi.is_finite() {
            return Err(Error::Config("φ must be positive".into()));
        }
        if self.budget == 0 || self.batch_size == 0 {
            return Err(Error::Config("budget and batch size must be ≥ 1".into()));
        }
        for (name, lr) in [("generator", self.generator_lr), ("global", self.global_lr)] {
            if !(lr >= 0.0) || !lr.is_finite() {
                return Err(Error::Config(alloc::format!(
                    "{name} learning rate must be finite and ≥ 0"
                )));
            }
        }
        Ok(())
    }
}

/// One pass of the loop. `loss` is measured on a fresh batch before any
/// update; the descent pair is measured on the batch the global step used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WganStep {
    pub step: usize,
    pub loss: f64,
    /// Loss before and after the global step, when one was taken.
    pub descent: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct WganOutcome {
    pub global: ParamVector,
    pub generator: GeneratorModel,
    pub trace: Vec<WganStep>,
    /// The loop left through `L ≤ φ`.
    pub converged: bool,
}

impl WganOutcome {
    pub fn generator_steps(&self) -> usize {
        self.trace.iter().filter(|s| s.descent.is_some()).count()
    }

    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |s| s.loss)
    }
}

/// Alternate generator ascent and global descent until `L ≤ φ` or
/// `budget` step pairs have run. The inputs are never modified, so on an
/// error the caller still holds the prior global model.
pub fn adversarial_round(
    gen: &GeneratorModel,
    global: &ParamVector,
    members: &[&ParamVector],
    cfg: &WganConfig,
    seed: u64,
) -> Result<WganOutcome> {
    cfg.validate()?;
    check_members(global, members)?;
    if gen.data_dim() != global.schema.input_dim() {
        return Err(Error::Schema(alloc::format!(
            "generator emits {} features, model expects {}",
            gen.data_dim(),
            global.schema.input_dim()
        )));
    }
    let mut gen = gen.clone();
    let mut global = global.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    for step in 0..=cfg.budget {
        let (z, _) = gen.inputs(cfg.batch_size, rng::derive(seed, &[step as u64]));
        let (loss, theta_grad) = generator_grad(&gen, &z, &global, members)?;
        let mut row = WganStep {
            step,
            loss,
            descent: None,
        };
        if loss <= cfg.phi {
            converged = true;
            trace.push(row);
            break;
        }
        if step == cfg.budget {
            trace.push(row);
            break;
        }
        axpy(cfg.generator_lr, &theta_grad, &mut gen.params.values);
        let x = gen.features(&z)?.1;
        let before = loss_and_input_grad(&global, members, &x, false)?.0;
        let targets = ensemble_targets(members, &x)?;
        let (_, g) = soft_cross_entropy_and_grad(&global, &x, &targets)?;
        axpy(-cfg.global_lr, &g.values, &mut global.values);
        let after = loss_and_input_grad(&global, members, &x, false)?.0;
        if !gen.params.is_finite() || !global.is_finite() {
            return Err(Error::Numerical(
                "adversarial step produced non-finite parameters".into(),
            ));
        }
        row.descent = Some((before, after));
        trace.push(row);
    }
    Ok(WganOutcome {
        global,
        generator: gen,
        trace,
        converged,
    })
}

/// Empirical class frequencies, the default label prior.
pub fn class_prior(counts: &[usize]) -> Result<Vec<f64>> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(domain!("no labels to build a prior from"));
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Uniform prior over `classes`.
pub fn uniform_prior(classes: usize) -> Vec<f64> {
    vec![1.0 / classes as f64; classes]
}
