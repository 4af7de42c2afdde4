use alloc::vec;
use alloc::vec::Vec;

use super::{Batch, ParamVector};
use crate::error::{domain, Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::math;

/// Pre-activations and activations recorded by [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[l+1]` the output of layer `l`.
    pub acts: Vec<Matrix>,
    /// Pre-activation of each layer.
    pub pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        &self.acts[self.acts.len() - 1]
    }
}

pub fn forward(params: &ParamVector, x: &Matrix) -> Result<ForwardCache> {
    let schema = &params.schema;
    if x.cols() != schema.input_dim() {
        return Err(Error::Schema(alloc::format!(
            "input has {} columns, model expects {}",
            x.cols(),
            schema.input_dim()
        )));
    }
    let last = schema.num_layers() - 1;
    let mut acts = Vec::with_capacity(schema.num_layers() + 1);
    let mut pre = Vec::with_capacity(schema.num_layers());
    acts.push(x.clone());
    for l in 0..schema.num_layers() {
        let (_, out) = schema.layer_dims()[l];
        let (w, b) = params.layer(l);
        let mut z = acts[l].matmul_t(w, out);
        for i in 0..z.rows() {
            for (zi, bi) in z.row_mut(i).iter_mut().zip(b) {
                *zi += bi;
            }
        }
        let a = if l == last {
            z.clone()
        } else {
            let act = schema.activation();
            let mut a = z.clone();
            a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            a
        };
        pre.push(z);
        acts.push(a);
    }
    Ok(ForwardCache { acts, pre })
}

/// Backpropagate `d_logits` (∂L/∂logits, one row per sample) through the
/// network. Returns the parameter gradient and ∂L/∂input.
pub fn backward(
    params: &ParamVector,
    cache: &ForwardCache,
    d_logits: &Matrix,
) -> (Vec<f64>, Matrix) {
    let schema = &params.schema;
    let mut grad = vec![0.0; schema.param_count()];
    let mut dz = d_logits.clone();
    for l in (0..schema.num_layers()).rev() {
        let (inp, out) = schema.layer_dims()[l];
        let off = schema.layer_offset(l);
        let a_prev = &cache.acts[l];
        {
            let (gw, gb) = grad[off..off + (inp + 1) * out].split_at_mut(inp * out);
            for i in 0..dz.rows() {
                let d = dz.row(i);
                let a = a_prev.row(i);
                for o in 0..out {
                    let dzo = d[o];
                    if dzo == 0.0 {
                        continue;
                    }
                    gb[o] += dzo;
                    let row = &mut gw[o * inp..(o + 1) * inp];
                    for (g, ai) in row.iter_mut().zip(a) {
                        *g += dzo * ai;
                    }
                }
            }
        }
        let (w, _) = params.layer(l);
        let mut da = Matrix::zeros(dz.rows(), inp);
        for i in 0..dz.rows() {
            let d = dz.row(i);
            let r = da.row_mut(i);
            for o in 0..out {
                let dzo = d[o];
                if dzo == 0.0 {
                    continue;
                }
                for (ri, wi) in r.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                    *ri += dzo * wi;
                }
            }
        }
        if l > 0 {
            let act = schema.activation();
            let z = &cache.pre[l - 1];
            for (d, zv) in da.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *d *= act.derivative(*zv);
            }
        }
        dz = da;
    }
    (grad, dz)
}

pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|&z| math::exp(z - m)).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        out.row_mut(i).copy_from_slice(&softmax_row(logits.row(i)));
    }
    out
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &ParamVector, x: &Matrix) -> Result<Vec<usize>> {
    let cache = forward(params, x)?;
    let logits = cache.logits();
    Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
}

/// `D_KL(p ‖ q)` for probability rows; zero-probability terms of `p` vanish.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (math::ln(pi) - math::ln(qi.max(f64::MIN_POSITIVE))))
        .sum()
}

/// Log-sum-exp stable `log softmax` of one row.
pub(crate) fn log_softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + math::ln(logits.iter().map(|&z| math::exp(z - m)).sum::<f64>());
    logits.iter().map(|&z| z - lse).collect()
}

/// Proximal anchor for the FedProx local objective.
#[derive(Debug, Clone, Copy)]
pub struct Prox<'a> {
    pub mu: f64,
    pub anchor: &'a ParamVector,
}

/// Mean cross-entropy (plus `μ/2·‖w − anchor‖²`) and its exact gradient.
pub fn loss_and_grad(
    params: &ParamVector,
    batch: &Batch,
    prox: Option<Prox<'_>>,
) -> Result<(f64, ParamVector)> {
    batch.check(&params.schema)?;
    if let Some(p) = &prox {
        params.check_compatible(p.anchor)?;
        if !(p.mu >= 0.0) {
            return Err(domain!("proximal weight must be non-negative"));
        }
    }
    let cache = forward(params, &batch.features)?;
    let logits = cache.logits();
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut d = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let y = batch.labels[i];
        let ls = log_softmax_row(logits.row(i));
        loss -= ls[y];
        let row = d.row_mut(i);
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = (math::exp(ls[c]) - if c == y { 1.0 } else { 0.0 }) / n;
        }
    }
    loss /= n;
    let (mut grad, _) = backward(params, &cache, &d);
    if let Some(p) = prox {
        if p.mu > 0.0 {
            loss += 0.5 * p.mu * sq_dist(&params.values, &p.anchor.values);
            for (g, (w, a)) in grad
                .iter_mut()
                .zip(params.values.iter().zip(&p.anchor.values))
            {
                *g += p.mu * (w - a);
            }
        }
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite loss or gradient".into()));
    }
    Ok((
        loss,
        ParamVector {
            values: grad,
            schema: params.schema.clone(),
        },
    ))
}

/// Cross-entropy against soft targets (one probability row per sample),
/// mean over rows, with its parameter gradient.
pub fn soft_cross_entropy_and_grad(
    params: &ParamVector,
    x: &Matrix,
    targets: &Matrix,
) -> Result<(f64, ParamVector)> {
    if x.rows() == 0 {
        return Err(domain!("empty batch"));
    }
    let cache = forward(params, x)?;
    let logits = cache.logits();
    if targets.rows() != logits.rows() || targets.cols() != logits.cols() {
        return Err(Error::Schema("soft targets do not match logits".into()));
    }
    let n = x.rows() as f64;
    let mut loss = 0.0;
    let mut d = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let ls = log_softmax_row(logits.row(i));
        let t = targets.row(i);
        loss -= t.iter().zip(&ls).map(|(a, b)| a * b).sum::<f64>();
        for (c, slot) in d.row_mut(i).iter_mut().enumerate() {
            *slot = (math::exp(ls[c]) - t[c]) / n;
        }
    }
    let (grad, _) = backward(params, &cache, &d);
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite soft cross-entropy".into()));
    }
    Ok((
        loss / n,
        ParamVector {
            values: grad,
            schema: params.schema.clone(),
        },
    ))
}

/// ∂/∂x of `Σ_i d_logits_i · logits(x_i)`.
pub fn input_gradient(params: &ParamVector, x: &Matrix, d_logits: &Matrix) -> Result<Matrix> {
    let cache = forward(params, x)?;
    Ok(backward(params, &cache, d_logits).1)
}

#[cfg(test)]
mod tests {
    use super::super::{Activation, ModelSchema};
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_batch(n: usize, d: usize, c: usize, seed: u64) -> Batch {
        let mut r = rng::rng(seed);
        let feats: Vec<f64> = (0..n * d).map(|_| r.random_range(-1.5..1.5)).collect();
        let labels = (0..n).map(|_| r.random_range(0..c)).collect();
        Batch::new(Matrix::from_vec(n, d, feats).unwrap(), labels).unwrap()
    }

    fn loss_only(p: &ParamVector, b: &Batch, prox: Option<Prox<'_>>) -> f64 {
        loss_and_grad(p, b, prox).unwrap().0
    }

    /// Central finite differences, step h. Independent of `backward`.
    fn fd_grad(p: &ParamVector, b: &Batch, prox: Option<Prox<'_>>, h: f64) -> Vec<f64> {
        (0..p.len())
            .map(|i| {
                let mut plus = p.clone();
                plus.values[i] += h;
                let mut minus = p.clone();
                minus.values[i] -= h;
                (loss_only(&plus, b, prox) - loss_only(&minus, b, prox)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num = sq_dist(a, b).sqrt();
        let den = crate::linalg::norm(a).max(crate::linalg::norm(b)).max(1e-8);
        num / den
    }

    #[test]
    fn zero_weight_logistic_balanced_batch_has_ln2_loss() {
        let s = ModelSchema::logistic(3, 2).unwrap();
        let p = ParamVector::zeros(&s);
        let b = Batch::new(
            Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]]).unwrap(),
            vec![0, 1],
        )
        .unwrap();
        let (loss, _) = loss_and_grad(&p, &b, None).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_prox_weight_is_identity() {
        let s = ModelSchema::mlp(3, &[4], 3, Activation::Relu).unwrap();
        let p = ParamVector::random(&s, 0.5, 1);
        let anchor = ParamVector::random(&s, 0.5, 2);
        let b = random_batch(5, 3, 3, 3);
        let plain = loss_and_grad(&p, &b, None).unwrap();
        let prox = loss_and_grad(
            &p,
            &b,
            Some(Prox {
                mu: 0.0,
                anchor: &anchor,
            }),
        )
        .unwrap();
        assert_eq!(plain.0, prox.0);
        assert_eq!(plain.1.values, prox.1.values);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10u64 {
            let s = if seed % 2 == 0 {
                ModelSchema::logistic(4, 3).unwrap()
            } else {
                ModelSchema::mlp(4, &[5], 3, Activation::Identity).unwrap()
            };
            let p = ParamVector::random(&s, 0.7, seed);
            let anchor = ParamVector::random(&s, 0.7, seed + 100);
            let b = random_batch(6, 4, 3, seed + 200);
            let prox = Some(Prox {
                mu: 0.3,
                anchor: &anchor,
            });
            let (_, g) = loss_and_grad(&p, &b, prox).unwrap();
            let fd = fd_grad(&p, &b, prox, 1e-4);
            assert!(rel_err(&g.values, &fd) <= 1e-5, "seed {seed}");
        }
    }

    #[test]
    fn soft_targets_reduce_to_hard_labels_for_one_hot() {
        let s = ModelSchema::logistic(3, 3).unwrap();
        let p = ParamVector::random(&s, 1.0, 4);
        let b = random_batch(4, 3, 3, 5);
        let mut t = Matrix::zeros(4, 3);
        for (i, &y) in b.labels.iter().enumerate() {
            t.set(i, y, 1.0);
        }
        let (l1, g1) = loss_and_grad(&p, &b, None).unwrap();
        let (l2, g2) = soft_cross_entropy_and_grad(&p, &b.features, &t).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        assert!(rel_err(&g1.values, &g2.values) < 1e-12);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let s = ModelSchema::mlp(3, &[4], 2, Activation::Identity).unwrap();
        let p = ParamVector::random(&s, 0.8, 9);
        let x = Matrix::from_rows(&[vec![0.3, -0.2, 0.9]]).unwrap();
        let up = Matrix::from_rows(&[vec![0.7, -1.3]]).unwrap();
        let f = |x: &Matrix| {
            let c = forward(&p, x).unwrap();
            crate::linalg::dot(c.logits().row(0), up.row(0))
        };
        let g = input_gradient(&p, &x, &up).unwrap();
        for j in 0..3 {
            let mut a = x.clone();
            a.set(0, j, x.get(0, j) + 1e-5);
            let mut b = x.clone();
            b.set(0, j, x.get(0, j) - 1e-5);
            let fd = (f(&a) - f(&b)) / 2e-5;
            assert!((fd - g.get(0, j)).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_batch_and_bad_shapes_are_rejected() {
        let s = ModelSchema::logistic(2, 2).unwrap();
        let p = ParamVector::zeros(&s);
        let empty = Batch::new(Matrix::zeros(0, 2), vec![]).unwrap();
        assert!(matches!(
            loss_and_grad(&p, &empty, None),
            Err(Error::Domain(_))
        ));
        let wide = random_batch(3, 5, 2, 1);
        assert!(matches!(
            loss_and_grad(&p, &wide, None),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn kl_of_reference_pair() {
        let k = kl_divergence(&[0.9, 0.1], &[0.5, 0.5]);
        let expected = 0.9 * (1.8f64).ln() + 0.1 * (0.2f64).ln();
        assert!((k - expected).abs() < 1e-15);
        assert!((k - 0.368).abs() < 1e-3);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
