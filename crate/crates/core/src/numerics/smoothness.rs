use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};

use super::{loss_and_grad, Batch, ParamVector};
use crate::error::{domain, Result};
use crate::linalg::{norm, sq_dist, sub};
use crate::math;
use crate::rng;

/// Empirical smoothness constant: the largest `‖∇f(w1) − ∇f(w2)‖ / ‖w1 − w2‖`
/// over all pairs of distinct samples.
pub fn estimate_beta(samples: &[ParamVector], batch: &Batch) -> Result<f64> {
    let grads = samples
        .iter()
        .map(|p| loss_and_grad(p, batch, None).map(|(_, g)| g.values))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<f64> = None;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            samples[i].check_compatible(&samples[j])?;
            let dw = math::sqrt(sq_dist(&samples[i].values, &samples[j].values));
            if dw == 0.0 {
                continue;
            }
            let dg = math::sqrt(sq_dist(&grads[i], &grads[j]));
            let r = dg / dw;
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best.ok_or_else(|| domain!("need at least two distinct parameter samples"))
}

/// Sample points around `center` for [`estimate_beta`]: the centre, a few
/// random perturbations of size `radius`, and perturbations along a direction
/// refined by power iteration on gradient differences, which finds the
/// sharpest curvature far more reliably than random pairs.
pub fn beta_probe_samples(
    center: &ParamVector,
    batch: &Batch,
    radius: f64,
    iters: usize,
    seed: u64,
) -> Result<Vec<ParamVector>> {
    if !(radius > 0.0) {
        return Err(domain!("probe radius must be positive"));
    }
    let mut r = rng::rng_for(seed, &[rng::tag::PROBE]);
    let d = center.len();
    let random_dir = |r: &mut rng::SimRng| -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    };
    let shifted = |dir: &[f64], h: f64| -> ParamVector {
        let values = center
            .values
            .iter()
            .zip(dir)
            .map(|(w, v)| w + h * v)
            .collect();
        ParamVector {
            values,
            schema: center.schema.clone(),
        }
    };
    let mut out = Vec::new();
    out.push(center.clone());
    for _ in 0..3 {
        let v = random_dir(&mut r);
        out.push(shifted(&v, radius));
    }
    let (_, g0) = loss_and_grad(center, batch, None)?;
    let mut v = random_dir(&mut r);
    for _ in 0..iters.max(1) {
        let (_, g1) = loss_and_grad(&shifted(&v, radius), batch, None)?;
        let hv = sub(&g1.values, &g0.values);
        let n = norm(&hv);
        if n == 0.0 {
            break;
        }
        v = hv.into_iter().map(|x| x / n).collect();
    }
    out.push(shifted(&v, radius));
    out.push(shifted(&v, -radius));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{Activation, ModelSchema};
    use super::*;
    use crate::linalg::{power_iteration, Matrix};
    use alloc::vec;
    use rand::Rng;

    #[test]
    fn identical_samples_are_rejected() {
        let s = ModelSchema::logistic(2, 2).unwrap();
        let p = ParamVector::zeros(&s);
        let b = Batch::new(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), vec![0]).unwrap();
        assert!(estimate_beta(&[p.clone(), p], &b).is_err());
    }

    #[test]
    fn beta_of_constant_gradient_region_is_zero() {
        // a model whose logits ignore the parameter difference: only biases
        // differ by a constant shift across both classes, so softmax and the
        // gradient are unchanged
        let s = ModelSchema::new(vec![(1, 2)], Activation::Identity).unwrap();
        let b = Batch::new(Matrix::from_rows(&[vec![0.0]]).unwrap(), vec![1]).unwrap();
        let p1 = ParamVector::new(s.clone(), vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let p2 = ParamVector::new(s, vec![0.0, 0.0, 3.0, 3.0]).unwrap();
        assert!(estimate_beta(&[p1, p2], &b).unwrap().abs() < 1e-12);
    }

    /// For K-class softmax regression the Hessian of the mean loss is bounded
    /// by ½·λmax(X̃ᵀX̃)/n, X̃ being the features with a bias column.
    #[test]
    fn logistic_beta_respects_spectral_bound() {
        for seed in 0..5u64 {
            let mut r = rng::rng(seed);
            let n = 40;
            let d = 3;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect())
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let b = Batch::new(x, labels).unwrap();
            let aug: Vec<Vec<f64>> = rows
                .iter()
                .map(|row| {
                    let mut v = row.clone();
                    v.push(1.0);
                    v
                })
                .collect();
            let bound =
                0.5 * power_iteration(&Matrix::from_rows(&aug).unwrap().gram(), 500) / n as f64;
            let s = ModelSchema::logistic(d, 2).unwrap();
            let center = ParamVector::zeros(&s);
            let samples = beta_probe_samples(&center, &b, 1e-3, 30, seed).unwrap();
            let beta = estimate_beta(&samples, &b).unwrap();
            assert!(beta <= bound * 1.05, "seed {seed}: {beta} > {bound}");
            // at w = 0 the softmax Hessian attains the bound along the top direction
            assert!(beta >= bound * 0.9, "seed {seed}: {beta} far below {bound}");
        }
    }
}
