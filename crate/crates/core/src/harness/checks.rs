use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::aggregate::{cluster_models, fedavg, ApConfig, ClusterInput};
use crate::crypto::{EncVector, KeyMaterial};
use crate::data::{gen_synthetic, Dataset};
use crate::defense::cosine_similarity;
use crate::error::{domain, Error, Result};
use crate::linalg::{mean, sq_dist, sub};
use crate::numerics::{loss_and_grad, ModelSchema, ParamVector};
use crate::rng::derive;

/// True iff every ‖ω_k − ω̄‖² ≤ δ²·r̄²·C.
pub fn divergence_check(
    locals: &[&ParamVector],
    averaged: &ParamVector,
    delta: f64,
    steps: usize,
    c_bound: f64,
) -> Result<bool> {
    if locals.is_empty() {
        return Err(domain!("divergence check over an empty window"));
    }
    if !(delta > 0.0) || !(c_bound >= 0.0) {
        return Err(domain!("need δ > 0 and C ≥ 0"));
    }
    let bound = delta * delta * (steps * steps) as f64 * c_bound;
    for w in locals {
        w.check_compatible(averaged)?;
        if sq_dist(&w.values, &averaged.values) > bound {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Encrypted FedAvg over benign ∪ malicious against the μ-mixture of the
/// two plaintext means, within `tol` per coordinate.
pub fn mixture_check(
    benign: &[Vec<f64>],
    malicious: &[Vec<f64>],
    mu: f64,
    keys: &KeyMaterial,
    tol: f64,
) -> Result<bool> {
    let (b, m) = (benign.len(), malicious.len());
    if b + m == 0 {
        return Err(domain!("no updates"));
    }
    let share = m as f64 / (b + m) as f64;
    if (share - mu).abs() > 1e-12 {
        return Err(domain!(
            "μ = {mu} but {m} of {} updates are malicious",
            b + m
        ));
    }
    let all: Vec<EncVector> = benign
        .iter()
        .chain(malicious)
        .enumerate()
        .map(|(i, v)| EncVector::encrypt(&keys.public, v, derive(0xC0, &[i as u64])))
        .collect::<Result<_>>()?;
    let refs: Vec<&EncVector> = all.iter().collect();
    let got = fedavg(&refs)?.decrypt(&keys.secret)?;
    let part = |set: &[Vec<f64>], w: f64| -> Result<Vec<f64>> {
        if set.is_empty() {
            return Ok(vec![0.0; got.len()]);
        }
        let rows: Vec<&[f64]> = set.iter().map(|v| &v[..]).collect();
        Ok(mean(&rows)?.into_iter().map(|x| w * x).collect())
    };
    let want: Vec<f64> = part(benign, 1.0 - mu)?
        .iter()
        .zip(part(malicious, mu)?)
        .map(|(a, c)| a + c)
        .collect();
    if want.len() != got.len() {
        return Err(Error::Schema(alloc::format!(
            "{} vs {} coordinates",
            want.len(),
            got.len()
        )));
    }
    Ok(got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= tol))
}

/// Clustered vs uniform aggregation on enterprises drawn from one of
/// several synthetic distributions. Distribution ϱ relabels class y as
/// (y + ϱ) mod classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGainConfig {
    pub distributions: usize,
    pub enterprises_per: usize,
    pub samples_per: usize,
    pub dim: usize,
    pub separation: f64,
    pub rounds: usize,
    pub local_steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClusterGainConfig {
    fn default() -> Self {
        Self {
            distributions: 2,
            enterprises_per: 5,
            samples_per: 60,
            dim: 4,
            separation: 1.5,
            rounds: 40,
            local_steps: 5,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGainReport {
    /// E_k ‖ω^{cluster(k)} − ω*^{ϱ(k)}‖² per round.
    pub clustered: Vec<f64>,
    /// E_k ‖ω̄ − ω*^{ϱ(k)}‖² per round.
    pub uniform: Vec<f64>,
    pub passed: bool,
}

/// Enterprise shards with their distribution ids.
pub fn cluster_gain_data(cfg: &ClusterGainConfig) -> Result<Vec<(Dataset, usize)>> {
    if cfg.distributions == 0 || cfg.enterprises_per == 0 || cfg.samples_per < 2 {
        return Err(Error::Config(
            "need ≥ 1 distribution, ≥ 1 enterprise and ≥ 2 samples each".into(),
        ));
    }
    let mut out = Vec::new();
    for d in 0..cfg.distributions {
        for e in 0..cfg.enterprises_per {
            let mut ds = gen_synthetic(
                2,
                cfg.dim,
                cfg.samples_per / 2,
                cfg.separation,
                derive(cfg.seed, &[d as u64, e as u64]),
            )?;
            for y in ds.labels.iter_mut() {
                *y = (*y + d) % 2;
            }
            out.push((ds, d));
        }
    }
    Ok(out)
}

/// Full-batch gradient descent on the pooled data of one distribution.
pub fn train_optimum(
    shards: &[&Dataset],
    schema: &ModelSchema,
    learning_rate: f64,
    iters: usize,
) -> Result<ParamVector> {
    let first = shards
        .first()
        .ok_or_else(|| domain!("no data for the optimum"))?;
    let mut pooled = first.batch();
    for s in &shards[1..] {
        let b = s.batch();
        let mut rows: Vec<f64> = pooled.features.as_slice().to_vec();
        rows.extend_from_slice(b.features.as_slice());
        pooled.features = crate::linalg::Matrix::from_vec(
            pooled.features.rows() + b.features.rows(),
            b.features.cols(),
            rows,
        )?;
        pooled.labels.extend(b.labels);
    }
    let mut w = ParamVector::zeros(schema);
    for _ in 0..iters {
        let (_, g) = loss_and_grad(&w, &pooled, None)?;
        w = w.with_values(
            w.values
                .iter()
                .zip(&g.values)
                .map(|(a, b)| a - learning_rate * b)
                .collect(),
        )?;
    }
    Ok(w)
}

fn gd(w: &ParamVector, ds: &Dataset, lr: f64, steps: usize) -> Result<ParamVector> {
    let batch = ds.batch();
    let mut w = w.clone();
    for _ in 0..steps {
        let (_, g) = loss_and_grad(&w, &batch, None)?;
        w = w.with_values(
            w.values
                .iter()
                .zip(&g.values)
                .map(|(a, b)| a - lr * b)
                .collect(),
        )?;
    }
    Ok(w)
}

/// Runs both pipelines from a zero init. The clustered pipeline keeps one
/// model per enterprise: each round the updates are clustered by θ against
/// their mean and every cluster averages its members' local models. Passes
/// iff clustered ≤ uniform in ≥ 80 % of the rounds after round 10.
pub fn cluster_gain_check(
    cfg: &ClusterGainConfig,
    data: &[(Dataset, usize)],
    optima: &[ParamVector],
) -> Result<ClusterGainReport> {
    let dists = data.iter().map(|(_, d)| d + 1).max().unwrap_or(0);
    if dists == 0 {
        return Err(domain!("no enterprises"));
    }
    if optima.len() < dists {
        return Err(Error::Config(alloc::format!(
            "{} optima for {dists} distributions",
            optima.len()
        )));
    }
    if cfg.rounds <= 10 {
        return Err(Error::Config("need more than 10 rounds".into()));
    }
    let schema = &optima[0].schema;
    let n = data.len();
    let mut uniform = ParamVector::zeros(schema);
    let mut own = vec![uniform.clone(); n];
    let (mut cl, mut un) = (Vec::new(), Vec::new());
    for _ in 0..cfg.rounds {
        let locals = data
            .iter()
            .map(|(ds, _)| gd(&uniform, ds, cfg.learning_rate, cfg.local_steps))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<&[f64]> = locals.iter().map(|w| &w.values[..]).collect();
        uniform = uniform.with_values(mean(&rows)?)?;

        let locals = data
            .iter()
            .zip(&own)
            .map(|((ds, _), w)| gd(w, ds, cfg.learning_rate, cfg.local_steps))
            .collect::<Result<Vec<_>>>()?;
        let updates: Vec<Vec<f64>> = locals
            .iter()
            .zip(&own)
            .map(|(l, w)| sub(&l.values, &w.values))
            .collect();
        let rows: Vec<&[f64]> = updates.iter().map(|v| &v[..]).collect();
        let reference = mean(&rows)?;
        let inputs = updates
            .iter()
            .enumerate()
            .map(|(k, u)| {
                Ok(ClusterInput {
                    enterprise: k,
                    theta: cosine_similarity(u, &reference).unwrap_or(0.0),
                    tag: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        // preference at the smallest similarity: split only where θ is
        // genuinely grouped
        let (lo, hi) = inputs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| {
                (a.min(c.theta), b.max(c.theta))
            });
        let ap = ApConfig {
            preference: Some(-(hi - lo)),
            ..ApConfig::default()
        };
        for c in cluster_models(&inputs, &ap)?.clusters {
            let rows: Vec<&[f64]> = c.members.iter().map(|&k| &locals[k].values[..]).collect();
            let avg = uniform.with_values(mean(&rows)?)?;
            for &k in &c.members {
                own[k] = avg.clone();
            }
        }

        let e = |f: &dyn Fn(usize) -> f64| (0..n).map(f).sum::<f64>() / n as f64;
        cl.push(e(&|k| sq_dist(&own[k].values, &optima[data[k].1].values)));
        un.push(e(&|k| sq_dist(&uniform.values, &optima[data[k].1].values)));
    }
    let late: Vec<(f64, f64)> = cl
        .iter()
        .copied()
        .zip(un.iter().copied())
        .skip(10)
        .collect();
    let wins = late.iter().filter(|(c, u)| c <= u).count();
    Ok(ClusterGainReport {
        passed: 5 * wins >= 4 * late.len(),
        clustered: cl,
        uniform: un,
    })
}
