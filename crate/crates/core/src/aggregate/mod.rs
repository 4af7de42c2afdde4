//! Similarity clustering of accepted updates, encrypted FedAvg and the
//! baseline server aggregators.

mod ap;
mod robust;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::crypto::EncVector;
use crate::error::{domain, Error, Result};
use crate::numerics::{AdamState, ParamVector};

pub use ap::{affinity_propagation, scalar_similarity, ApConfig};
pub use robust::{geometric_objective, krum, krum_scores, rfa_geometric_median};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    FedAnil,
    FedAvg,
    FedProx,
    FedAdam,
    Krum,
    Rfa,
}

impl Aggregator {
    pub const ALL: [Aggregator; 6] = [
        Aggregator::FedAnil,
        Aggregator::FedAvg,
        Aggregator::FedProx,
        Aggregator::FedAdam,
        Aggregator::Krum,
        Aggregator::Rfa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::FedAnil => "fedanil",
            Aggregator::FedAvg => "fedavg",
            Aggregator::FedProx => "fedprox",
            Aggregator::FedAdam => "fedadam",
            Aggregator::Krum => "krum",
            Aggregator::Rfa => "rfa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown aggregator `{s}`")))
    }
}

/// One accepted update's gate statistic and model type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterInput {
    pub enterprise: usize,
    pub theta: f64,
    pub tag: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub tag: u32,
    pub exemplar: usize,
    /// Enterprise ids, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClusterList {
    /// Ordered by tag, then by smallest member.
    pub clusters: Vec<Cluster>,
}

impl ClusterList {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn for_tag(&self, tag: u32) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(move |c| c.tag == tag)
    }
}

/// Split by model tag, then run AP on s(i,j) = −|θ_i − θ_j| within each tag.
pub fn cluster_models(inputs: &[ClusterInput], cfg: &ApConfig) -> Result<ClusterList> {
    if let Some(bad) = inputs.iter().find(|c| !c.theta.is_finite()) {
        return Err(Error::Registry(bad.enterprise));
    }
    let mut tags: Vec<u32> = inputs.iter().map(|c| c.tag).collect();
    tags.sort_unstable();
    tags.dedup();
    let mut clusters = Vec::new();
    for tag in tags {
        let group: Vec<&ClusterInput> = inputs.iter().filter(|c| c.tag == tag).collect();
        let thetas: Vec<f64> = group.iter().map(|c| c.theta).collect();
        let labels = affinity_propagation(&scalar_similarity(&thetas, cfg.preference), cfg)?;
        let mut exemplars: Vec<usize> = labels.clone();
        exemplars.sort_unstable();
        exemplars.dedup();
        let mut these: Vec<Cluster> = exemplars
            .into_iter()
            .map(|e| {
                let mut members: Vec<usize> = (0..group.len())
                    .filter(|&i| labels[i] == e)
                    .map(|i| group[i].enterprise)
                    .collect();
                members.sort_unstable();
                Cluster {
                    tag,
                    exemplar: group[e].enterprise,
                    members,
                }
            })
            .collect();
        these.sort_by_key(|c| c.members[0]);
        clusters.extend(these);
    }
    Ok(ClusterList { clusters })
}

/// Encrypted mean: the ciphertext sum scaled by 1/n.
pub fn fedavg(updates: &[&EncVector]) -> Result<EncVector> {
    let (first, rest) = updates
        .split_first()
        .ok_or_else(|| domain!("fedavg of no updates"))?;
    let mut sum = (*first).clone();
    for u in rest {
        sum = sum.add(u)?;
    }
    sum.plain_mul_scalar(1.0 / updates.len() as f64)
}

/// Σ w_i·ct_i, each product taken at the fresh level so one rescale covers
/// the whole combination.
pub fn weighted_sum(updates: &[&EncVector], weights: &[f64]) -> Result<EncVector> {
    if updates.len() != weights.len() {
        return Err(Error::Schema(alloc::format!(
            "{} updates, {} weights",
            updates.len(),
            weights.len()
        )));
    }
    let parts = updates
        .iter()
        .zip(weights)
        .map(|(u, &w)| u.plain_mul_scalar(w))
        .collect::<Result<Vec<_>>>()?;
    EncVector::sum(&parts)
}

/// Per-member coefficients that merge per-cluster means into one model:
/// cluster c weighs W_c = Σ_{i∈c} (1 + stake_i), each member gets
/// (W_c / ΣW) / |c|. The coefficients sum to 1.
pub fn merge_coefficients(
    clusters: &[&Cluster],
    stake: impl Fn(usize) -> f64,
) -> Result<Vec<(usize, f64)>> {
    if clusters.iter().any(|c| c.members.is_empty()) {
        return Err(domain!("empty cluster"));
    }
    let weights: Vec<f64> = clusters
        .iter()
        .map(|c| c.members.iter().map(|&i| 1.0 + stake(i)).sum())
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(domain!("no clusters to merge"));
    }
    let mut out = Vec::new();
    for (c, w) in clusters.iter().zip(&weights) {
        for &m in &c.members {
            out.push((m, w / total / c.members.len() as f64));
        }
    }
    Ok(out)
}

/// Adam applied on the server to the pseudo-gradient −mean_delta.
pub fn fedadam_server_update(
    global: &ParamVector,
    mean_delta: &ParamVector,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<ParamVector> {
    global.check_compatible(mean_delta)?;
    let g: Vec<f64> = mean_delta.values.iter().map(|d| -d).collect();
    let step = state.delta(&g, learning_rate);
    global.with_values(
        global
            .values
            .iter()
            .zip(&step)
            .map(|(w, s)| w + s)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, Backend, HeParams, KeyMaterial};
    use crate::numerics::ModelSchema;
    use crate::rng;
    use alloc::vec;
    use rand::Rng;

    fn keys(backend: Backend) -> KeyMaterial {
        keygen(&HeParams::new(backend, 1024).unwrap(), 1).unwrap()
    }

    fn enc(k: &KeyMaterial, v: &[f64], seed: u64) -> EncVector {
        EncVector::encrypt(&k.public, v, seed).unwrap()
    }

    #[test]
    fn fedavg_examples() {
        let k = keys(Backend::Lattice);
        let x = [0.5, -1.5, 2.0];
        let one = fedavg(&[&enc(&k, &x, 1)])
            .unwrap()
            .decrypt(&k.secret)
            .unwrap();
        assert!(one.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-3));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let zero = fedavg(&[&enc(&k, &x, 2), &enc(&k, &neg, 3)])
            .unwrap()
            .decrypt(&k.secret)
            .unwrap();
        assert!(zero.iter().all(|v| v.abs() <= 2e-3));

        let mut r = rng::rng(3);
        let vs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..20).map(|_| r.random_range(-4.0..4.0)).collect())
            .collect();
        let cts: Vec<EncVector> = vs
            .iter()
            .enumerate()
            .map(|(i, v)| enc(&k, v, i as u64))
            .collect();
        let got = fedavg(&cts.iter().collect::<Vec<_>>())
            .unwrap()
            .decrypt(&k.secret)
            .unwrap();
        for j in 0..20 {
            let want = (vs[0][j] + vs[1][j] + vs[2][j]) / 3.0;
            assert!((got[j] - want).abs() <= 5e-3);
        }
        assert!(fedavg(&[]).is_err());
    }

    #[test]
    fn weighted_sum_matches_plaintext() {
        let k = keys(Backend::Exact);
        let a = enc(&k, &[1.0, 2.0], 0);
        let b = enc(&k, &[3.0, -1.0], 1);
        let got = weighted_sum(&[&a, &b], &[0.25, 0.75])
            .unwrap()
            .decrypt(&k.secret)
            .unwrap();
        assert_eq!(got, [0.25 + 2.25, 0.5 - 0.75]);
    }

    #[test]
    fn clustering_respects_tags_and_groups() {
        let cfg = ApConfig::default();
        let same: Vec<ClusterInput> = (0..4)
            .map(|i| ClusterInput {
                enterprise: i,
                theta: 0.3,
                tag: 0,
            })
            .collect();
        assert_eq!(cluster_models(&same, &cfg).unwrap().len(), 1);

        let mut two = same.clone();
        two[1].tag = 1;
        two[3].tag = 1;
        let cl = cluster_models(&two, &cfg).unwrap();
        assert!(cl.len() >= 2);
        for c in &cl.clusters {
            assert!(c.members.iter().all(|&m| two[m].tag == c.tag));
        }

        let thetas = [0.1, 0.11, 0.12, 0.8, 0.81];
        let mut mixed = Vec::new();
        for tag in 0..2u32 {
            for (i, &t) in thetas.iter().enumerate() {
                mixed.push(ClusterInput {
                    enterprise: 10 * tag as usize + i,
                    theta: t,
                    tag,
                });
            }
        }
        let cl = cluster_models(&mixed, &cfg).unwrap();
        let groups: Vec<Vec<usize>> = cl.clusters.iter().map(|c| c.members.clone()).collect();
        assert_eq!(
            groups,
            [vec![0, 1, 2], vec![3, 4], vec![10, 11, 12], vec![13, 14]]
        );
        for c in &cl.clusters {
            assert!(c.members.contains(&c.exemplar));
        }

        let mut bad = same;
        bad[2].theta = f64::NAN;
        assert!(matches!(
            cluster_models(&bad, &cfg),
            Err(Error::Registry(2))
        ));
    }

    #[test]
    fn merge_coefficients_sum_to_one() {
        let a = Cluster {
            tag: 0,
            exemplar: 0,
            members: vec![0, 1],
        };
        let b = Cluster {
            tag: 0,
            exemplar: 2,
            members: vec![2],
        };
        let stakes = [1.0, 0.0, 3.0];
        let c = merge_coefficients(&[&a, &b], |i| stakes[i]).unwrap();
        // W_a = 2 + 1 = 3, W_b = 4
        assert_eq!(
            c,
            [(0, 3.0 / 7.0 / 2.0), (1, 3.0 / 7.0 / 2.0), (2, 4.0 / 7.0)]
        );
        assert!((c.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fedadam_examples() {
        let s = ModelSchema::logistic(1, 2).unwrap();
        let g = ParamVector::new(s.clone(), vec![1.0, -1.0, 0.5, 0.0]).unwrap();
        let mut st = AdamState::new(4, 0.9, 0.99).unwrap();
        let out = fedadam_server_update(&g, &ParamVector::zeros(&s), &mut st, 0.1).unwrap();
        assert_eq!(out, g);

        // constant delta: m̂ = −d and v̂ = d² exactly, so each step moves η·sign(d)
        let d = ParamVector::new(s.clone(), vec![0.3, -0.2, 1e-3, 5.0]).unwrap();
        let mut st = AdamState::new(4, 0.9, 0.99).unwrap();
        let mut w = g.clone();
        for _ in 0..5 {
            let next = fedadam_server_update(&w, &d, &mut st, 0.1).unwrap();
            for i in 0..4 {
                let moved = next.values[i] - w.values[i];
                assert!(
                    (moved - 0.1 * d.values[i].signum()).abs() < 1e-5 * 0.1 + 1e-12,
                    "{moved}"
                );
            }
            w = next;
        }
    }

    #[test]
    fn fedadam_three_step_trace() {
        // by hand, β1 = 0.9, β2 = 0.99, η = 0.1, every coordinate alike,
        // deltas 1, 0, −1 → gradients g = −1, 0, 1
        // t=1: m = −0.1,    v = 0.01,     m̂ = −1,        v̂ = 1,        step +0.1
        // t=2: m = −0.09,   v = 0.0099,   m̂ = −0.09/0.19, v̂ = 0.0099/0.0199
        // t=3: m = 0.019,   v = 0.019801, m̂ = 0.019/0.271, v̂ = 0.019801/0.029701
        let s = ModelSchema::logistic(1, 2).unwrap();
        let mut st = AdamState::new(4, 0.9, 0.99).unwrap();
        let mut w = ParamVector::zeros(&s);
        let mut want = 0.0;
        let eps = 1e-8;
        let steps = [
            (-1.0, 1.0),
            (-0.09 / 0.19, 0.0099 / 0.0199),
            (0.019 / 0.271, 0.019801 / 0.029701),
        ];
        for (i, d) in [1.0, 0.0, -1.0].into_iter().enumerate() {
            w = fedadam_server_update(&w, &w.with_values(vec![d; 4]).unwrap(), &mut st, 0.1)
                .unwrap();
            let (mh, vh): (f64, f64) = steps[i];
            want -= 0.1 * mh / (vh.sqrt() + eps);
            assert!(
                w.values.iter().all(|&x| (x - want).abs() < 1e-12),
                "step {i}: {} vs {want}",
                w.values[0]
            );
        }
    }
}
