use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{domain, Result};
use crate::math;
use crate::rng::{self, SimRng};

const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// One Dir(α) draw over enterprises per class.
    #[default]
    Classwise,
    /// One Dir(α) draw over classes per enterprise; every enterprise gets
    /// ⌊N/n⌋ samples.
    EqualCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardAssignment {
    pub shards: Vec<Vec<usize>>,
    pub alpha: f64,
    pub seed: u64,
    pub mode: PartitionMode,
}

impl ShardAssignment {
    pub fn num_enterprises(&self) -> usize {
        self.shards.len()
    }
}

fn dirichlet(r: &mut SimRng, alpha: f64, k: usize) -> Result<Vec<f64>> {
    let g =
        Gamma::new(alpha, 1.0).map_err(|_| domain!("invalid Dirichlet concentration {alpha}"))?;
    loop {
        let draw: Vec<f64> = (0..k).map(|_| g.sample(r)).collect();
        let s: f64 = draw.iter().sum();
        // tiny α can underflow every component; redraw in that case
        if s > 0.0 && s.is_finite() {
            return Ok(draw.into_iter().map(|x| x / s).collect());
        }
    }
}

/// Integer counts summing to `total` closest to `p·total`: floors first, the
/// remainder going to the largest fractional parts (ties to lower index).
pub(crate) fn largest_remainder(p: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = p.iter().map(|&x| x * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|&x| math::floor(x) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - math::floor(raw[a]);
        let fb = raw[b] - math::floor(raw[b]);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn class_pools(ds: &Dataset, r: &mut SimRng) -> Vec<Vec<usize>> {
    let mut pools = vec![Vec::new(); ds.num_classes];
    for (i, &y) in ds.labels.iter().enumerate() {
        pools[y].push(i);
    }
    for p in &mut pools {
        p.shuffle(r);
    }
    pools
}

fn classwise(ds: &Dataset, n: usize, alpha: f64, r: &mut SimRng) -> Result<Vec<Vec<usize>>> {
    let pools = class_pools(ds, r);
    let mut shards = vec![Vec::new(); n];
    for pool in &pools {
        let p = dirichlet(r, alpha, n)?;
        let counts = largest_remainder(&p, pool.len());
        let mut at = 0;
        for (k, &c) in counts.iter().enumerate() {
            shards[k].extend_from_slice(&pool[at..at + c]);
            at += c;
        }
    }
    Ok(shards)
}

fn equal_count(ds: &Dataset, n: usize, alpha: f64, r: &mut SimRng) -> Result<Vec<Vec<usize>>> {
    let mut pools = class_pools(ds, r);
    let per = ds.len() / n;
    let mut shards = Vec::with_capacity(n);
    for _ in 0..n {
        let q = dirichlet(r, alpha, ds.num_classes)?;
        let want = largest_remainder(&q, per);
        let mut shard = Vec::with_capacity(per);
        let mut short = 0;
        for (c, &w) in want.iter().enumerate() {
            let take = w.min(pools[c].len());
            short += w - take;
            let start = pools[c].len() - take;
            shard.extend(pools[c].drain(start..));
        }
        // exhausted classes are backfilled from the fullest remaining pool
        while short > 0 {
            let c = (0..pools.len())
                .max_by(|&a, &b| pools[a].len().cmp(&pools[b].len()).then(b.cmp(&a)))
                .ok_or_else(|| domain!("no classes"))?;
            let take = short.min(pools[c].len());
            let start = pools[c].len() - take;
            shard.extend(pools[c].drain(start..));
            short -= take;
        }
        shards.push(shard);
    }
    Ok(shards)
}

/// Label-skew partition of `ds` among `n` enterprises. Every enterprise
/// receives at least one sample; draws that leave one empty are repeated
/// (up to 100 attempts).
pub fn dirichlet_partition(
    ds: &Dataset,
    n: usize,
    alpha: f64,
    mode: PartitionMode,
    seed: u64,
) -> Result<ShardAssignment> {
    if n == 0 {
        return Err(domain!("need at least one enterprise"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(domain!("α must be positive and finite"));
    }
    if n > ds.len() {
        return Err(domain!(
            "{n} enterprises cannot each hold a sample of {} rows",
            ds.len()
        ));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut r = rng::rng_for(seed, &[rng::tag::PARTITION, attempt]);
        let shards = match mode {
            PartitionMode::Classwise => classwise(ds, n, alpha, &mut r)?,
            PartitionMode::EqualCount => equal_count(ds, n, alpha, &mut r)?,
        };
        if shards.iter().all(|s| !s.is_empty()) {
            return Ok(ShardAssignment {
                shards,
                alpha,
                seed,
                mode,
            });
        }
    }
    Err(domain!(
        "no Dir({alpha}) draw gave all {n} enterprises a sample in {MAX_ATTEMPTS} attempts"
    ))
}

/// Fraction of a shard falling in each class.
pub fn class_shares(ds: &Dataset, shard: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; ds.num_classes];
    for &i in shard {
        c[ds.labels[i]] += 1.0;
    }
    let n = shard.len().max(1) as f64;
    c.into_iter().map(|x| x / n).collect()
}

/// Per-enterprise largest class share.
pub fn skew_statistic(ds: &Dataset, sa: &ShardAssignment) -> Vec<f64> {
    sa.shards
        .iter()
        .map(|s| class_shares(ds, s).into_iter().fold(0.0, f64::max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::gen_synthetic;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn largest_remainder_conserves_total() {
        assert_eq!(largest_remainder(&[0.5, 0.25, 0.25], 5), vec![3, 1, 1]);
        assert_eq!(largest_remainder(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
    }

    #[test]
    fn one_enterprise_gets_everything() {
        let ds = gen_synthetic(3, 2, 10, 1.0, 1).unwrap();
        let sa = dirichlet_partition(&ds, 1, 0.1, PartitionMode::Classwise, 5).unwrap();
        let mut all = sa.shards[0].clone();
        all.sort();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn too_many_enterprises_rejected() {
        let ds = gen_synthetic(2, 2, 3, 1.0, 1).unwrap();
        assert!(dirichlet_partition(&ds, 7, 1.0, PartitionMode::Classwise, 0).is_err());
    }

    #[test]
    fn huge_alpha_is_near_uniform() {
        let ds = gen_synthetic(10, 2, 600, 1.0, 2).unwrap();
        let sa = dirichlet_partition(&ds, 10, 1e6, PartitionMode::Classwise, 3).unwrap();
        for s in &sa.shards {
            for share in class_shares(&ds, s) {
                assert!((share - 0.1).abs() <= 0.01, "{share}");
            }
        }
    }

    #[test]
    fn equal_count_mode_gives_equal_sizes() {
        let ds = gen_synthetic(2, 2, 500, 1.0, 2).unwrap();
        let sa = dirichlet_partition(&ds, 100, 0.1, PartitionMode::EqualCount, 3).unwrap();
        assert!(sa.shards.iter().all(|s| s.len() == 10));
    }

    fn check_partition(sa: &ShardAssignment, len: usize) {
        let mut seen = vec![false; len];
        for s in &sa.shards {
            assert!(!s.is_empty());
            for &i in s {
                assert!(i < len);
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn shards_are_disjoint_and_cover(seed in 0u64..10_000, n in 1usize..12, log_alpha in -1.0f64..3.0) {
            let ds = gen_synthetic(4, 2, 40, 1.0, seed).unwrap();
            let alpha = 10f64.powf(log_alpha);
            let sa = dirichlet_partition(&ds, n, alpha, PartitionMode::Classwise, seed).unwrap();
            check_partition(&sa, ds.len());
            let total: usize = sa.shards.iter().map(Vec::len).sum();
            prop_assert_eq!(total, ds.len());
            let eq = dirichlet_partition(&ds, n, alpha, PartitionMode::EqualCount, seed).unwrap();
            check_partition(&eq, ds.len());
        }
    }
}
