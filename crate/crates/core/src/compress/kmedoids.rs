use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::error::{domain, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMedoids {
    /// Medoid values in ascending order.
    pub medoids: Vec<f64>,
    /// Index into `medoids` for every input value.
    pub assignment: Vec<usize>,
    /// Σ|P_i − ∂_i| over the final assignment.
    pub cost: f64,
    /// Cost after BUILD and after every accepted swap.
    pub trace: Vec<f64>,
}

/// Sorted copy of the points with prefix sums, for O(log n) segment costs.
struct Line {
    xs: Vec<f64>,
    prefix: Vec<f64>,
}

impl Line {
    fn new(values: &[f64]) -> Self {
        let mut xs = values.to_vec();
        xs.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(xs.len() + 1);
        prefix.push(0.0);
        let mut s = 0.0;
        for &x in &xs {
            s += x;
            prefix.push(s);
        }
        Self { xs, prefix }
    }

    /// First index with xs[i] > v.
    fn upper(&self, v: f64) -> usize {
        self.xs.partition_point(|&x| x <= v)
    }

    /// Σ |x − m| over sorted indices [lo, hi).
    fn segment(&self, lo: usize, hi: usize, m: f64) -> f64 {
        if lo >= hi {
            return 0.0;
        }
        let mid = self.upper(m).clamp(lo, hi);
        let left = m * (mid - lo) as f64 - (self.prefix[mid] - self.prefix[lo]);
        let right = (self.prefix[hi] - self.prefix[mid]) - m * (hi - mid) as f64;
        left + right
    }

    /// Cost of assigning every point to its nearest medoid (sorted medoids).
    fn cost(&self, medoids: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut lo = 0;
        for k in 0..medoids.len() {
            let hi = if k + 1 < medoids.len() {
                self.upper(0.5 * (medoids[k] + medoids[k + 1]))
            } else {
                self.xs.len()
            };
            total += self.segment(lo, hi.max(lo), medoids[k]);
            lo = hi.max(lo);
        }
        total
    }

    /// Cost of the cell of `medoids[i]` given its neighbours.
    fn cell(&self, medoids: &[f64], i: usize) -> f64 {
        let lo = if i == 0 {
            0
        } else {
            self.upper(0.5 * (medoids[i - 1] + medoids[i]))
        };
        let hi = if i + 1 == medoids.len() {
            self.xs.len()
        } else {
            self.upper(0.5 * (medoids[i] + medoids[i + 1]))
        };
        self.segment(lo, hi.max(lo), medoids[i])
    }

    /// Cost change of replacing `medoids[drop]` by `add`. Only the cells
    /// next to the removed and the inserted value change.
    fn swap_delta(&self, medoids: &[f64], drop: usize, add: f64, trial: &[f64]) -> f64 {
        let k = medoids.len();
        let q = medoids.partition_point(|&x| x < add);
        let mut old_idx = [drop.wrapping_sub(1), drop, drop + 1, q.wrapping_sub(1), q];
        old_idx.sort_unstable();
        let mut before = 0.0;
        let mut after = 0.0;
        let mut last = usize::MAX;
        for &i in &old_idx {
            if i >= k || i == last {
                continue;
            }
            last = i;
            before += self.cell(medoids, i);
            if i != drop {
                after += self.cell(trial, trial.partition_point(|&x| x < medoids[i]));
            }
        }
        after += self.cell(trial, trial.partition_point(|&x| x < add));
        after - before
    }

    /// Σ |x − median| over sorted indices [lo, hi), with its lower median.
    fn median_segment(&self, lo: usize, hi: usize) -> (f64, f64) {
        let m = self.xs[(lo + hi - 1) / 2];
        (self.segment(lo, hi, m), m)
    }

    /// Exact 1-D optimum: nearest-medoid cells are contiguous runs of the
    /// sorted points and the best medoid of a run is its median, so a DP over
    /// split points finds the global minimum in O(K·n²).
    fn optimal_medoids(&self, k: usize) -> Vec<f64> {
        let n = self.xs.len();
        let mut dp = vec![f64::INFINITY; n + 1];
        dp[0] = 0.0;
        let mut cut = vec![vec![0usize; n + 1]; k + 1];
        for c in 1..=k {
            let mut next = vec![f64::INFINITY; n + 1];
            for j in c..=n {
                for i in c - 1..j {
                    if !dp[i].is_finite() {
                        continue;
                    }
                    let v = dp[i] + self.median_segment(i, j).0;
                    if v < next[j] {
                        next[j] = v;
                        cut[c][j] = i;
                    }
                }
            }
            dp = next;
        }
        let mut medoids = Vec::with_capacity(k);
        let mut j = n;
        for c in (1..=k).rev() {
            let i = cut[c][j];
            medoids.push(self.median_segment(i, j).1);
            j = i;
        }
        medoids.reverse();
        medoids
    }
}

/// Largest K·n² for which the exact refinement runs.
const EXACT_BUDGET: usize = 4_000_000;

fn sorted_with(medoids: &[f64], drop: usize, add: f64) -> Vec<f64> {
    let mut m: Vec<f64> = medoids
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != drop)
        .map(|(_, &v)| v)
        .collect();
    let at = m.partition_point(|&x| x < add);
    m.insert(at, add);
    m
}

/// Nearest medoid for each value; equidistant values go to the lower medoid.
pub fn assign(values: &[f64], medoids: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&v| {
            let mut best = 0;
            for (k, &m) in medoids.iter().enumerate() {
                if (v - m).abs() < (v - medoids[best]).abs() {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Σ|P_i − ∂_i| recomputed directly from an assignment.
pub fn assignment_cost(values: &[f64], medoids: &[f64], assignment: &[usize]) -> f64 {
    values
        .iter()
        .zip(assignment)
        .map(|(&v, &a)| (v - medoids[a]).abs())
        .sum()
}

/// K-Medoids over scalar values: greedy BUILD seeding, then PAM SWAP taking
/// the best improving (medoid, non-medoid) exchange until none improves or
/// `max_iter` swaps were made, then an exact 1-D refinement when K·n² is
/// small enough. Candidates are the distinct input values; the seed only
/// fixes the scan order that breaks exact ties.
pub fn kmedoids(values: &[f64], k: usize, seed: u64, max_iter: usize) -> Result<KMedoids> {
    if k == 0 {
        return Err(domain!("K must be at least 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(domain!("K-Medoids input must be finite"));
    }
    let line = Line::new(values);
    let mut distinct = line.xs.clone();
    distinct.dedup();
    if k > distinct.len() {
        return Err(domain!(
            "K = {k} exceeds the {} distinct values",
            distinct.len()
        ));
    }
    let mut order: Vec<usize> = (0..distinct.len()).collect();
    order.shuffle(&mut rng::rng_for(seed, &[rng::tag::QUANTIZE]));

    // BUILD: add the candidate that lowers the cost most, k times
    let mut medoids: Vec<f64> = Vec::with_capacity(k);
    let mut is_medoid = vec![false; distinct.len()];
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for &c in &order {
            if is_medoid[c] {
                continue;
            }
            let mut trial = medoids.clone();
            let at = trial.partition_point(|&x| x < distinct[c]);
            trial.insert(at, distinct[c]);
            let cost = line.cost(&trial);
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, c));
            }
        }
        let (_, c) = best.expect("k ≤ distinct count");
        is_medoid[c] = true;
        let at = medoids.partition_point(|&x| x < distinct[c]);
        medoids.insert(at, distinct[c]);
    }
    let direct = |m: &[f64]| {
        let a = assign(values, m);
        let c = assignment_cost(values, m, &a);
        (a, c)
    };
    let (mut assignment, mut cost) = direct(&medoids);
    let mut trace = vec![cost];

    // SWAP: candidates ranked by the local cost change, accepted only if the
    // directly summed cost drops too, so the trace is exactly monotone
    for _ in 0..max_iter {
        let tol = 1e-12 * (1.0 + cost.abs());
        let mut best: Option<(f64, usize, usize)> = None;
        for drop in 0..medoids.len() {
            for &c in &order {
                if is_medoid[c] {
                    continue;
                }
                let trial = sorted_with(&medoids, drop, distinct[c]);
                let d = line.swap_delta(&medoids, drop, distinct[c], &trial);
                if d < best.map_or(-tol, |b| b.0) {
                    best = Some((d, drop, c));
                }
            }
        }
        let Some((_, drop, c)) = best else { break };
        let trial = sorted_with(&medoids, drop, distinct[c]);
        let (ta, tc) = direct(&trial);
        if !(tc < cost) {
            break;
        }
        let old = distinct.partition_point(|&x| x < medoids[drop]);
        is_medoid[old] = false;
        is_medoid[c] = true;
        medoids = trial;
        assignment = ta;
        cost = tc;
        trace.push(cost);
    }

    // PAM can stall in a local optimum that needs two simultaneous swaps;
    // when affordable, compare against the exact 1-D solution
    let n = values.len();
    if k.saturating_mul(n).saturating_mul(n) <= EXACT_BUDGET {
        let mut exact = line.optimal_medoids(k);
        exact.dedup();
        // runs sharing a median value leave spare medoids; any extra distinct
        // value keeps the cost the same or lowers it
        for &c in &order {
            if exact.len() == k {
                break;
            }
            if !exact.contains(&distinct[c]) {
                let at = exact.partition_point(|&x| x < distinct[c]);
                exact.insert(at, distinct[c]);
            }
        }
        let (ea, ec) = direct(&exact);
        if ec < cost {
            medoids = exact;
            assignment = ea;
            cost = ec;
            trace.push(cost);
        }
    }
    Ok(KMedoids {
        medoids,
        assignment,
        cost,
        trace,
    })
}
