use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub damping: f64,
    /// Diagonal of the similarity matrix; the median off-diagonal
    /// similarity when unset.
    pub preference: Option<f64>,
    pub max_iter: usize,
    /// Iterations the exemplar set must stay fixed to count as converged.
    pub window: usize,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            preference: None,
            max_iter: 200,
            window: 15,
        }
    }
}

impl ApConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(Error::Config(alloc::format!(
                "damping {} outside [0.5, 1)",
                self.damping
            )));
        }
        if self.max_iter == 0 || self.window == 0 {
            return Err(Error::Config("AP needs max_iter ≥ 1 and window ≥ 1".into()));
        }
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// s(i,j) = −|x_i − x_j| with the preference on the diagonal.
pub fn scalar_similarity(values: &[f64], preference: Option<f64>) -> Matrix {
    let n = values.len();
    let mut s = Matrix::zeros(n, n);
    let mut off = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = -(values[i] - values[j]).abs();
                s.set(i, j, v);
                off.push(v);
            }
        }
    }
    let p = preference.unwrap_or_else(|| if off.is_empty() { 0.0 } else { median(off) });
    for i in 0..n {
        s.set(i, i, p);
    }
    s
}

/// Exemplar index for every point, by damped responsibility/availability
/// message passing on `s` (diagonal = preferences). Exemplars map to
/// themselves.
pub fn affinity_propagation(s: &Matrix, cfg: &ApConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = s.rows();
    if n == 0 {
        return Err(domain!("affinity propagation needs at least one point"));
    }
    if s.cols() != n {
        return Err(Error::Schema(alloc::format!(
            "similarity matrix {}×{}",
            n,
            s.cols()
        )));
    }
    if !s.is_finite() {
        return Err(domain!("similarities must be finite"));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    if let Some(labels) = degenerate(s) {
        return Ok(labels);
    }

    // fixed-seed jitter (relative 1e-9) breaks the symmetry between two
    // equally good exemplars; at machine-epsilon size such pairs stay tied
    let mut sn = s.clone();
    let mut r = rng::rng(0x4150);
    for v in sn.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut r);
        *v += (1e-9 * *v + 1e-300) * z;
    }

    let lam = cfg.damping;
    let mut resp = Matrix::zeros(n, n);
    let mut avail = Matrix::zeros(n, n);
    let mut last: Vec<usize> = Vec::new();
    let mut stable = 0;
    for _ in 0..cfg.max_iter {
        for i in 0..n {
            let (mut k1, mut m1, mut m2) = (0, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for k in 0..n {
                let v = avail.get(i, k) + sn.get(i, k);
                if v > m1 {
                    m2 = m1;
                    m1 = v;
                    k1 = k;
                } else if v > m2 {
                    m2 = v;
                }
            }
            for k in 0..n {
                let new = sn.get(i, k) - if k == k1 { m2 } else { m1 };
                resp.set(i, k, lam * resp.get(i, k) + (1.0 - lam) * new);
            }
        }
        for k in 0..n {
            let rkk = resp.get(k, k);
            let pos: f64 = (0..n)
                .filter(|&i| i != k)
                .map(|i| resp.get(i, k).max(0.0))
                .sum();
            for i in 0..n {
                let new = if i == k {
                    pos
                } else {
                    (rkk + pos - resp.get(i, k).max(0.0)).min(0.0)
                };
                avail.set(i, k, lam * avail.get(i, k) + (1.0 - lam) * new);
            }
        }
        let ex = choices(&avail, &resp);
        if ex == last {
            stable += 1;
            if stable >= cfg.window {
                break;
            }
        } else {
            stable = 0;
            last = ex;
        }
    }

    // each point picks argmax_k a(i,k) + r(i,k), ties to the lower index;
    // the picked points are the exemplars
    let mut exemplars = choices(&avail, &resp);
    exemplars.sort_unstable();
    exemplars.dedup();
    let mut labels = nearest(s, &exemplars);
    // refine each cluster's exemplar to its most central member
    for e in exemplars.iter_mut() {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == *e).collect();
        *e = members.iter().copied().fold(*e, |best, c| {
            let score = |c: usize| {
                members
                    .iter()
                    .map(|&i| if i == c { 0.0 } else { s.get(i, c) })
                    .sum::<f64>()
            };
            if score(c) > score(best) {
                c
            } else {
                best
            }
        });
    }
    exemplars.sort_unstable();
    exemplars.dedup();
    labels = nearest(s, &exemplars);
    Ok(labels)
}

fn choices(avail: &Matrix, resp: &Matrix) -> Vec<usize> {
    (0..avail.rows())
        .map(|i| {
            (0..avail.cols()).fold(0, |b, k| {
                if avail.get(i, k) + resp.get(i, k) > avail.get(i, b) + resp.get(i, b) {
                    k
                } else {
                    b
                }
            })
        })
        .collect()
}

fn nearest(s: &Matrix, exemplars: &[usize]) -> Vec<usize> {
    (0..s.rows())
        .map(|i| {
            if exemplars.contains(&i) {
                return i;
            }
            exemplars.iter().copied().fold(exemplars[0], |b, k| {
                if s.get(i, k) > s.get(i, b) {
                    k
                } else {
                    b
                }
            })
        })
        .collect()
}

/// All off-diagonal similarities equal and all preferences equal: one
/// cluster unless the preference beats every similarity.
fn degenerate(s: &Matrix) -> Option<Vec<usize>> {
    let n = s.rows();
    let off = s.get(0, 1);
    let pref = s.get(0, 0);
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { pref } else { off };
            if s.get(i, j) != want {
                return None;
            }
        }
    }
    Some(if pref > off {
        (0..n).collect()
    } else {
        vec![0; n]
    })
}
