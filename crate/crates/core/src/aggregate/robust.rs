use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::linalg::{mean, norm, sq_dist, sub};

/// Krum score of every vector: the sum of its n−m−2 smallest squared
/// distances to the others.
pub fn krum_scores(grads: &[&[f64]], m: usize) -> Result<Vec<f64>> {
    let n = grads.len();
    if n < m + 3 {
        return Err(domain!("krum needs n − m − 2 ≥ 1 (n = {n}, m = {m})"));
    }
    check_lengths(grads)?;
    let keep = n - m - 2;
    Ok((0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| sq_dist(grads[i], grads[j]))
                .collect();
            d.sort_by(f64::total_cmp);
            d[..keep].iter().sum()
        })
        .collect())
}

/// Index of the lowest Krum score; ties go to the lowest index.
pub fn krum(grads: &[&[f64]], m: usize) -> Result<usize> {
    let scores = krum_scores(grads, m)?;
    Ok(scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, &s)| if s < scores[b] { i } else { b }))
}

fn check_lengths(grads: &[&[f64]]) -> Result<()> {
    let d = grads.first().map_or(0, |g| g.len());
    if grads.iter().any(|g| g.len() != d) {
        return Err(Error::Schema("vectors differ in length".into()));
    }
    Ok(())
}

/// Σ‖x − g_i‖, the quantity the geometric median minimises.
pub fn geometric_objective(x: &[f64], grads: &[&[f64]]) -> f64 {
    grads.iter().map(|g| norm(&sub(x, g))).sum()
}

/// Smoothed Weiszfeld iteration from the mean; distances are floored at
/// 1e-10 so a point landing on an input stays finite.
pub fn rfa_geometric_median(grads: &[&[f64]], max_iter: usize, tol: f64) -> Result<Vec<f64>> {
    const EPS: f64 = 1e-10;
    if grads.is_empty() {
        return Err(domain!("geometric median of nothing"));
    }
    check_lengths(grads)?;
    let mut x = mean(grads)?;
    for _ in 0..max_iter {
        let mut num = alloc::vec![0.0; x.len()];
        let mut den = 0.0;
        for g in grads {
            let w = 1.0 / norm(&sub(&x, g)).max(EPS);
            for (n, v) in num.iter_mut().zip(g.iter()) {
                *n += w * v;
            }
            den += w;
        }
        let next: Vec<f64> = num.iter().map(|v| v / den).collect();
        let step = norm(&sub(&next, &x));
        x = next;
        if step <= tol {
            break;
        }
    }
    Ok(x)
}
