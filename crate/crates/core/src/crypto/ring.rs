//! Arithmetic in Z_Q[X]/(X^N + 1) with Q = q0·q1 held in residue form.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::rng::SimRng;

/// Two NTT-friendly primes, both ≡ 1 (mod 2^14): q0 < 2^60 carries the
/// message after rescaling, q1 slightly above 2^40 is consumed by it.
pub const Q0: u64 = 1_152_921_504_606_830_593;
pub const Q1: u64 = 1_099_511_922_689;
pub const PRIMES: [u64; 2] = [Q0, Q1];

#[inline]
pub fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

#[inline]
pub fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b;
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline]
pub fn sub_mod(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + p - b
    }
}

pub fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1u64;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, p);
        }
        b = mul_mod(b, b, p);
        e >>= 1;
    }
    r
}

pub fn inv_mod(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

/// Reduce a signed integer into [0, p).
#[inline]
pub fn reduce_i128(x: i128, p: u64) -> u64 {
    let r = x % p as i128;
    if r < 0 {
        (r + p as i128) as u64
    } else {
        r as u64
    }
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

/// Negacyclic NTT tables for one prime.
#[derive(Debug)]
pub struct NttTable {
    pub p: u64,
    psi_rev: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    n_inv: u64,
}

impl NttTable {
    /// `p` must be prime with 2n | p − 1.
    pub fn new(p: u64, n: usize) -> Self {
        let two_n = 2 * n as u64;
        debug_assert_eq!((p - 1) % two_n, 0);
        // any x^((p−1)/2n) with (·)^n = −1 has order exactly 2n
        let mut psi = 0;
        for x in 2u64.. {
            let c = pow_mod(x, (p - 1) / two_n, p);
            if pow_mod(c, n as u64, p) == p - 1 {
                psi = c;
                break;
            }
        }
        let psi_inv = inv_mod(psi, p);
        let bits = n.trailing_zeros();
        let mut psi_rev = vec![0; n];
        let mut psi_inv_rev = vec![0; n];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = mul_mod(pw, psi, p);
            pw_inv = mul_mod(pw_inv, psi_inv, p);
        }
        Self {
            p,
            psi_rev,
            psi_inv_rev,
            n_inv: inv_mod(n as u64, p),
        }
    }

    pub fn forward(&self, a: &mut [u64]) {
        let n = a.len();
        let p = self.p;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t /= 2;
            for i in 0..m {
                let j1 = 2 * i * t;
                let s = self.psi_rev[m + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mul_mod(a[j + t], s, p);
                    a[j] = add_mod(u, v, p);
                    a[j + t] = sub_mod(u, v, p);
                }
            }
            m *= 2;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        let n = a.len();
        let p = self.p;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m / 2;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = add_mod(u, v, p);
                    a[j + t] = mul_mod(sub_mod(u, v, p), s, p);
                }
                j1 += 2 * t;
            }
            t *= 2;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_mod(*x, self.n_inv, p);
        }
    }
}

/// Ring parameters and precomputed tables for one ring degree.
#[derive(Debug)]
pub struct Ring {
    pub n: usize,
    pub ntt: [NttTable; 2],
    /// q1⁻¹ mod q0, for rescaling.
    q1_inv_mod_q0: u64,
    /// q0⁻¹ mod q1, for CRT reconstruction.
    q0_inv_mod_q1: u64,
}

/// A polynomial in coefficient form, one residue vector per active prime
/// (`limbs.len()` = level + 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnsPoly {
    pub limbs: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub fn level(&self) -> usize {
        self.limbs.len() - 1
    }
}

impl Ring {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ntt: [NttTable::new(Q0, n), NttTable::new(Q1, n)],
            q1_inv_mod_q0: inv_mod(Q1 % Q0, Q0),
            q0_inv_mod_q1: inv_mod(Q0 % Q1, Q1),
        }
    }

    #[cfg(test)]
    pub fn zero(&self, level: usize) -> RnsPoly {
        RnsPoly {
            limbs: vec![vec![0; self.n]; level + 1],
        }
    }

    /// Embed signed integer coefficients at the given level.
    pub fn from_signed(&self, coeffs: &[i128], level: usize) -> RnsPoly {
        RnsPoly {
            limbs: (0..=level)
                .map(|l| coeffs.iter().map(|&c| reduce_i128(c, PRIMES[l])).collect())
                .collect(),
        }
    }

    pub fn uniform(&self, r: &mut SimRng, level: usize) -> RnsPoly {
        RnsPoly {
            limbs: (0..=level)
                .map(|l| (0..self.n).map(|_| r.random_range(0..PRIMES[l])).collect())
                .collect(),
        }
    }

    pub fn ternary(&self, r: &mut SimRng) -> Vec<i128> {
        (0..self.n).map(|_| r.random_range(-1i128..=1)).collect()
    }

    pub fn gaussian(&self, r: &mut SimRng, std: f64) -> Vec<i128> {
        let g = Normal::new(0.0, std).expect("positive noise std");
        (0..self.n)
            .map(|_| crate::math::round(g.sample(r)) as i128)
            .collect()
    }

    pub fn add(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        RnsPoly {
            limbs: a
                .limbs
                .iter()
                .zip(&b.limbs)
                .enumerate()
                .map(|(l, (x, y))| {
                    x.iter()
                        .zip(y)
                        .map(|(&u, &v)| add_mod(u, v, PRIMES[l]))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn neg(&self, a: &RnsPoly) -> RnsPoly {
        RnsPoly {
            limbs: a
                .limbs
                .iter()
                .enumerate()
                .map(|(l, x)| x.iter().map(|&u| sub_mod(0, u, PRIMES[l])).collect())
                .collect(),
        }
    }

    pub fn to_ntt(&self, a: &RnsPoly) -> RnsPoly {
        let mut out = a.clone();
        for (l, limb) in out.limbs.iter_mut().enumerate() {
            self.ntt[l].forward(limb);
        }
        out
    }

    pub fn from_ntt(&self, a: &RnsPoly) -> RnsPoly {
        let mut out = a.clone();
        for (l, limb) in out.limbs.iter_mut().enumerate() {
            self.ntt[l].inverse(limb);
        }
        out
    }

    /// Pointwise product of two NTT-domain polynomials.
    pub fn pointwise(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        RnsPoly {
            limbs: a
                .limbs
                .iter()
                .zip(&b.limbs)
                .enumerate()
                .map(|(l, (x, y))| {
                    x.iter()
                        .zip(y)
                        .map(|(&u, &v)| mul_mod(u, v, PRIMES[l]))
                        .collect()
                })
                .collect(),
        }
    }

    #[cfg(test)]
    pub fn mul(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        self.from_ntt(&self.pointwise(&self.to_ntt(a), &self.to_ntt(b)))
    }

    /// Drop to level 0 by dividing by q1 with rounding.
    pub fn rescale(&self, a: &RnsPoly) -> RnsPoly {
        debug_assert_eq!(a.level(), 1);
        let half = Q1 / 2;
        let limb = a.limbs[0]
            .iter()
            .zip(&a.limbs[1])
            .map(|(&x0, &x1)| {
                // centred residue mod q1, lifted into Z_q0
                let c = if x1 > half {
                    sub_mod(0, (Q1 - x1) % Q0, Q0)
                } else {
                    x1 % Q0
                };
                mul_mod(sub_mod(x0, c, Q0), self.q1_inv_mod_q0, Q0)
            })
            .collect();
        RnsPoly { limbs: vec![limb] }
    }

    /// Residues at level 1 → integer in [0, Q).
    pub fn crt(&self, x0: u64, x1: u64) -> u128 {
        let d = sub_mod(x1 % Q1, x0 % Q1, Q1);
        let k = mul_mod(d, self.q0_inv_mod_q1, Q1);
        x0 as u128 + Q0 as u128 * k as u128
    }

    /// Centred integer coefficients.
    pub fn to_signed(&self, a: &RnsPoly) -> Vec<i128> {
        match a.level() {
            0 => a.limbs[0]
                .iter()
                .map(|&x| {
                    if x > Q0 / 2 {
                        x as i128 - Q0 as i128
                    } else {
                        x as i128
                    }
                })
                .collect(),
            _ => {
                let q = Q0 as u128 * Q1 as u128;
                a.limbs[0]
                    .iter()
                    .zip(&a.limbs[1])
                    .map(|(&x0, &x1)| {
                        let v = self.crt(x0, x1);
                        if v > q / 2 {
                            -((q - v) as i128)
                        } else {
                            v as i128
                        }
                    })
                    .collect()
            }
        }
    }

    /// Base-2^w digits of a level-1 polynomial, each as a level-1 polynomial.
    pub fn decompose(&self, a: &RnsPoly, w: u32, count: usize) -> Vec<RnsPoly> {
        let mask = (1u128 << w) - 1;
        let values: Vec<u128> = a.limbs[0]
            .iter()
            .zip(&a.limbs[1])
            .map(|(&x0, &x1)| self.crt(x0, x1))
            .collect();
        (0..count)
            .map(|d| {
                let digits: Vec<u64> = values
                    .iter()
                    .map(|&v| ((v >> (w as usize * d)) & mask) as u64)
                    .collect();
                RnsPoly {
                    limbs: vec![digits.clone(), digits],
                }
            })
            .collect()
    }

    /// Multiply by a public integer constant (taken mod each prime).
    pub fn mul_const(&self, a: &RnsPoly, c: u128) -> RnsPoly {
        RnsPoly {
            limbs: a
                .limbs
                .iter()
                .enumerate()
                .map(|(l, x)| {
                    let cm = (c % PRIMES[l] as u128) as u64;
                    x.iter().map(|&u| mul_mod(u, cm, PRIMES[l])).collect()
                })
                .collect(),
        }
    }
}
