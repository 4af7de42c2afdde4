//! Canonical-embedding encoder: real slot vectors ↔ integer polynomials.
//!
//! Evaluating m(X) at the odd powers ζ^(2i+1) of ζ = e^(iπ/N) is an N-point
//! DFT of the twisted coefficients m_k·ζ^k. Slot j lives at ζ^(5^j mod 2N)
//! and its conjugate at ζ^(−5^j), which keeps the polynomial real.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
struct C {
    re: f64,
    im: f64,
}

impl C {
    fn mul(self, o: C) -> C {
        C {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
    fn add(self, o: C) -> C {
        C {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
    fn sub(self, o: C) -> C {
        C {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
}

#[derive(Debug)]
pub struct Encoder {
    n: usize,
    /// ζ^k for k in 0..2N
    zeta: Vec<C>,
    /// DFT index of slot j and of its conjugate
    slot_idx: Vec<(usize, usize)>,
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        let two_n = 2 * n;
        let zeta = (0..two_n)
            .map(|k| {
                let t = PI * k as f64 / n as f64;
                C {
                    re: math::cos(t),
                    im: math::sin(t),
                }
            })
            .collect();
        let mut slot_idx = Vec::with_capacity(n / 2);
        let mut t = 1usize;
        for _ in 0..n / 2 {
            slot_idx.push(((t - 1) / 2, (two_n - t - 1) / 2));
            t = t * 5 % two_n;
        }
        Self { n, zeta, slot_idx }
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    /// In-place radix-2 DFT, `sign` = +1 for Σ a_k ω^(ik), −1 for the inverse
    /// direction (unnormalised). ω = ζ².
    fn fft(&self, a: &mut [C], sign: i32) {
        let n = a.len();
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                a.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            // ω_len = ζ^(2N/len)
            let step = 2 * self.n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let mut w = self.zeta[(k * step) % (2 * self.n)];
                    if sign < 0 {
                        w.im = -w.im;
                    }
                    let u = a[start + k];
                    let v = a[start + k + len / 2].mul(w);
                    a[start + k] = u.add(v);
                    a[start + k + len / 2] = u.sub(v);
                }
            }
            len *= 2;
        }
    }

    /// Real slot values → integer coefficients at `scale` (unused slots are 0).
    pub fn encode(&self, values: &[f64], scale: f64) -> Vec<i128> {
        debug_assert!(values.len() <= self.slots());
        let mut e = vec![C { re: 0.0, im: 0.0 }; self.n];
        for (j, &v) in values.iter().enumerate() {
            let (a, b) = self.slot_idx[j];
            e[a] = C { re: v, im: 0.0 };
            e[b] = C { re: v, im: 0.0 };
        }
        self.fft(&mut e, -1);
        let inv_n = 1.0 / self.n as f64;
        (0..self.n)
            .map(|k| {
                let m = e[k].mul(self.zeta[(2 * self.n - k) % (2 * self.n)]);
                math::round(m.re * inv_n * scale) as i128
            })
            .collect()
    }

    /// Integer coefficients at `scale` → the first `len` slot values.
    pub fn decode(&self, coeffs: &[i128], scale: f64, len: usize) -> Vec<f64> {
        let mut a: Vec<C> = coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                C {
                    re: c as f64 / scale,
                    im: 0.0,
                }
                .mul(self.zeta[k])
            })
            .collect();
        self.fft(&mut a, 1);
        self.slot_idx[..len].iter().map(|&(i, _)| a[i].re).collect()
    }

    /// Σ over all slots, read off the constant coefficient.
    pub fn decode_slot_sum(&self, coeffs: &[i128], scale: f64) -> f64 {
        coeffs[0] as f64 / scale * (self.n / 2) as f64
    }
}
