use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{domain, Error, Result};
use crate::linalg::{axpy, dot, sub};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize, beta1: f64, beta2: f64) -> Result<Self> {
        if !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0) {
            return Err(domain!("adam betas must lie in (0, 1)"));
        }
        Ok(Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
        })
    }

    /// Bias-corrected step `-η·m̂/(√v̂+ε)` for gradient `g`, returned as a delta.
    pub fn delta(&mut self, g: &[f64], lr: f64) -> Vec<f64> {
        if self.m.len() != g.len() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
            self.t = 0;
        }
        self.t += 1;
        let c1 = 1.0 - math::powi(self.beta1, self.t as i32);
        let c2 = 1.0 - math::powi(self.beta2, self.t as i32);
        let mut out = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            out.push(-lr * mh / (math::sqrt(vh) + self.eps));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsState {
    pub window: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl LbfgsState {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(domain!("l-bfgs window must be at least 1"));
        }
        Ok(Self {
            window,
            s: VecDeque::new(),
            y: VecDeque::new(),
            prev: None,
        })
    }

    pub fn history_len(&self) -> usize {
        self.s.len()
    }

    /// Record an iterate and its gradient; the pair is kept when its curvature is positive.
    pub fn observe(&mut self, w: &[f64], g: &[f64]) {
        if let Some((pw, pg)) = self.prev.take() {
            let s = sub(w, &pw);
            let y = sub(g, &pg);
            // pairs without positive curvature would break the two-loop update
            if dot(&s, &y) > 1e-12 {
                if self.s.len() == self.window {
                    self.s.pop_front();
                    self.y.pop_front();
                }
                self.s.push_back(s);
                self.y.push_back(y);
            }
        }
        self.prev = Some((w.to_vec(), g.to_vec()));
    }

    /// Two-loop recursion: approximately `H⁻¹·g`.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let k = self.s.len();
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; k];
        let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&self.y[i], &self.s[i])).collect();
        for i in (0..k).rev() {
            alpha[i] = rho[i] * dot(&self.s[i], &q);
            axpy(-alpha[i], &self.y[i], &mut q);
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let beta = rho[i] * dot(&self.y[i], &q);
            axpy(alpha[i] - beta, &self.s[i], &mut q);
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub adam: Option<AdamState>,
    pub lbfgs: Option<LbfgsState>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::check_lr(learning_rate)?;
        Ok(Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            adam: None,
            lbfgs: None,
        })
    }

    pub fn adam(learning_rate: f64, beta1: f64, beta2: f64) -> Result<Self> {
        Self::check_lr(learning_rate)?;
        Ok(Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            adam: Some(AdamState::new(0, beta1, beta2)?),
            lbfgs: None,
        })
    }

    pub fn lbfgs(learning_rate: f64, window: usize) -> Result<Self> {
        Self::check_lr(learning_rate)?;
        Ok(Self {
            kind: OptimizerKind::Lbfgs,
            learning_rate,
            adam: None,
            lbfgs: Some(LbfgsState::new(window)?),
        })
    }

    /// Default state for a kind: Adam uses β1 = β2 = 0.9, L-BFGS a window of 10.
    pub fn for_kind(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        match kind {
            OptimizerKind::Sgd => Self::sgd(learning_rate),
            OptimizerKind::Adam => Self::adam(learning_rate, 0.9, 0.9),
            OptimizerKind::Lbfgs => Self::lbfgs(learning_rate, 10),
        }
    }

    fn check_lr(lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(domain!(
                "learning rate must be positive and finite, got {lr}"
            ));
        }
        Ok(())
    }

    /// One update. `grad_fn` is evaluated once, at `params`.
    pub fn step<F>(&mut self, params: &ParamVector, mut grad_fn: F) -> Result<ParamVector>
    where
        F: FnMut(&ParamVector) -> Result<ParamVector>,
    {
        let g = grad_fn(params)?;
        params.check_compatible(&g)?;
        if !g.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        let lr = self.learning_rate;
        let mut next = params.values.clone();
        match self.kind {
            OptimizerKind::Sgd => axpy(-lr, &g.values, &mut next),
            OptimizerKind::Adam => {
                let st = self.adam.get_or_insert(AdamState::new(0, 0.9, 0.9)?);
                axpy(1.0, &st.delta(&g.values, lr), &mut next);
            }
            OptimizerKind::Lbfgs => {
                let st = self.lbfgs.get_or_insert(LbfgsState::new(10)?);
                st.observe(&params.values, &g.values);
                let d = st.direction(&g.values);
                axpy(-lr, &d, &mut next);
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "optimizer produced non-finite parameters".into(),
            ));
        }
        Ok(ParamVector {
            values: next,
            schema: params.schema.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::ModelSchema;
    use super::*;

    // Single-input layer with the weights pinned at zero: the biases act as a
    // free vector for closed-form quadratics.
    fn vector(values: Vec<f64>) -> ParamVector {
        let s =
            ModelSchema::new(vec![(1, values.len())], super::super::Activation::Identity).unwrap();
        let mut full = vec![0.0; values.len()];
        full.extend(values);
        ParamVector::new(s, full).unwrap()
    }

    fn quad_grad(a: [[f64; 2]; 2], b: [f64; 2]) -> impl Fn(&ParamVector) -> Result<ParamVector> {
        move |p: &ParamVector| {
            let w = &p.values[2..];
            let g = [
                a[0][0] * w[0] + a[0][1] * w[1] - b[0],
                a[1][0] * w[0] + a[1][1] * w[1] - b[1],
            ];
            let mut v = vec![0.0; 2];
            v.extend_from_slice(&g);
            p.with_values(v)
        }
    }

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let p = vector(vec![1.0, -2.0]);
        let mut st = OptimizerState::sgd(0.5).unwrap();
        let out = st.step(&p, |p| Ok(ParamVector::zeros(&p.schema))).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn sgd_on_half_square() {
        let p = vector(vec![1.0]);
        let mut st = OptimizerState::sgd(0.1).unwrap();
        let out = st.step(&p, |p| Ok(p.clone())).unwrap();
        assert!((out.values[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn lbfgs_solves_2d_quadratic() {
        let a = [[3.0, 1.0], [1.0, 2.0]];
        let b = [1.0, -1.0];
        // exact minimiser A⁻¹b
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let star = [
            (a[1][1] * b[0] - a[0][1] * b[1]) / det,
            (a[0][0] * b[1] - a[1][0] * b[0]) / det,
        ];
        let grad = quad_grad(a, b);
        let mut st = OptimizerState::lbfgs(1.0, 5).unwrap();
        let mut p = vector(vec![4.0, -3.0]);
        let mut reached = None;
        for k in 0..50 {
            let g = grad(&p).unwrap();
            if crate::linalg::norm(&g.values) <= 1e-8 {
                reached = Some(k);
                break;
            }
            p = st.step(&p, &grad).unwrap();
        }
        assert!(reached.is_some(), "no convergence in 50 steps");
        assert!((p.values[2] - star[0]).abs() < 1e-7);
        assert!((p.values[3] - star[1]).abs() < 1e-7);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        let p = vector(vec![0.0, 0.0]);
        let mut st = OptimizerState::adam(0.01, 0.9, 0.9).unwrap();
        let g = p.with_values(vec![0.0, 0.0, 3.0, -0.2]).unwrap();
        let out = st.step(&p, |_| Ok(g.clone())).unwrap();
        assert!((out.values[2] + 0.01).abs() < 1e-9);
        assert!((out.values[3] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_surfaces() {
        let p = vector(vec![1.0]);
        let mut st = OptimizerState::sgd(0.1).unwrap();
        let bad = ParamVector {
            values: vec![0.0, f64::NAN],
            schema: p.schema.clone(),
        };
        assert!(matches!(
            st.step(&p, |_| Ok(bad.clone())),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(OptimizerState::sgd(0.0).is_err());
        assert!(OptimizerState::adam(0.1, 1.0, 0.9).is_err());
        assert!(OptimizerState::lbfgs(0.1, 0).is_err());
    }

    #[test]
    fn steps_are_bit_deterministic() {
        let grad = quad_grad([[2.0, 0.5], [0.5, 1.0]], [0.3, 0.1]);
        let run = || {
            let mut st = OptimizerState::lbfgs(0.5, 3).unwrap();
            let mut p = vector(vec![1.0, 1.0]);
            for _ in 0..10 {
                p = st.step(&p, &grad).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }
}
