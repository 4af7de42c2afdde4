//! Attack injectors (noise poisoning of data and updates, within-round
//! collusion, confidence-threshold membership inference), the
//! gradient-matching reconstruction probe, and a trust-boundary audit.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::index;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chain::Role;
use crate::crypto::EncVector;
use crate::data::Dataset;
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::math;
use crate::numerics::{
    forward, soft_cross_entropy_and_grad, softmax_row, softmax_rows, LbfgsState, ParamVector,
};
use crate::rng;

/// GML at or below this counts as a leak.
pub const GML_LEAK_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttackKind {
    DataPoisonNoise { sigma: f64 },
    ModelPoisonNoise { sigma: f64 },
    WithinUpdateCollude,
    MembershipInference,
    Reconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub mu: f64,
    pub kinds: BTreeMap<usize, Vec<AttackKind>>,
    pub seed: u64,
}

impl AttackPlan {
    pub fn none() -> Self {
        Self {
            mu: 0.0,
            kinds: BTreeMap::new(),
            seed: 0,
        }
    }

    /// `round(μ·n)` malicious enterprises drawn uniformly, all running `kinds`.
    pub fn sample(n: usize, mu: f64, kinds: &[AttackKind], seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::Plan(alloc::format!("μ = {mu} outside [0, 1]")));
        }
        let count = math::round(mu * n as f64) as usize;
        let mut r = rng::rng_for(seed, &[rng::tag::ATTACK]);
        let mut ids = index::sample(&mut r, n, count).into_vec();
        ids.sort_unstable();
        let plan = Self {
            mu,
            kinds: ids.into_iter().map(|i| (i, kinds.to_vec())).collect(),
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::Plan(alloc::format!(
                "μ = {} outside [0, 1]",
                self.mu
            )));
        }
        for kinds in self.kinds.values() {
            for k in kinds {
                if let AttackKind::DataPoisonNoise { sigma }
                | AttackKind::ModelPoisonNoise { sigma } = k
                {
                    if !(*sigma >= 0.0) || !sigma.is_finite() {
                        return Err(Error::Plan(alloc::format!(
                            "noise σ = {sigma} must be finite and ≥ 0"
                        )));
                    }
                }
            }
        }
        let c = self.colluders().len();
        if c == 1 {
            return Err(Error::Plan(
                "collusion needs at least two enterprises".into(),
            ));
        }
        Ok(())
    }

    pub fn malicious(&self) -> Vec<usize> {
        self.kinds.keys().copied().collect()
    }

    pub fn is_malicious(&self, id: usize) -> bool {
        self.kinds.contains_key(&id)
    }

    pub fn kinds_for(&self, id: usize) -> &[AttackKind] {
        self.kinds.get(&id).map_or(&[], |v| v.as_slice())
    }

    pub fn data_sigma(&self, id: usize) -> Option<f64> {
        self.kinds_for(id).iter().find_map(|k| match k {
            AttackKind::DataPoisonNoise { sigma } => Some(*sigma),
            _ => None,
        })
    }

    pub fn model_sigma(&self, id: usize) -> Option<f64> {
        self.kinds_for(id).iter().find_map(|k| match k {
            AttackKind::ModelPoisonNoise { sigma } => Some(*sigma),
            _ => None,
        })
    }

    pub fn colluders(&self) -> Vec<usize> {
        self.kinds
            .iter()
            .filter(|(_, k)| k.contains(&AttackKind::WithinUpdateCollude))
            .map(|(&i, _)| i)
            .collect()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(domain!("noise σ must be finite and ≥ 0, got {sigma}"));
    }
    Ok(())
}

fn add_noise(values: &mut [f64], sigma: f64, seed: u64) -> Result<()> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(());
    }
    let dist = Normal::new(0.0, sigma).map_err(|_| domain!("bad noise σ {sigma}"))?;
    let mut r = rng::rng(seed);
    values.iter_mut().for_each(|v| *v += dist.sample(&mut r));
    Ok(())
}

/// Features plus N(0, σ²) noise; labels untouched.
pub fn poison_data(shard: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    let mut out = shard.clone();
    add_noise(out.features.as_mut_slice(), sigma, seed)?;
    Ok(out)
}

/// Update plus N(0, σ²) noise per coordinate.
pub fn poison_model(grad: &ParamVector, sigma: f64, seed: u64) -> Result<ParamVector> {
    let mut out = grad.clone();
    add_noise(&mut out.values, sigma, seed)?;
    Ok(out)
}

/// Replace every planned colluder's update with `direction` rescaled to
/// that update's norm. All colluders must have submitted this round.
pub fn collude(
    updates: &[(usize, ParamVector)],
    direction: &ParamVector,
    colluders: &[usize],
) -> Result<Vec<(usize, ParamVector)>> {
    if colluders.len() < 2 {
        return Err(Error::Plan(
            "collusion needs at least two enterprises".into(),
        ));
    }
    for c in colluders {
        if !updates.iter().any(|(id, _)| id == c) {
            return Err(Error::Plan(alloc::format!(
                "colluder {c} was not selected this round"
            )));
        }
    }
    let dn = norm(&direction.values);
    if dn == 0.0 {
        return Err(domain!("collusion direction is zero"));
    }
    updates
        .iter()
        .map(|(id, u)| {
            u.check_compatible(direction)?;
            if colluders.contains(id) {
                let s = norm(&u.values) / dn;
                Ok((
                    *id,
                    direction.with_values(direction.values.iter().map(|v| v * s).collect())?,
                ))
            } else {
                Ok((*id, u.clone()))
            }
        })
        .collect()
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain!("confidence threshold must lie in (0, 1], got {t}"));
    }
    Ok(())
}

/// Member iff the top softmax probability exceeds `t`.
pub fn membership_inference(model: &ParamVector, sample: &[f64], t: f64) -> Result<bool> {
    check_threshold(t)?;
    let x = Matrix::from_vec(1, sample.len(), sample.to_vec())?;
    let logits = forward(model, &x)?.logits().clone();
    let top = softmax_row(logits.row(0)).into_iter().fold(0.0, f64::max);
    Ok(top > t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub tpr: f64,
    pub fpr: f64,
    /// TPR − FPR.
    pub advantage: f64,
}

pub fn membership_advantage(
    model: &ParamVector,
    members: &Matrix,
    nonmembers: &Matrix,
    t: f64,
) -> Result<MembershipReport> {
    if members.rows() == 0 || nonmembers.rows() == 0 {
        return Err(domain!("membership probe needs members and non-members"));
    }
    let rate = |m: &Matrix| -> Result<f64> {
        let mut hits = 0;
        for i in 0..m.rows() {
            hits += membership_inference(model, m.row(i), t)? as usize;
        }
        Ok(hits as f64 / m.rows() as f64)
    };
    let tpr = rate(members)?;
    let fpr = rate(nonmembers)?;
    Ok(MembershipReport {
        tpr,
        fpr,
        advantage: tpr - fpr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmlVerdict {
    DeepLeakage,
    NoLeak,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmlReport {
    /// Best GML reached; `None` when the attack could not run.
    pub gml: Option<f64>,
    pub iterations: usize,
    pub verdict: GmlVerdict,
}

pub fn gml_verdict(gml: f64) -> GmlVerdict {
    if gml <= GML_LEAK_THRESHOLD {
        GmlVerdict::DeepLeakage
    } else {
        GmlVerdict::NoLeak
    }
}

/// What an observer of an upload holds.
#[derive(Debug, Clone, Copy)]
pub enum Observation<'a> {
    Plaintext(&'a ParamVector),
    Ciphertext(&'a EncVector),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmlConfig {
    /// Dummy samples matched at once.
    pub batch: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GmlConfig {
    fn default() -> Self {
        Self {
            batch: 1,
            iterations: 300,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

/// `‖g(x, targets) − g*‖² / ‖g*‖²` where `g` is the mean soft-label
/// cross-entropy gradient of `model` and `targets` holds probability rows.
pub fn gml(model: &ParamVector, target: &ParamVector, x: &Matrix, targets: &Matrix) -> Result<f64> {
    model.check_compatible(target)?;
    let tn = dot(&target.values, &target.values);
    if tn == 0.0 {
        return Err(domain!("target gradient is zero"));
    }
    let (_, g) = soft_cross_entropy_and_grad(model, x, targets)?;
    let d: f64 = g
        .values
        .iter()
        .zip(&target.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(d / tn)
}

/// Label of a single-sample gradient: the only class whose output-bias
/// gradient `p_c − 1` is negative.
pub fn infer_label(target: &ParamVector) -> usize {
    let schema = &target.schema;
    let c = schema.num_classes();
    let end = schema.param_count();
    let bias = &target.values[end - c..];
    (0..c).fold(0, |b, k| if bias[k] < bias[b] { k } else { b })
}

/// Dummy labels: fixed probability rows, or logits optimised jointly.
#[derive(Debug, Clone, PartialEq)]
pub enum DummyLabels {
    Known(Matrix),
    Learned(Matrix),
}

/// Gradient-matching reconstruction from random dummy data. A single
/// sample's label is read off the gradient and held fixed; larger dummy
/// batches learn soft labels jointly. Ciphertext observations are
/// `Blocked` without running.
pub fn reconstruct_gml(
    obs: Observation<'_>,
    model: &ParamVector,
    cfg: &GmlConfig,
) -> Result<GmlReport> {
    let target = match obs {
        Observation::Ciphertext(_) => {
            return Ok(GmlReport {
                gml: None,
                iterations: 0,
                verdict: GmlVerdict::Blocked,
            })
        }
        Observation::Plaintext(t) => t,
    };
    if cfg.batch == 0 {
        return Err(domain!("dummy batch must be ≥ 1"));
    }
    model.check_compatible(target)?;
    let d = model.schema.input_dim();
    let c = model.schema.num_classes();
    let mut r = rng::rng_for(cfg.seed, &[rng::tag::PROBE]);
    let mut draw =
        |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut r)).collect() };
    let x0 = Matrix::from_vec(
        cfg.batch,
        d,
        draw(cfg.batch * d).into_iter().map(|v| 0.1 * v).collect(),
    )?;
    let labels = if cfg.batch == 1 {
        let mut onehot = Matrix::zeros(1, c);
        onehot.set(0, infer_label(target), 1.0);
        DummyLabels::Known(onehot)
    } else {
        DummyLabels::Learned(Matrix::from_vec(cfg.batch, c, draw(cfg.batch * c))?)
    };
    reconstruct_from(target, model, x0, labels, cfg)
}

/// [`reconstruct_gml`] from a given dummy starting point: L-BFGS with
/// Armijo backtracking on central finite-difference gradients of the GML.
pub fn reconstruct_from(
    target: &ParamVector,
    model: &ParamVector,
    x0: Matrix,
    labels: DummyLabels,
    cfg: &GmlConfig,
) -> Result<GmlReport> {
    if cfg.iterations == 0 {
        return Err(domain!("reconstruction needs at least one iteration"));
    }
    let (b, d) = (x0.rows(), x0.cols());
    let (known, learned) = match labels {
        DummyLabels::Known(t) => (Some(t), None),
        DummyLabels::Learned(l) => (None, Some(l)),
    };
    let c = known.as_ref().or(learned.as_ref()).map_or(0, |m| m.cols());
    if known
        .as_ref()
        .or(learned.as_ref())
        .is_some_and(|m| m.rows() != b)
    {
        return Err(Error::Schema(
            "dummy labels and inputs differ in rows".into(),
        ));
    }
    let split = b * d;
    let eval = |z: &[f64]| -> Result<f64> {
        let x = Matrix::from_vec(b, d, z[..split].to_vec())?;
        match &known {
            Some(t) => gml(model, target, &x, t),
            None => gml(
                model,
                target,
                &x,
                &softmax_rows(&Matrix::from_vec(b, c, z[split..].to_vec())?),
            ),
        }
    };
    let mut z: Vec<f64> = x0.into_vec();
    if let Some(l) = learned {
        z.extend(l.into_vec());
    }
    let grad = |z: &mut Vec<f64>| -> Result<Vec<f64>> {
        let mut g = vec![0.0; z.len()];
        for i in 0..z.len() {
            let h = 1e-6 * (1.0 + z[i].abs());
            let keep = z[i];
            z[i] = keep + h;
            let up = eval(z)?;
            z[i] = keep - h;
            let down = eval(z)?;
            z[i] = keep;
            g[i] = (up - down) / (2.0 * h);
        }
        Ok(g)
    };
    let mut f = eval(&z)?;
    let mut best = f;
    let mut g = grad(&mut z)?;
    let mut lbfgs = LbfgsState::new(10)?;
    let mut iterations = 0;
    while iterations < cfg.iterations && best > 0.0 {
        iterations += 1;
        lbfgs.observe(&z, &g);
        let mut dir = lbfgs.direction(&g);
        if dot(&dir, &g) <= 0.0 {
            dir = g.clone();
        }
        let slope = dot(&dir, &g);
        // Armijo backtracking from the quasi-Newton step
        let mut t = if lbfgs.history_len() == 0 {
            cfg.learning_rate
        } else {
            1.0
        };
        let mut moved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a - t * d).collect();
            let ft = eval(&trial)?;
            if ft.is_finite() && ft <= f - 1e-4 * t * slope {
                z = trial;
                f = ft;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        best = best.min(f);
        g = grad(&mut z)?;
    }
    Ok(GmlReport {
        gml: Some(best),
        iterations,
        verdict: gml_verdict(best),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    IndividualGradient,
    IndividualParams,
    Aggregate,
    AuditScalar,
    GlobalModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Plaintext,
    Ciphertext,
}

/// One value crossing the server trust boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: u64,
    /// Enterprise the value came from; required for individual values.
    pub source: Option<usize>,
    pub observer: usize,
    pub observer_role: Role,
    pub kind: ValueKind,
    pub form: Form,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExposureReport {
    pub checked: usize,
    pub violations: Vec<TraceEntry>,
}

impl ExposureReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every plaintext individual gradient or parameter vector seen by a
/// simple or leader miner.
pub fn exposure_audit(trace: &[TraceEntry]) -> Result<ExposureReport> {
    let mut report = ExposureReport::default();
    for (i, e) in trace.iter().enumerate() {
        let individual = matches!(
            e.kind,
            ValueKind::IndividualGradient | ValueKind::IndividualParams
        );
        if individual && e.source.is_none() {
            return Err(Error::Audit(alloc::format!(
                "trace entry {i} is individual but has no source"
            )));
        }
        report.checked += 1;
        let miner = matches!(e.observer_role, Role::SimpleMiner | Role::LeaderMiner);
        if individual && miner && e.form == Form::Plaintext {
            report.violations.push(e.clone());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{registry, select_enterprises};
    use crate::crypto::{keygen, HeParams};
    use crate::data::gen_synthetic;
    use crate::linalg::axpy;
    use crate::numerics::{loss_and_grad, predict, Batch, ModelSchema};

    fn accuracy(p: &ParamVector, b: &Batch) -> f64 {
        let pred = predict(p, &b.features).unwrap();
        100.0 * pred.iter().zip(&b.labels).filter(|(a, b)| a == b).count() as f64 / b.len() as f64
    }

    fn train(b: &Batch, schema: &ModelSchema, steps: usize, lr: f64) -> ParamVector {
        let mut p = ParamVector::zeros(schema);
        for _ in 0..steps {
            let (_, g) = loss_and_grad(&p, b, None).unwrap();
            axpy(-lr, &g.values, &mut p.values);
        }
        p
    }

    #[test]
    fn zero_noise_is_identity_and_noise_is_seeded() {
        let ds = gen_synthetic(2, 3, 10, 2.0, 1).unwrap();
        assert_eq!(poison_data(&ds, 0.0, 5).unwrap(), ds);
        let a = poison_data(&ds, 1.0, 5).unwrap();
        assert_eq!(a, poison_data(&ds, 1.0, 5).unwrap());
        assert_ne!(a.features, ds.features);
        assert_eq!(a.labels, ds.labels);
        assert!(poison_data(&ds, -1.0, 5).is_err());
        let g = ParamVector::init(&ModelSchema::logistic(3, 2).unwrap(), 2);
        assert_eq!(poison_model(&g, 0.0, 1).unwrap(), g);
    }

    #[test]
    fn heavy_data_noise_hurts_accuracy() {
        let ds = gen_synthetic(2, 4, 300, 3.0, 3).unwrap();
        let (tr, te) = ds.train_test_split(0.3, 4).unwrap();
        let schema = ModelSchema::logistic(4, 2).unwrap();
        let clean = accuracy(&train(&tr.batch(), &schema, 200, 0.5), &te.batch());
        let dirty = accuracy(
            &train(
                &poison_data(&tr, 5.0, 9).unwrap().batch(),
                &schema,
                200,
                0.5,
            ),
            &te.batch(),
        );
        assert!(clean - dirty >= 20.0, "clean {clean} vs poisoned {dirty}");
    }

    #[test]
    fn model_noise_destroys_direction() {
        // 63 coordinates: the cosine is about z/√63 for a standard normal z
        let schema = ModelSchema::logistic(20, 3).unwrap();
        let dim = schema.param_count() as f64;
        let mut g = ParamVector::zeros(&schema);
        g.values.iter_mut().for_each(|v| *v = 1.0 / dim.sqrt());
        let mut low = 0;
        for seed in 0..1000 {
            let p = poison_model(&g, 10.0, seed).unwrap();
            let cos = dot(&p.values, &g.values) / norm(&p.values);
            low += (cos < 0.3) as usize;
        }
        assert!(low >= 950, "{low}/1000");
    }

    #[test]
    fn plan_sampling_and_validation() {
        let kinds = [
            AttackKind::DataPoisonNoise { sigma: 1.0 },
            AttackKind::ModelPoisonNoise { sigma: 2.0 },
        ];
        let p = AttackPlan::sample(50, 0.2, &kinds, 3).unwrap();
        assert_eq!(p.malicious().len(), 10);
        let m = p.malicious()[0];
        assert_eq!(p.data_sigma(m), Some(1.0));
        assert_eq!(p.model_sigma(m), Some(2.0));
        assert!(p.kinds_for(50).is_empty());
        assert!(AttackPlan::sample(50, 1.5, &kinds, 3).is_err());
        assert!(AttackPlan::sample(10, 0.1, &[AttackKind::WithinUpdateCollude], 3).is_err());
        assert!(
            AttackPlan::sample(10, 0.2, &[AttackKind::ModelPoisonNoise { sigma: -1.0 }], 3)
                .is_err()
        );
    }

    #[test]
    fn collusion_contract() {
        let schema = ModelSchema::logistic(2, 2).unwrap();
        let u = |s| ParamVector::random(&schema, 1.0, s);
        let updates = vec![(1, u(1)), (4, u(4)), (6, u(6))];
        let dir = u(9);
        let out = collude(&updates, &dir, &[1, 6]).unwrap();
        let unit = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x / norm(v)).collect() };
        let (a, b) = (unit(&out[0].1.values), unit(&out[2].1.values));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!((norm(&out[0].1.values) - norm(&updates[0].1.values)).abs() < 1e-12);
        assert_eq!(out[1], updates[1]);
        assert!(matches!(
            collude(&updates, &dir, &[1, 5]),
            Err(Error::Plan(_))
        ));
        assert!(matches!(collude(&updates, &dir, &[]), Err(Error::Plan(_))));
    }

    #[test]
    fn co_selection_matches_hypergeometric() {
        let (n, k, rounds) = (50usize, 10usize, 500u64);
        let s = registry(n);
        let mut both = 0;
        let mut failures = 0;
        let schema = ModelSchema::logistic(1, 2).unwrap();
        let dir = ParamVector::random(&schema, 1.0, 1);
        for r in 0..rounds {
            let sel = select_enterprises(&s, k, 8, r).unwrap();
            let ok = sel.contains(&3) && sel.contains(&17);
            both += ok as usize;
            let ups: Vec<(usize, ParamVector)> = sel.iter().map(|&i| (i, dir.clone())).collect();
            failures += collude(&ups, &dir, &[3, 17]).is_err() as usize;
        }
        let p = (k * (k - 1)) as f64 / (n * (n - 1)) as f64;
        let mean = rounds as f64 * p;
        let sd = (rounds as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (both as f64 - mean).abs() <= 3.0 * sd,
            "{both} vs {mean} ± {}",
            3.0 * sd
        );
        assert_eq!(failures, rounds as usize - both);
        assert!(failures as f64 / rounds as f64 >= 1.0 - p - 3.0 * sd / rounds as f64);
    }

    #[test]
    fn membership_examples() {
        let schema = ModelSchema::logistic(3, 2).unwrap();
        let flat = ParamVector::zeros(&schema);
        let ds = gen_synthetic(2, 3, 40, 1.0, 5).unwrap();
        let (a, b) = ds.train_test_split(0.5, 6).unwrap();
        let rep = membership_advantage(&flat, &a.features, &b.features, 0.5).unwrap();
        assert!(rep.advantage.abs() <= 0.05);
        let sure = train(&a.batch(), &schema, 100, 1.0);
        assert!(!membership_inference(&sure, a.features.row(0), 1.0).unwrap());
        assert!(membership_inference(&sure, a.features.row(0), 0.0).is_err());
    }

    #[test]
    fn overfit_model_leaks_membership() {
        // 20 training points in 30 dimensions are separable by chance, so
        // 500 epochs memorise them while fresh points stay uncertain
        let ds = gen_synthetic(2, 30, 110, 0.5, 12).unwrap();
        let idx: Vec<usize> = (0..20).collect();
        let rest: Vec<usize> = (20..220).collect();
        let (train_ds, probe) = (ds.subset(&idx), ds.subset(&rest));
        let schema = ModelSchema::logistic(30, 2).unwrap();
        let m = train(&train_ds.batch(), &schema, 500, 1.0);
        let rep = membership_advantage(&m, &train_ds.features, &probe.features, 0.95).unwrap();
        assert!(rep.advantage >= 0.2, "{rep:?}");
    }

    fn single_sample_target(d: usize, seed: u64) -> (ParamVector, ParamVector, Batch) {
        let schema = ModelSchema::logistic(d, 2).unwrap();
        let model = ParamVector::init(&schema, seed);
        let ds = gen_synthetic(2, d, 1, 2.0, seed).unwrap();
        let one = ds.subset(&[0]).batch();
        let (_, g) = loss_and_grad(&model, &one, None).unwrap();
        (model, g, one)
    }

    #[test]
    fn dummy_at_true_data_has_zero_gml() {
        let (model, g, one) = single_sample_target(5, 1);
        let mut onehot = Matrix::zeros(1, 2);
        onehot.set(0, one.labels[0], 1.0);
        assert_eq!(infer_label(&g), one.labels[0]);
        let rep = reconstruct_from(
            &g,
            &model,
            one.features.clone(),
            DummyLabels::Known(onehot.clone()),
            &GmlConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.gml, Some(0.0));
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.verdict, GmlVerdict::DeepLeakage);
        assert!(gml(
            &model,
            &ParamVector::zeros(&model.schema),
            &one.features,
            &onehot
        )
        .is_err());
    }

    #[test]
    fn single_sample_gradient_leaks_within_300_iterations() {
        let mut leaks = 0;
        for seed in 0..40 {
            let (model, g, _) = single_sample_target(if seed % 2 == 0 { 6 } else { 20 }, seed);
            let cfg = GmlConfig {
                seed,
                ..GmlConfig::default()
            };
            let rep = reconstruct_gml(Observation::Plaintext(&g), &model, &cfg).unwrap();
            assert!(rep.iterations <= 300);
            leaks += (rep.verdict == GmlVerdict::DeepLeakage) as usize;
        }
        // samples the model is already confident on give a near-zero
        // gradient; matching then drifts to the g → 0 plateau (GML 1)
        assert!(leaks >= 34, "{leaks}/40 leaked");
    }

    #[test]
    fn ciphertext_is_blocked() {
        let keys = keygen(&HeParams::exact(), 3).unwrap();
        let enc = EncVector::encrypt(&keys.public, &[0.1, 0.2], 4).unwrap();
        let model = ParamVector::zeros(&ModelSchema::logistic(1, 2).unwrap());
        let rep =
            reconstruct_gml(Observation::Ciphertext(&enc), &model, &GmlConfig::default()).unwrap();
        assert_eq!(rep.verdict, GmlVerdict::Blocked);
        assert_eq!(rep.gml, None);
    }

    #[test]
    fn verdict_is_monotone_in_gml() {
        let strength = |v: GmlVerdict| (v == GmlVerdict::DeepLeakage) as u8;
        let grid: Vec<f64> = (0..400).map(|i| i as f64 * 0.001).collect();
        for w in grid.windows(2) {
            assert!(strength(gml_verdict(w[1])) <= strength(gml_verdict(w[0])));
        }
        assert_eq!(gml_verdict(0.15), GmlVerdict::DeepLeakage);
        assert_eq!(gml_verdict(0.150001), GmlVerdict::NoLeak);
    }

    #[test]
    fn audit_examples() {
        let entry = |role, form, kind| TraceEntry {
            round: 0,
            source: Some(2),
            observer: 1,
            observer_role: role,
            kind,
            form,
        };
        let rep = exposure_audit(&[
            entry(
                Role::LeaderMiner,
                Form::Plaintext,
                ValueKind::IndividualGradient,
            ),
            entry(
                Role::LeaderMiner,
                Form::Ciphertext,
                ValueKind::IndividualGradient,
            ),
            entry(Role::Validator, Form::Plaintext, ValueKind::AuditScalar),
            entry(Role::SimpleMiner, Form::Plaintext, ValueKind::GlobalModel),
        ])
        .unwrap();
        assert_eq!(rep.checked, 4);
        assert_eq!(rep.violations.len(), 1);
        let mut bad = entry(
            Role::LeaderMiner,
            Form::Ciphertext,
            ValueKind::IndividualParams,
        );
        bad.source = None;
        assert!(matches!(exposure_audit(&[bad]), Err(Error::Audit(_))));
        assert!(exposure_audit(&[]).unwrap().passed());
    }
}
