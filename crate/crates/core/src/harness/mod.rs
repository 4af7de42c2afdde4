//! Round orchestration, metrics and convergence diagnostics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::aggregate::Aggregator;
use crate::attacks::AttackKind;
use crate::crypto::Backend;
use crate::data::{Dataset, PartitionMode};
use crate::error::{domain, Error, Result};
use crate::numerics::{predict, Activation, ModelSchema, OptimizerKind, ParamVector};

mod checks;
mod sim;

pub use checks::{
    cluster_gain_check, cluster_gain_data, divergence_check, mixture_check, train_optimum,
    ClusterGainConfig, ClusterGainReport,
};
pub use sim::{run_experiment, Experiment, LocalRecord, RoundDiagnostics, Simulation};

/// Toy model family standing in for one model type τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    Logistic,
    Mlp { hidden: usize },
}

impl ModelKind {
    pub fn schema(self, input: usize, classes: usize) -> Result<ModelSchema> {
        match self {
            ModelKind::Logistic => ModelSchema::logistic(input, classes),
            ModelKind::Mlp { hidden } => {
                ModelSchema::mlp(input, &[hidden], classes, Activation::Relu)
            }
        }
    }

    /// Adam for the MLP, L-BFGS for logistic regression.
    pub fn default_optimizer(self) -> OptimizerKind {
        match self {
            ModelKind::Logistic => OptimizerKind::Lbfgs,
            ModelKind::Mlp { .. } => OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            dim: 10,
            per_class: 2500,
            separation: 3.0,
            test_fraction: 0.2,
        }
    }
}

/// What the malicious share μ of enterprises does. Unset sigmas disable
/// that attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub data_sigma: Option<f64>,
    pub model_sigma: Option<f64>,
    pub collude: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            data_sigma: Some(5.0),
            model_sigma: Some(1.0),
            collude: false,
        }
    }
}

impl AttackConfig {
    pub fn kinds(&self) -> Vec<AttackKind> {
        let mut k = Vec::new();
        if let Some(sigma) = self.data_sigma {
            k.push(AttackKind::DataPoisonNoise { sigma });
        }
        if let Some(sigma) = self.model_sigma {
            k.push(AttackKind::ModelPoisonNoise { sigma });
        }
        if self.collude {
            k.push(AttackKind::WithinUpdateCollude);
        }
        k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoundConfig {
    /// C
    pub enterprises: usize,
    /// R
    pub rounds: usize,
    /// |Δc|
    pub selected: usize,
    /// ε
    pub epochs: usize,
    /// B1
    pub local_batch: usize,
    /// B2, the shadow batch of the distillation step.
    pub server_batch: usize,
    /// η
    pub learning_rate: f64,
    pub alpha: f64,
    pub partition: PartitionMode,
    /// Malicious share.
    pub mu: f64,
    /// WGAN exit threshold.
    pub phi: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub strike_limit: u32,
    /// K, capped by the number of distinct update entries.
    pub medoids: usize,
    pub backend: Backend,
    pub ring_degree: Option<usize>,
    pub aggregator: Aggregator,
    pub seed: u64,
    pub models: Vec<ModelKind>,
    /// Overrides the per-model default.
    pub optimizer: Option<OptimizerKind>,
    pub data: DataConfig,
    pub attack: AttackConfig,
    pub miners: usize,
    /// ⌈C/10⌉ when unset.
    pub validators: Option<usize>,
    pub reward: f64,
    pub penalty: f64,
    /// FedProx proximal weight.
    pub prox_mu: f64,
    /// FedAdam server learning rate.
    pub server_lr: f64,
    pub wgan_budget: usize,
    /// Run a reconstruction attack on one upload per round.
    pub gml_probe: bool,
    /// ℵ, added to the round counter in traces and upload ids.
    pub delay: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            enterprises: 100,
            rounds: 50,
            selected: 20,
            epochs: 30,
            local_batch: 64,
            server_batch: 128,
            learning_rate: 0.01,
            alpha: 0.1,
            partition: PartitionMode::EqualCount,
            mu: 0.2,
            phi: 0.2,
            phi1: -0.7,
            phi2: 0.7,
            strike_limit: 5,
            medoids: 64,
            backend: Backend::Exact,
            ring_degree: None,
            aggregator: Aggregator::FedAnil,
            seed: 0,
            models: alloc::vec![ModelKind::Logistic],
            optimizer: None,
            data: DataConfig::default(),
            attack: AttackConfig::default(),
            miners: 3,
            validators: None,
            reward: 1.0,
            penalty: -1.0,
            prox_mu: 0.01,
            server_lr: 0.01,
            wgan_budget: 50,
            gml_probe: true,
            delay: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.enterprises == 0 {
            return bad("need at least one enterprise".into());
        }
        if self.selected == 0 || self.selected > self.enterprises {
            return bad(format!(
                "|Δc| = {} must be in 1..={}",
                self.selected, self.enterprises
            ));
        }
        if self.epochs == 0 || self.local_batch == 0 || self.server_batch == 0 {
            return bad("epochs and batch sizes must be ≥ 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("η = {} must be positive", self.learning_rate));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("α = {} must be positive", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("μ = {} outside [0, 1]", self.mu));
        }
        if !(self.phi > 0.0) {
            return bad(format!("φ = {} must be positive", self.phi));
        }
        self.gate().validate()?;
        if self.medoids == 0 {
            return bad("K must be ≥ 1".into());
        }
        if self.models.is_empty() {
            return bad("need at least one model type".into());
        }
        if self
            .models
            .iter()
            .any(|m| matches!(m, ModelKind::Mlp { hidden: 0 }))
        {
            return bad("MLP hidden width must be ≥ 1".into());
        }
        let d = &self.data;
        if d.classes < 2 || d.dim == 0 || d.per_class == 0 || !(d.separation >= 0.0) {
            return bad(
                "synthetic data needs ≥ 2 classes, dim ≥ 1, per_class ≥ 1, separation ≥ 0".into(),
            );
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return bad(format!("test fraction {} outside (0, 1)", d.test_fraction));
        }
        for s in [self.attack.data_sigma, self.attack.model_sigma]
            .into_iter()
            .flatten()
        {
            if !(s >= 0.0) || !s.is_finite() {
                return bad(format!("attack σ = {s} must be finite and ≥ 0"));
            }
        }
        if self.miners == 0 {
            return bad("need at least one miner".into());
        }
        if !(self.prox_mu >= 0.0) || !(self.server_lr > 0.0) {
            return bad("proximal weight must be ≥ 0 and the server learning rate positive".into());
        }
        if self.wgan_budget == 0 {
            return bad("WGAN budget must be ≥ 1".into());
        }
        Ok(())
    }

    pub fn gate(&self) -> crate::defense::GateConfig {
        crate::defense::GateConfig {
            phi1: self.phi1,
            phi2: self.phi2,
            strike_limit: self.strike_limit,
        }
    }

    pub fn optimizer_for(&self, kind: ModelKind) -> OptimizerKind {
        self.optimizer.unwrap_or_else(|| kind.default_optimizer())
    }
}

/// One row of the metrics series. Times are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub acc_pct: f64,
    pub comp_client_s: f64,
    pub comp_server_s: f64,
    pub comp_total_s: f64,
    pub clusters: usize,
    pub accepted: usize,
    pub ignored: usize,
    pub discarded: usize,
    pub gml: Option<f64>,
    pub stakes: Vec<f64>,
}

pub const CSV_HEADER: &str = "round,acc_pct,comp_client_s,comp_server_s,comp_total_s,clusters,accepted,ignored,discarded,gml";

impl RoundMetrics {
    /// Shortest round-trip float formatting; an unmeasured GML is empty.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.acc_pct,
            self.comp_client_s,
            self.comp_server_s,
            self.comp_total_s,
            self.clusters,
            self.accepted,
            self.ignored,
            self.discarded,
            self.gml.map(|g| format!("{g}")).unwrap_or_default()
        )
    }
}

/// Seconds from an arbitrary origin. The core has no clock of its own.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Reports 0 s always, so runs are bit-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Percentage of argmax predictions equal to the label; logit ties go to
/// the lowest class id.
pub fn accuracy(model: &ParamVector, validation: &Dataset) -> Result<f64> {
    if validation.is_empty() {
        return Err(domain!("accuracy over an empty validation set"));
    }
    let pred = predict(model, &validation.features)?;
    let hits = pred
        .iter()
        .zip(&validation.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(100.0 * hits as f64 / validation.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::linalg::Matrix;
    use alloc::vec;

    #[test]
    fn accuracy_counts() {
        let schema = ModelSchema::logistic(1, 2).unwrap();
        // logits (x, −x): class 0 for x > 0, class 1 for x < 0
        let m = ParamVector::new(schema, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        let x = Matrix::from_vec(4, 1, vec![1.0, 2.0, -1.0, 3.0]).unwrap();
        let ds = Dataset::new(x.clone(), vec![0, 0, 1, 0], 2, Split::Test).unwrap();
        assert_eq!(accuracy(&m, &ds).unwrap(), 100.0);
        let ds = Dataset::new(x, vec![0, 0, 1, 1], 2, Split::Test).unwrap();
        assert_eq!(accuracy(&m, &ds).unwrap(), 75.0);
    }

    #[test]
    fn uniform_logits_hit_the_lowest_class() {
        let schema = ModelSchema::logistic(3, 4).unwrap();
        let m = ParamVector::zeros(&schema);
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let x = Matrix::from_vec(40, 3, (0..120).map(|i| i as f64 * 0.1).collect()).unwrap();
        let ds = Dataset::new(x, labels, 4, Split::Test).unwrap();
        assert_eq!(accuracy(&m, &ds).unwrap(), 25.0);
    }

    #[test]
    fn empty_validation_rejected() {
        let m = ParamVector::zeros(&ModelSchema::logistic(2, 2).unwrap());
        let ds = Dataset::new(Matrix::zeros(0, 2), vec![], 2, Split::Test).unwrap();
        assert!(matches!(accuracy(&m, &ds), Err(Error::Domain(_))));
    }

    #[test]
    fn defaults_validate() {
        let cfg = RoundConfig::default();
        cfg.validate().unwrap();
        assert_eq!(
            (
                cfg.enterprises,
                cfg.rounds,
                cfg.epochs,
                cfg.local_batch,
                cfg.server_batch
            ),
            (100, 50, 30, 64, 128)
        );
        assert_eq!(
            (cfg.learning_rate, cfg.alpha, cfg.mu, cfg.phi),
            (0.01, 0.1, 0.2, 0.2)
        );
        assert_eq!((cfg.phi1, cfg.phi2), (-0.7, 0.7));
        let bad = RoundConfig {
            selected: 101,
            ..RoundConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn csv_row_leaves_missing_gml_empty() {
        let m = RoundMetrics {
            round: 3,
            acc_pct: 87.5,
            comp_client_s: 0.0,
            comp_server_s: 0.0,
            comp_total_s: 0.0,
            clusters: 2,
            accepted: 18,
            ignored: 1,
            discarded: 1,
            gml: None,
            stakes: vec![],
        };
        assert_eq!(m.csv_row(), "3,87.5,0,0,0,2,18,1,1,");
        assert_eq!(
            CSV_HEADER.split(',').count(),
            m.csv_row().split(',').count()
        );
    }
}
