use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::{accuracy, Clock, ModelKind, RoundConfig, RoundMetrics};
use crate::aggregate::{
    cluster_models, fedadam_server_update, fedavg, krum, merge_coefficients, rfa_geometric_median,
    weighted_sum, Aggregator, ApConfig, ClusterInput,
};
use crate::attacks::{
    collude, exposure_audit, poison_data, poison_model, reconstruct_gml, AttackPlan,
    ExposureReport, Form, GmlConfig, Observation, TraceEntry, ValueKind,
};
use crate::chain::{
    apply_reward, assign_roles, registry, validator_count, EnterpriseState, Ledger, PayloadKind,
    Role, RoundRoles,
};
use crate::codec::Writer;
use crate::compress::{
    distinct_count, encrypt_update, quantize_gradient, EncryptedUpdate, UpdateIds,
};
use crate::crypto::{keygen, Backend, HeParams, KeyMaterial, PLAINTEXT_BOUND};
use crate::data::{dirichlet_partition, gen_synthetic, Dataset};
use crate::defense::{
    audit_similarity, classify, gate, tally_votes, Decision, Outcome, StrikeBook, Verdict,
};
use crate::error::{Error, Result};
use crate::linalg::{mean, norm, sub};
use crate::numerics::{loss_and_grad, AdamState, ModelSchema, OptimizerState, ParamVector, Prox};
use crate::rng::{self, derive, tag};
use crate::wgan::{
    adversarial_round, class_prior, GeneratorModel, WganConfig, DEFAULT_HIDDEN, DEFAULT_NOISE_DIM,
};

/// One enterprise's local result, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRecord {
    pub enterprise: usize,
    pub tag: u32,
    pub params: ParamVector,
    pub steps: usize,
    /// Largest squared minibatch gradient norm seen during training.
    pub max_grad_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundDiagnostics {
    pub round: u64,
    /// Global model per tag at the start of the round.
    pub start: Vec<ParamVector>,
    pub locals: Vec<LocalRecord>,
}

struct Upload {
    id: usize,
    tag: u32,
    update: ParamVector,
    steps: usize,
}

/// Full simulator state between rounds.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: RoundConfig,
    round: u64,
    test: Dataset,
    shards: Vec<Dataset>,
    kinds: Vec<ModelKind>,
    globals: Vec<ParamVector>,
    /// Last realised global update per tag, the public gate reference.
    references: Vec<Option<Vec<f64>>>,
    keys: Option<KeyMaterial>,
    states: Vec<EnterpriseState>,
    book: StrikeBook,
    ledger: Ledger,
    plan: AttackPlan,
    trace: Vec<TraceEntry>,
    adam: Vec<AdamState>,
    generators: Vec<Option<GeneratorModel>>,
    record: bool,
    diagnostics: Vec<RoundDiagnostics>,
}

impl Simulation {
    /// Synthetic Gaussian-blob data as configured.
    pub fn new(cfg: RoundConfig) -> Result<Self> {
        cfg.validate()?;
        let d = &cfg.data;
        let all = gen_synthetic(
            d.classes,
            d.dim,
            d.per_class,
            d.separation,
            derive(cfg.seed, &[tag::DATA]),
        )?;
        let (train, test) =
            all.train_test_split(d.test_fraction, derive(cfg.seed, &[tag::DATA, 1]))?;
        Self::with_data(cfg, &train, test)
    }

    pub fn with_data(cfg: RoundConfig, train: &Dataset, test: Dataset) -> Result<Self> {
        cfg.validate()?;
        if train.dim() != test.dim() || train.num_classes != test.num_classes {
            return Err(Error::Schema(format!(
                "train is {}-dim/{} classes, test {}-dim/{} classes",
                train.dim(),
                train.num_classes,
                test.dim(),
                test.num_classes
            )));
        }
        let seed = cfg.seed;
        let n = cfg.enterprises;
        let sa = dirichlet_partition(
            train,
            n,
            cfg.alpha,
            cfg.partition,
            derive(seed, &[tag::PARTITION]),
        )?;
        let kinds_attack = cfg.attack.kinds();
        let plan = if cfg.mu > 0.0 && !kinds_attack.is_empty() {
            AttackPlan::sample(n, cfg.mu, &kinds_attack, seed)?
        } else {
            AttackPlan::none()
        };
        let mut shards = Vec::with_capacity(n);
        for (id, idx) in sa.shards.iter().enumerate() {
            let shard = train.subset(idx);
            shards.push(match plan.data_sigma(id) {
                Some(s) if !shard.is_empty() => {
                    poison_data(&shard, s, derive(seed, &[tag::ATTACK, id as u64]))?
                }
                _ => shard,
            });
        }
        let kinds = cfg.models.clone();
        let schemas = kinds
            .iter()
            .map(|k| k.schema(train.dim(), train.num_classes))
            .collect::<Result<Vec<ModelSchema>>>()?;
        let globals: Vec<ParamVector> = schemas
            .iter()
            .enumerate()
            .map(|(t, s)| ParamVector::init(s, derive(seed, &[tag::INIT, t as u64])))
            .collect();
        let adam = schemas
            .iter()
            .map(|s| AdamState::new(s.param_count(), 0.9, 0.9))
            .collect::<Result<Vec<_>>>()?;
        let keys = if cfg.aggregator == Aggregator::FedAnil {
            let params = match (cfg.backend, cfg.ring_degree) {
                (b, Some(nd)) => HeParams::new(b, nd)?,
                (Backend::Exact, None) => HeParams::exact(),
                (Backend::Lattice, None) => HeParams::lattice(),
            };
            Some(keygen(&params, derive(seed, &[tag::KEYS]))?)
        } else {
            None
        };
        let mut genesis = Writer::new();
        genesis
            .u64(seed)
            .u64(n as u64)
            .bytes(cfg.aggregator.name().as_bytes());
        Ok(Self {
            round: 0,
            test,
            shards,
            references: vec![None; kinds.len()],
            generators: vec![None; kinds.len()],
            kinds,
            globals,
            keys,
            states: registry(n),
            book: StrikeBook::new(n),
            ledger: Ledger::new(genesis.finish()),
            plan,
            trace: Vec::new(),
            adam,
            record: false,
            diagnostics: Vec::new(),
            cfg,
        })
    }

    /// Keep every local model for the convergence diagnostics.
    pub fn record_diagnostics(&mut self, on: bool) {
        self.record = on;
    }

    pub fn config(&self) -> &RoundConfig {
        &self.cfg
    }

    /// Rounds completed.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn globals(&self) -> &[ParamVector] {
        &self.globals
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn states(&self) -> &[EnterpriseState] {
        &self.states
    }

    pub fn strike_book(&self) -> &StrikeBook {
        &self.book
    }

    pub fn plan(&self) -> &AttackPlan {
        &self.plan
    }

    pub fn shards(&self) -> &[Dataset] {
        &self.shards
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn diagnostics(&self) -> &[RoundDiagnostics] {
        &self.diagnostics
    }

    pub fn keys(&self) -> Option<&KeyMaterial> {
        self.keys.as_ref()
    }

    pub fn tag_of(&self, id: usize) -> u32 {
        (id % self.kinds.len()) as u32
    }

    pub fn exposure(&self) -> Result<ExposureReport> {
        exposure_audit(&self.trace)
    }

    /// Mean test accuracy over the model types.
    pub fn accuracy(&self) -> Result<f64> {
        let mut s = 0.0;
        for g in &self.globals {
            s += accuracy(g, &self.test)?;
        }
        Ok(s / self.globals.len() as f64)
    }

    /// ε epochs of minibatch steps from `global` on the enterprise's shard.
    pub fn local_train(&self, id: usize, global: &ParamVector, round: u64) -> Result<LocalRecord> {
        let cfg = &self.cfg;
        let t = self.tag_of(id);
        let shard = &self.shards[id];
        let mut rec = LocalRecord {
            enterprise: id,
            tag: t,
            params: global.clone(),
            steps: 0,
            max_grad_sq: 0.0,
        };
        if shard.is_empty() {
            return Ok(rec);
        }
        let mut opt =
            OptimizerState::for_kind(cfg.optimizer_for(self.kinds[t as usize]), cfg.learning_rate)?;
        let prox_mu = if cfg.aggregator == Aggregator::FedProx {
            cfg.prox_mu
        } else {
            0.0
        };
        let full = shard.batch();
        let mut order: Vec<usize> = (0..shard.len()).collect();
        let mut r = rng::rng_for(cfg.seed, &[tag::TRAIN, round, id as u64]);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut r);
            for chunk in order.chunks(cfg.local_batch) {
                let batch = full.select(chunk);
                let mut gsq = 0.0;
                rec.params = opt.step(&rec.params, |p| {
                    let prox = (prox_mu > 0.0).then_some(Prox {
                        mu: prox_mu,
                        anchor: global,
                    });
                    let (_, g) = loss_and_grad(p, &batch, prox)?;
                    gsq = g.values.iter().map(|v| v * v).sum();
                    Ok(g)
                })?;
                rec.max_grad_sq = rec.max_grad_sq.max(gsq);
                rec.steps += 1;
            }
        }
        Ok(rec)
    }

    fn roles(&mut self) -> Result<RoundRoles> {
        let cfg = &self.cfg;
        let active = self.states.iter().filter(|s| !s.removed).count();
        if active == 0 {
            return Err(Error::Protocol("every enterprise is removed".into()));
        }
        let miners = cfg.miners.min(active);
        let selected = cfg.selected.min(active - miners);
        if selected == 0 {
            return Err(Error::Protocol("no active enterprise left to train".into()));
        }
        let validators = cfg
            .validators
            .unwrap_or_else(|| validator_count(cfg.enterprises));
        assign_roles(
            &mut self.states,
            miners,
            selected,
            validators,
            cfg.seed,
            self.round,
        )
    }

    fn note(
        &mut self,
        source: Option<usize>,
        observer: usize,
        role: Role,
        kind: ValueKind,
        form: Form,
    ) {
        self.trace.push(TraceEntry {
            round: self.round + self.cfg.delay,
            source,
            observer,
            observer_role: role,
            kind,
            form,
        });
    }

    /// The six-step round: roles, local training, upload, aggregation,
    /// rewards and blocks.
    pub fn run_round(&mut self, clock: &dyn Clock) -> Result<RoundMetrics> {
        let r = self.round;
        let seed = self.cfg.seed;
        let roles = self.roles()?;
        let leader = roles.leader;
        if r == 0 {
            if let Some(k) = &self.keys {
                let pk = k.public.to_bytes();
                self.ledger
                    .append_block(PayloadKind::Keys, pk, leader, &self.states)?;
            }
        }
        let start = self.globals.clone();

        // local training
        let mut client = 0.0;
        let mut uploads = Vec::with_capacity(roles.selected.len());
        let mut locals = Vec::new();
        for &id in &roles.selected {
            let t0 = clock.seconds();
            let t = self.tag_of(id);
            let global = &self.globals[t as usize];
            let rec = self.local_train(id, global, r)?;
            let mut update = global.with_values(sub(&rec.params.values, &global.values))?;
            if let Some(s) = self.plan.model_sigma(id) {
                update = poison_model(&update, s, derive(seed, &[tag::ATTACK, r, id as u64]))?;
            }
            uploads.push(Upload {
                id,
                tag: t,
                update,
                steps: rec.steps,
            });
            client += clock.seconds() - t0;
            if self.record {
                locals.push(rec);
            }
        }
        self.collude(&mut uploads)?;

        let out = if self.cfg.aggregator == Aggregator::FedAnil {
            self.fedanil(&roles, uploads, clock, client)?
        } else {
            self.baseline(&roles, uploads, clock, client)?
        };

        for (t, (old, new)) in start.iter().zip(&self.globals).enumerate() {
            let step = sub(&new.values, &old.values);
            if norm(&step) > 0.0 {
                self.references[t] = Some(step);
            }
        }
        let mut w = Writer::new();
        for g in &self.globals {
            w.f64s(&g.values);
        }
        self.ledger
            .append_block(PayloadKind::GlobalModel, w.finish(), leader, &self.states)?;
        for &m in &roles.simple_miners {
            self.note(
                None,
                m,
                self.states[m].role,
                ValueKind::GlobalModel,
                Form::Plaintext,
            );
        }
        self.ledger.verify_chain()?;
        if self.record {
            self.diagnostics.push(RoundDiagnostics {
                round: r,
                start,
                locals,
            });
        }

        let metrics = RoundMetrics {
            round: r + 1,
            acc_pct: self.accuracy()?,
            comp_total_s: out.client + out.server,
            comp_client_s: out.client,
            comp_server_s: out.server,
            clusters: out.clusters,
            accepted: out.accepted,
            ignored: out.ignored,
            discarded: out.discarded,
            gml: out.gml,
            stakes: self.states.iter().map(|s| s.stake).collect(),
        };
        self.round += 1;
        Ok(metrics)
    }

    /// Colluders in Δc replace their updates with the negated gate
    /// reference; with fewer than two present nothing happens.
    fn collude(&self, uploads: &mut [Upload]) -> Result<()> {
        let planned = self.plan.colluders();
        let present: Vec<usize> = planned
            .into_iter()
            .filter(|c| uploads.iter().any(|u| u.id == *c))
            .collect();
        if present.len() < 2 {
            return Ok(());
        }
        for t in 0..self.kinds.len() {
            let Some(reference) = &self.references[t] else {
                continue;
            };
            let ids: Vec<usize> = present
                .iter()
                .copied()
                .filter(|&c| self.tag_of(c) == t as u32)
                .collect();
            if ids.len() < 2 {
                continue;
            }
            let pairs: Vec<(usize, ParamVector)> = uploads
                .iter()
                .filter(|u| u.tag == t as u32)
                .map(|u| (u.id, u.update.clone()))
                .collect();
            let dir = self.globals[t].with_values(reference.iter().map(|v| -v).collect())?;
            for (id, v) in collude(&pairs, &dir, &ids)? {
                if let Some(u) = uploads.iter_mut().find(|u| u.id == id) {
                    u.update = v;
                }
            }
        }
        Ok(())
    }

    fn fedanil(
        &mut self,
        roles: &RoundRoles,
        uploads: Vec<Upload>,
        clock: &dyn Clock,
        mut client: f64,
    ) -> Result<StepOut> {
        let r = self.round;
        let seed = self.cfg.seed;
        let keys = self
            .keys
            .clone()
            .ok_or_else(|| Error::Config("fedanil run without keys".into()))?;
        let leader = roles.leader;

        // quantise, encrypt, upload
        let mut enc: Vec<(EncryptedUpdate, usize)> = Vec::with_capacity(uploads.len());
        for u in &uploads {
            let t0 = clock.seconds();
            let clipped = u.update.with_values(
                u.update
                    .values
                    .iter()
                    .map(|v| v.clamp(-PLAINTEXT_BOUND, PLAINTEXT_BOUND))
                    .collect(),
            )?;
            let k = self.cfg.medoids.min(distinct_count(&clipped.values));
            let cu =
                quantize_gradient(&clipped, k, derive(seed, &[tag::QUANTIZE, r, u.id as u64]))?;
            let ids = UpdateIds {
                enterprise: u.id,
                round: r + self.cfg.delay,
                model_tag: u.tag,
            };
            let eu = encrypt_update(
                &keys.public,
                &cu,
                ids,
                derive(seed, &[tag::ENCRYPT, r, u.id as u64]),
            )?;
            client += clock.seconds() - t0;
            enc.push((eu, u.steps));
        }
        for (eu, _) in &enc {
            for &m in &roles.simple_miners {
                self.note(
                    Some(eu.enterprise),
                    m,
                    self.states[m].role,
                    ValueKind::IndividualGradient,
                    Form::Ciphertext,
                );
            }
        }
        let mut w = Writer::new();
        for (eu, _) in &enc {
            w.bytes(&Sha256::digest(eu.to_bytes()));
        }
        self.ledger
            .append_block(PayloadKind::Update, w.finish(), leader, &self.states)?;

        let t_server = clock.seconds();
        // audit gate and vote: every validator reads the same θ, so it is
        // computed once per update
        let audit = keys.audit_key();
        let gate_cfg = self.cfg.gate();
        let mut verdicts: Vec<Verdict> = Vec::new();
        let mut outcomes: Vec<(usize, Outcome)> = Vec::new();
        for (eu, _) in &enc {
            let id = eu.enterprise;
            let theta = match &self.references[eu.model_tag as usize] {
                None => 0.0,
                Some(p) => match audit_similarity(eu, p, &audit, &keys.eval) {
                    Ok(v) => v,
                    Err(Error::Domain(_)) => 0.0,
                    Err(e) => return Err(e),
                },
            };
            for &v in &roles.validators {
                self.note(
                    Some(id),
                    v,
                    Role::Validator,
                    ValueKind::AuditScalar,
                    Form::Plaintext,
                );
            }
            let votes: Vec<Decision> = if roles.validators.is_empty() {
                vec![classify(theta, &gate_cfg)]
            } else {
                roles
                    .validators
                    .iter()
                    .map(|_| classify(theta, &gate_cfg))
                    .collect()
            };
            outcomes.push((id, tally_votes(&votes)?));
            let v = gate(theta, &gate_cfg, &mut self.book, id)?;
            self.states[id].strikes = self.book.strikes(id)?;
            if v.decision == Decision::Discard {
                self.states[id].removed = true;
            }
            verdicts.push(v);
        }
        let count = |d| verdicts.iter().filter(|v| v.decision == d).count();
        let (accepted, ignored, discarded) = (
            count(Decision::Accept),
            count(Decision::Ignore),
            count(Decision::Discard),
        );

        apply_reward(
            &mut self.states,
            &outcomes,
            self.cfg.reward,
            self.cfg.penalty,
        )?;
        let mut w = Writer::new();
        w.u64(verdicts.len() as u64);
        for v in &verdicts {
            w.u64(v.enterprise as u64).f64(v.theta).u8(v.decision as u8);
        }
        self.ledger
            .append_block(PayloadKind::Verdicts, w.finish(), leader, &self.states)?;
        let stakes: Vec<f64> = self.states.iter().map(|s| s.stake).collect();
        let mut w = Writer::new();
        w.f64s(&stakes);
        self.ledger
            .append_block(PayloadKind::Rewards, w.finish(), leader, &self.states)?;

        // cluster the accepted updates by θ within each model type
        let inputs: Vec<ClusterInput> = verdicts
            .iter()
            .zip(&enc)
            .filter(|(v, _)| v.decision == Decision::Accept)
            .map(|(v, (eu, _))| ClusterInput {
                enterprise: v.enterprise,
                theta: v.theta,
                tag: eu.model_tag,
            })
            .collect();
        let clusters = if inputs.is_empty() {
            Default::default()
        } else {
            cluster_models(&inputs, &ApConfig::default())?
        };
        let find = |id: usize| {
            &enc.iter()
                .find(|(eu, _)| eu.enterprise == id)
                .expect("accepted id uploaded")
                .0
        };

        for t in 0..self.kinds.len() {
            let these: Vec<_> = clusters.for_tag(t as u32).collect();
            if these.is_empty() {
                continue;
            }
            let coef = merge_coefficients(&these, |i| self.states[i].stake)?;
            let parts: Vec<_> = coef.iter().map(|(id, _)| &find(*id).enc_update).collect();
            let weights: Vec<f64> = coef.iter().map(|(_, c)| *c).collect();
            let merged = weighted_sum(&parts, &weights)?.decrypt(&keys.secret)?;
            self.note(
                None,
                leader,
                Role::LeaderMiner,
                ValueKind::Aggregate,
                Form::Plaintext,
            );
            let global = self.globals[t].clone();
            let candidate = global.with_values(
                global
                    .values
                    .iter()
                    .zip(&merged)
                    .map(|(g, d)| g + d)
                    .collect(),
            )?;

            // members for distillation: per-cluster means over ≥ 2 updates;
            // a singleton's mean is an individual update and stays encrypted
            let mut members = Vec::new();
            for c in these.iter().filter(|c| c.members.len() >= 2) {
                let cts: Vec<_> = c.members.iter().map(|&id| &find(id).enc_update).collect();
                let m = fedavg(&cts)?.decrypt(&keys.secret)?;
                self.note(
                    None,
                    leader,
                    Role::LeaderMiner,
                    ValueKind::Aggregate,
                    Form::Plaintext,
                );
                members.push(
                    global
                        .with_values(global.values.iter().zip(&m).map(|(g, d)| g + d).collect())?,
                );
            }
            let mut counts = vec![0usize; self.test.num_classes];
            for c in &these {
                for &id in &c.members {
                    for (a, b) in counts.iter_mut().zip(self.shards[id].class_counts()) {
                        *a += b;
                    }
                }
            }
            // enterprises report their feature range with their class counts
            let bound = these
                .iter()
                .flat_map(|c| c.members.iter())
                .flat_map(|&id| self.shards[id].features.as_slice().iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let next = if members.is_empty() || counts.iter().all(|&c| c == 0) || !(bound > 0.0) {
                candidate
            } else {
                let prior = class_prior(&counts)?;
                let gen = match self.generators[t].take() {
                    Some(g) => GeneratorModel::with_params(g.params, DEFAULT_NOISE_DIM, prior)?,
                    None => GeneratorModel::new(
                        DEFAULT_NOISE_DIM,
                        DEFAULT_HIDDEN,
                        self.test.dim(),
                        prior,
                        derive(seed, &[tag::WGAN, t as u64]),
                    )?,
                }
                .with_bound(bound)?;
                let wcfg = WganConfig {
                    phi: self.cfg.phi,
                    budget: self.cfg.wgan_budget,
                    batch_size: self.cfg.server_batch,
                    ..WganConfig::default()
                };
                let refs: Vec<&ParamVector> = members.iter().collect();
                match adversarial_round(
                    &gen,
                    &candidate,
                    &refs,
                    &wcfg,
                    derive(seed, &[tag::WGAN, r, t as u64]),
                ) {
                    Ok(o) => {
                        self.generators[t] = Some(o.generator);
                        o.global
                    }
                    Err(Error::Numerical(_)) => {
                        self.generators[t] = Some(gen);
                        candidate
                    }
                    Err(e) => return Err(e),
                }
            };
            self.globals[t] = next;
        }
        let server = clock.seconds() - t_server;

        let gml = if self.cfg.gml_probe {
            match enc.first() {
                Some((eu, _)) => {
                    let model = &self.globals[eu.model_tag as usize];
                    let cfg = GmlConfig {
                        seed: derive(seed, &[tag::PROBE, r]),
                        ..GmlConfig::default()
                    };
                    reconstruct_gml(Observation::Ciphertext(&eu.enc_update), model, &cfg)?.gml
                }
                None => None,
            }
        } else {
            None
        };
        Ok(StepOut {
            client,
            server,
            clusters: clusters.len(),
            accepted,
            ignored,
            discarded,
            gml,
        })
    }

    fn baseline(
        &mut self,
        roles: &RoundRoles,
        uploads: Vec<Upload>,
        clock: &dyn Clock,
        client: f64,
    ) -> Result<StepOut> {
        let r = self.round;
        let seed = self.cfg.seed;
        let leader = roles.leader;
        for u in &uploads {
            for &m in &roles.simple_miners {
                self.note(
                    Some(u.id),
                    m,
                    self.states[m].role,
                    ValueKind::IndividualGradient,
                    Form::Plaintext,
                );
            }
        }
        let mut w = Writer::new();
        for u in &uploads {
            let mut b = Writer::new();
            b.u64(u.id as u64).f64s(&u.update.values);
            w.bytes(&Sha256::digest(b.finish()));
        }
        self.ledger
            .append_block(PayloadKind::Update, w.finish(), leader, &self.states)?;

        // the probe runs on the pre-aggregation global, the model the
        // upload's gradients were taken against
        let gml = match (self.cfg.gml_probe, uploads.first()) {
            (true, Some(u)) if u.steps > 0 && norm(&u.update.values) > 0.0 => {
                let s = -1.0 / (self.cfg.learning_rate * u.steps as f64);
                let g = u
                    .update
                    .with_values(u.update.values.iter().map(|v| v * s).collect())?;
                let cfg = GmlConfig {
                    seed: derive(seed, &[tag::PROBE, r]),
                    ..GmlConfig::default()
                };
                reconstruct_gml(
                    Observation::Plaintext(&g),
                    &self.globals[u.tag as usize],
                    &cfg,
                )?
                .gml
            }
            _ => None,
        };

        let t_server = clock.seconds();
        for t in 0..self.kinds.len() {
            let vs: Vec<&[f64]> = uploads
                .iter()
                .filter(|u| u.tag == t as u32)
                .map(|u| &u.update.values[..])
                .collect();
            if vs.is_empty() {
                continue;
            }
            let global = self.globals[t].clone();
            let step = match self.cfg.aggregator {
                Aggregator::FedAvg | Aggregator::FedProx | Aggregator::FedAnil => mean(&vs)?,
                Aggregator::FedAdam => {
                    let m = global.with_values(mean(&vs)?)?;
                    let next =
                        fedadam_server_update(&global, &m, &mut self.adam[t], self.cfg.server_lr)?;
                    sub(&next.values, &global.values)
                }
                Aggregator::Krum => {
                    let m = (crate::math::round(self.cfg.mu * vs.len() as f64) as usize)
                        .min(vs.len().saturating_sub(3));
                    if vs.len() < 3 {
                        mean(&vs)?
                    } else {
                        vs[krum(&vs, m)?].to_vec()
                    }
                }
                Aggregator::Rfa => rfa_geometric_median(&vs, 100, 1e-8)?,
            };
            self.note(
                None,
                leader,
                Role::LeaderMiner,
                ValueKind::Aggregate,
                Form::Plaintext,
            );
            self.globals[t] = global.with_values(
                global
                    .values
                    .iter()
                    .zip(&step)
                    .map(|(g, d)| g + d)
                    .collect(),
            )?;
        }
        let server = clock.seconds() - t_server;
        let n = uploads.len();
        Ok(StepOut {
            client,
            server,
            clusters: 0,
            accepted: n,
            ignored: 0,
            discarded: 0,
            gml,
        })
    }
}

struct StepOut {
    client: f64,
    server: f64,
    clusters: usize,
    accepted: usize,
    ignored: usize,
    discarded: usize,
    gml: Option<f64>,
}

/// Metrics series plus the final simulator state.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub metrics: Vec<RoundMetrics>,
    pub sim: Simulation,
}

pub fn run_experiment(cfg: &RoundConfig, clock: &dyn Clock) -> Result<Experiment> {
    let mut sim = Simulation::new(cfg.clone())?;
    let mut metrics = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        metrics.push(sim.run_round(clock)?);
    }
    Ok(Experiment { metrics, sim })
}
