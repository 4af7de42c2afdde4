//! Cosine-similarity poisoning gate with two thresholds, strike counting
//! and validator vote tallying.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::compress::EncryptedUpdate;
use crate::crypto::{decrypt_scalar, EvalKey, SecretKey};
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, norm};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub phi1: f64,
    pub phi2: f64,
    pub strike_limit: u32,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            phi1: -0.7,
            phi2: 0.7,
            strike_limit: 5,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0 <= self.phi1 && self.phi1 < self.phi2 && self.phi2 <= 1.0) {
            return Err(Error::Config(alloc::format!(
                "need −1 ≤ φ1 < φ2 ≤ 1, got φ1 = {}, φ2 = {}",
                self.phi1,
                self.phi2
            )));
        }
        if self.strike_limit == 0 {
            return Err(Error::Config("strike limit must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Ignore,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub enterprise: usize,
    pub theta: f64,
    pub decision: Decision,
}

/// Per-enterprise strike counters χ and the permanent removal set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrikeBook {
    strikes: Vec<u32>,
    removed: Vec<bool>,
}

impl StrikeBook {
    pub fn new(enterprises: usize) -> Self {
        Self {
            strikes: vec![0; enterprises],
            removed: vec![false; enterprises],
        }
    }

    pub fn len(&self) -> usize {
        self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strikes.is_empty()
    }

    pub fn strikes(&self, id: usize) -> Result<u32> {
        self.strikes.get(id).copied().ok_or(Error::Registry(id))
    }

    pub fn is_removed(&self, id: usize) -> bool {
        self.removed.get(id).copied().unwrap_or(false)
    }

    pub fn removed_ids(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.removed[i]).collect()
    }
}

/// θ = ⟨a,b⟩ / (‖a‖·‖b‖), clamped to [−1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Schema(alloc::format!(
            "lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(domain!("cosine similarity of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// θ between an encrypted update and a public plaintext reference, read
/// from an audit-scoped decryption of ⟨v, p⟩ and ‖v‖².
pub fn audit_similarity(
    eu: &EncryptedUpdate,
    reference: &[f64],
    audit_key: &SecretKey,
    evk: &EvalKey,
) -> Result<f64> {
    let np = norm(reference);
    if np == 0.0 {
        return Err(domain!("cosine similarity of a zero vector"));
    }
    // θ is scale free, so bring the reference inside the plaintext bound
    let peak = reference.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let p: Vec<f64> = reference.iter().map(|x| x / peak).collect();
    let d = decrypt_scalar(audit_key, &eu.enc_update.plain_dot(&p)?)?;
    let ss = decrypt_scalar(audit_key, &eu.enc_update.sum_squares(evk)?)?;
    if !(ss > 0.0) {
        return Err(domain!("cosine similarity of a zero vector"));
    }
    Ok((d / (math::sqrt(ss) * (np / peak))).clamp(-1.0, 1.0))
}

/// A single validator's reading of θ: inside [φ1, φ2] (inclusive) accepts.
pub fn classify(theta: f64, cfg: &GateConfig) -> Decision {
    if cfg.phi1 <= theta && theta <= cfg.phi2 {
        Decision::Accept
    } else {
        Decision::Ignore
    }
}

/// Apply the gate to enterprise `id`, charging a strike on every Ignore and
/// removing the enterprise when its strikes reach the limit.
pub fn gate(theta: f64, cfg: &GateConfig, book: &mut StrikeBook, id: usize) -> Result<Verdict> {
    if !(-1.0..=1.0).contains(&theta) {
        return Err(domain!("θ = {theta} outside [−1, 1]"));
    }
    if id >= book.len() {
        return Err(Error::Registry(id));
    }
    let verdict = |decision| Verdict {
        enterprise: id,
        theta,
        decision,
    };
    if book.removed[id] {
        return Ok(verdict(Decision::Discard));
    }
    if classify(theta, cfg) == Decision::Accept {
        return Ok(verdict(Decision::Accept));
    }
    Ok(verdict(charge(cfg, book, id)))
}

fn charge(cfg: &GateConfig, book: &mut StrikeBook, id: usize) -> Decision {
    book.strikes[id] += 1;
    if book.strikes[id] >= cfg.strike_limit {
        book.removed[id] = true;
        Decision::Discard
    } else {
        Decision::Ignore
    }
}

/// Charge a strike decided elsewhere (a vote outcome) without a θ check.
pub fn strike(cfg: &GateConfig, book: &mut StrikeBook, id: usize) -> Result<Decision> {
    if id >= book.len() {
        return Err(Error::Registry(id));
    }
    if book.removed[id] {
        return Ok(Decision::Discard);
    }
    Ok(charge(cfg, book, id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Benign,
    Poisoned,
}

/// Strict majority of Accept votes is benign; ties and Ignore majorities
/// are poisoned.
pub fn tally_votes(votes: &[Decision]) -> Result<Outcome> {
    if votes.is_empty() {
        return Err(domain!("no votes to tally"));
    }
    let accepts = votes.iter().filter(|&&d| d == Decision::Accept).count();
    Ok(if 2 * accepts > votes.len() {
        Outcome::Benign
    } else {
        Outcome::Poisoned
    })
}
