//! Approximate homomorphic encryption over real vectors.
//!
//! Two interchangeable backends share one API and one level/scale
//! discipline: `Exact` carries plaintext values under an opaque key token
//! (zero error, used as an oracle), `Lattice` is an RLWE scheme in the CKKS
//! style over Z_{q0·q1}[X]/(X^N+1) with one multiplicative level.
//!
//! Fresh ciphertexts sit at level 1. Every multiplication (`plain_mul`,
//! `plain_dot`, `sum_squares`) rescales down to level 0. Results of
//! `plain_dot` and `sum_squares` are audit-scoped scalars and only an
//! audit key decrypts them; aggregate-scoped vectors need the aggregate key.

mod encoding;
mod ring;
mod serial;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng;
use encoding::Encoder;
use ring::{Ring, RnsPoly};

pub use ring::{Q0, Q1};

/// Largest plaintext magnitude accepted by `encrypt` and `plain_mul`.
pub const PLAINTEXT_BOUND: f64 = 8.0;
const RELIN_BASE_BITS: u32 = 16;
const RELIN_DIGITS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeParams {
    pub backend: Backend,
    pub ring_degree: usize,
    /// Δ = 2^scale_bits
    pub scale_bits: u32,
    pub noise_std: f64,
}

impl HeParams {
    pub fn new(backend: Backend, ring_degree: usize) -> Result<Self> {
        let p = Self {
            backend,
            ring_degree,
            scale_bits: 40,
            noise_std: 3.2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn lattice() -> Self {
        Self::new(Backend::Lattice, 2048).expect("default parameters are valid")
    }

    pub fn exact() -> Self {
        Self::new(Backend::Exact, 2048).expect("default parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.ring_degree, 1024 | 2048 | 4096) {
            return Err(Error::Parameter(alloc::format!(
                "ring degree {} not in {{1024, 2048, 4096}}",
                self.ring_degree
            )));
        }
        if self.scale() >= Q1 as f64 {
            return Err(Error::Parameter(
                "scale must stay below the smallest modulus".into(),
            ));
        }
        if self.scale_bits < 20 {
            return Err(Error::Parameter("scale below 2^20 loses precision".into()));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Parameter("noise std must be positive".into()));
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.ring_degree / 2
    }

    pub fn scale(&self) -> f64 {
        (1u64 << self.scale_bits) as f64
    }

    pub fn moduli(&self) -> [u64; 2] {
        [Q0, Q1]
    }
}

/// Decryption scope. Enforced by the simulator, not cryptographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Aggregate,
    Audit,
}

/// What a ciphertext's slots mean once decrypted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// `len` slot values.
    Slots,
    /// A single scalar: the sum of all slots.
    SlotSum,
}

/// Parameters plus the lattice tables, shared by keys and ciphertexts.
#[derive(Debug)]
pub struct HeContext {
    pub params: HeParams,
    lattice: Option<(Ring, Encoder)>,
}

impl HeContext {
    pub fn new(params: HeParams) -> Result<Arc<Self>> {
        params.validate()?;
        let lattice = match params.backend {
            Backend::Exact => None,
            Backend::Lattice => Some((
                Ring::new(params.ring_degree),
                Encoder::new(params.ring_degree),
            )),
        };
        Ok(Arc::new(Self { params, lattice }))
    }

    fn lattice(&self) -> (&Ring, &Encoder) {
        let (r, e) = self.lattice.as_ref().expect("lattice context");
        (r, e)
    }
}

#[derive(Debug, Clone)]
pub struct PublicKey {
    ctx: Arc<HeContext>,
    key_id: u64,
    /// (b, a) with b = −a·s + e, stored in NTT form.
    pk: Option<(RnsPoly, RnsPoly)>,
}

#[derive(Debug, Clone)]
pub struct SecretKey {
    ctx: Arc<HeContext>,
    key_id: u64,
    scope: Scope,
    /// ternary s in NTT form, level 1
    s: Option<RnsPoly>,
}

#[derive(Debug, Clone)]
pub struct EvalKey {
    ctx: Arc<HeContext>,
    key_id: u64,
    /// (−a_i·s + e_i + 2^(16i)·s², a_i), NTT form
    keys: Option<Vec<(RnsPoly, RnsPoly)>>,
}

#[derive(Debug, Clone)]
pub struct KeyMaterial {
    pub public: PublicKey,
    pub secret: SecretKey,
    pub eval: EvalKey,
}

impl KeyMaterial {
    /// The same secret, scoped for validator audits.
    pub fn audit_key(&self) -> SecretKey {
        SecretKey {
            scope: Scope::Audit,
            ..self.secret.clone()
        }
    }
}

impl PublicKey {
    pub fn params(&self) -> &HeParams {
        &self.ctx.params
    }

    pub fn context(&self) -> &Arc<HeContext> {
        &self.ctx
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }
}

impl SecretKey {
    pub fn scope(&self) -> Scope {
        self.scope
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.ctx.params == other.ctx.params && self.key_id == other.key_id && self.pk == other.pk
    }
}

impl PartialEq for SecretKey {
    fn eq(&self, other: &Self) -> bool {
        self.ctx.params == other.ctx.params
            && self.key_id == other.key_id
            && self.scope == other.scope
            && self.s == other.s
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Exact(Vec<f64>),
    /// (c0, c1) in coefficient form
    Lattice(RnsPoly, RnsPoly),
}

#[derive(Debug, Clone)]
pub struct Ciphertext {
    ctx: Arc<HeContext>,
    key_id: u64,
    body: Body,
    level: usize,
    scale: f64,
    len: usize,
    scope: Scope,
    kind: ValueKind,
}

impl PartialEq for Ciphertext {
    fn eq(&self, o: &Self) -> bool {
        self.ctx.params == o.ctx.params
            && self.key_id == o.key_id
            && self.body == o.body
            && self.level == o.level
            && self.scale.to_bits() == o.scale.to_bits()
            && self.len == o.len
            && self.scope == o.scope
            && self.kind == o.kind
    }
}

impl Ciphertext {
    pub fn backend(&self) -> Backend {
        self.ctx.params.backend
    }
    pub fn level(&self) -> usize {
        self.level
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn scope(&self) -> Scope {
        self.scope
    }
    pub fn kind(&self) -> ValueKind {
        self.kind
    }
}

fn key_token(seed: u64) -> u64 {
    rng::derive(seed, &[rng::tag::KEYS, 0])
}

pub fn keygen(params: &HeParams, seed: u64) -> Result<KeyMaterial> {
    let ctx = HeContext::new(*params)?;
    let key_id = key_token(seed);
    let (pk, s, evk) = match params.backend {
        Backend::Exact => (None, None, None),
        Backend::Lattice => {
            let (ring, _) = ctx.lattice();
            let mut r = rng::rng_for(seed, &[rng::tag::KEYS, 1]);
            let s = ring.to_ntt(&ring.from_signed(&ring.ternary(&mut r), 1));
            let a = ring.to_ntt(&ring.uniform(&mut r, 1));
            let e = ring.to_ntt(&ring.from_signed(&ring.gaussian(&mut r, params.noise_std), 1));
            let b = ring.add(&ring.neg(&ring.pointwise(&a, &s)), &e);
            let s2 = ring.pointwise(&s, &s);
            let evk = (0..RELIN_DIGITS)
                .map(|i| {
                    let ai = ring.to_ntt(&ring.uniform(&mut r, 1));
                    let ei =
                        ring.to_ntt(&ring.from_signed(&ring.gaussian(&mut r, params.noise_std), 1));
                    let shifted = ring.mul_const(&s2, 1u128 << (RELIN_BASE_BITS as usize * i));
                    let bi = ring.add(
                        &ring.add(&ring.neg(&ring.pointwise(&ai, &s)), &ei),
                        &shifted,
                    );
                    (bi, ai)
                })
                .collect();
            (Some((b, a)), Some(s), Some(evk))
        }
    };
    Ok(KeyMaterial {
        public: PublicKey {
            ctx: ctx.clone(),
            key_id,
            pk,
        },
        secret: SecretKey {
            ctx: ctx.clone(),
            key_id,
            scope: Scope::Aggregate,
            s,
        },
        eval: EvalKey {
            ctx,
            key_id,
            keys: evk,
        },
    })
}

fn check_plain(v: &[f64], slots: usize) -> Result<()> {
    if v.len() > slots {
        return Err(Error::Capacity {
            len: v.len(),
            slots,
        });
    }
    if let Some(x) = v.iter().find(|x| !(x.abs() <= PLAINTEXT_BOUND)) {
        return Err(domain!("plaintext value {x} outside ±{PLAINTEXT_BOUND}"));
    }
    Ok(())
}

pub fn encrypt(pk: &PublicKey, v: &[f64], seed: u64) -> Result<Ciphertext> {
    let params = pk.ctx.params;
    check_plain(v, params.slots())?;
    if v.is_empty() {
        return Err(domain!("cannot encrypt an empty vector"));
    }
    let body = match &pk.pk {
        None => Body::Exact(v.to_vec()),
        Some((b, a)) => {
            let (ring, enc) = pk.ctx.lattice();
            let mut r = rng::rng_for(seed, &[rng::tag::ENCRYPT]);
            let m = ring.from_signed(&enc.encode(v, params.scale()), 1);
            let u = ring.to_ntt(&ring.from_signed(&ring.ternary(&mut r), 1));
            let e0 = ring.from_signed(&ring.gaussian(&mut r, params.noise_std), 1);
            let e1 = ring.from_signed(&ring.gaussian(&mut r, params.noise_std), 1);
            let c0 = ring.add(&ring.add(&ring.from_ntt(&ring.pointwise(b, &u)), &e0), &m);
            let c1 = ring.add(&ring.from_ntt(&ring.pointwise(a, &u)), &e1);
            Body::Lattice(c0, c1)
        }
    };
    Ok(Ciphertext {
        ctx: pk.ctx.clone(),
        key_id: pk.key_id,
        body,
        level: 1,
        scale: params.scale(),
        len: v.len(),
        scope: Scope::Aggregate,
        kind: ValueKind::Slots,
    })
}

/// Slot values (`Slots`) or a one-element vector (`SlotSum`).
pub fn decrypt(sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<f64>> {
    if sk.scope != ct.scope {
        return Err(Error::Policy(alloc::format!(
            "{:?}-scoped key cannot decrypt a {:?}-scoped ciphertext",
            sk.scope,
            ct.scope
        )));
    }
    if sk.ctx.params.backend != ct.ctx.params.backend
        || sk.ctx.params.ring_degree != ct.ctx.params.ring_degree
    {
        return Err(Error::Compatibility(
            "key and ciphertext parameters differ".into(),
        ));
    }
    match (&ct.body, &sk.s) {
        (Body::Exact(v), None) => {
            if sk.key_id != ct.key_id {
                return Err(Error::Policy(
                    "ciphertext was encrypted under a different key".into(),
                ));
            }
            Ok(v.clone())
        }
        (Body::Lattice(c0, c1), Some(s)) => {
            let (ring, enc) = ct.ctx.lattice();
            let s = RnsPoly {
                limbs: s.limbs[..=ct.level].to_vec(),
            };
            let m = ring.add(c0, &ring.from_ntt(&ring.pointwise(&ring.to_ntt(c1), &s)));
            let coeffs = ring.to_signed(&m);
            Ok(match ct.kind {
                ValueKind::Slots => enc.decode(&coeffs, ct.scale, ct.len),
                ValueKind::SlotSum => vec![enc.decode_slot_sum(&coeffs, ct.scale)],
            })
        }
        _ => Err(Error::Compatibility(
            "key and ciphertext backends differ".into(),
        )),
    }
}

/// Decrypt a scalar (`SlotSum`) ciphertext.
pub fn decrypt_scalar(sk: &SecretKey, ct: &Ciphertext) -> Result<f64> {
    if ct.kind != ValueKind::SlotSum {
        return Err(Error::Compatibility(
            "ciphertext does not hold a scalar".into(),
        ));
    }
    Ok(decrypt(sk, ct)?[0])
}

fn check_pair(a: &Ciphertext, b: &Ciphertext) -> Result<()> {
    let fail = |what: &str| Err(Error::Compatibility(alloc::format!("{what} mismatch")));
    if a.ctx.params != b.ctx.params {
        return fail("parameter");
    }
    if a.key_id != b.key_id {
        return fail("key");
    }
    if a.level != b.level {
        return fail("level");
    }
    if a.scale.to_bits() != b.scale.to_bits() {
        return fail("scale");
    }
    if a.len != b.len {
        return fail("length");
    }
    if a.scope != b.scope {
        return fail("scope");
    }
    if a.kind != b.kind {
        return fail("value kind");
    }
    Ok(())
}

pub fn add(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    check_pair(a, b)?;
    let body = match (&a.body, &b.body) {
        (Body::Exact(x), Body::Exact(y)) => {
            Body::Exact(x.iter().zip(y).map(|(p, q)| p + q).collect())
        }
        (Body::Lattice(a0, a1), Body::Lattice(b0, b1)) => {
            let (ring, _) = a.ctx.lattice();
            Body::Lattice(ring.add(a0, b0), ring.add(a1, b1))
        }
        _ => return Err(Error::Compatibility("backend mismatch".into())),
    };
    Ok(Ciphertext { body, ..a.clone() })
}

/// Σ of a non-empty list.
pub fn add_many(cts: &[Ciphertext]) -> Result<Ciphertext> {
    let (first, rest) = cts.split_first().ok_or_else(|| domain!("nothing to add"))?;
    rest.iter().try_fold(first.clone(), |acc, c| add(&acc, c))
}

fn require_level(ct: &Ciphertext) -> Result<()> {
    if ct.level == 0 {
        return Err(Error::Level(0));
    }
    Ok(())
}

/// Multiply both components by a plaintext polynomial encoded at scale q1,
/// then rescale by q1: the result keeps the input's scale.
fn lattice_plain_mul(ct: &Ciphertext, plain: &[i128]) -> (RnsPoly, RnsPoly) {
    let (ring, _) = ct.ctx.lattice();
    let Body::Lattice(c0, c1) = &ct.body else {
        unreachable!()
    };
    let p = ring.to_ntt(&ring.from_signed(plain, 1));
    let m0 = ring.from_ntt(&ring.pointwise(&ring.to_ntt(c0), &p));
    let m1 = ring.from_ntt(&ring.pointwise(&ring.to_ntt(c1), &p));
    (ring.rescale(&m0), ring.rescale(&m1))
}

pub fn plain_mul_scalar(ct: &Ciphertext, c: f64) -> Result<Ciphertext> {
    require_level(ct)?;
    if !(c.abs() <= PLAINTEXT_BOUND) {
        return Err(domain!("plaintext scalar {c} outside ±{PLAINTEXT_BOUND}"));
    }
    let body = match &ct.body {
        Body::Exact(v) => Body::Exact(v.iter().map(|x| x * c).collect()),
        Body::Lattice(..) => {
            let mut plain = vec![0i128; ct.ctx.params.ring_degree];
            plain[0] = crate::math::round(c * Q1 as f64) as i128;
            let (a, b) = lattice_plain_mul(ct, &plain);
            Body::Lattice(a, b)
        }
    };
    Ok(Ciphertext {
        body,
        level: ct.level - 1,
        ..ct.clone()
    })
}

/// Slotwise product with a plaintext vector of the same length.
pub fn plain_mul(ct: &Ciphertext, p: &[f64]) -> Result<Ciphertext> {
    require_level(ct)?;
    if ct.kind != ValueKind::Slots {
        return Err(Error::Compatibility(
            "slotwise product needs a vector ciphertext".into(),
        ));
    }
    if p.len() != ct.len {
        return Err(Error::Schema(alloc::format!(
            "plaintext length {} vs {}",
            p.len(),
            ct.len
        )));
    }
    check_plain(p, ct.ctx.params.slots())?;
    let body = match &ct.body {
        Body::Exact(v) => Body::Exact(v.iter().zip(p).map(|(x, y)| x * y).collect()),
        Body::Lattice(..) => {
            let (_, enc) = ct.ctx.lattice();
            let (a, b) = lattice_plain_mul(ct, &enc.encode(p, Q1 as f64));
            Body::Lattice(a, b)
        }
    };
    Ok(Ciphertext {
        body,
        level: ct.level - 1,
        ..ct.clone()
    })
}

/// ⟨v, p⟩ as an audit-scoped scalar ciphertext.
pub fn plain_dot(ct: &Ciphertext, p: &[f64]) -> Result<Ciphertext> {
    let prod = plain_mul(ct, p)?;
    let body = match prod.body {
        Body::Exact(v) => Body::Exact(vec![v.iter().sum()]),
        other => other,
    };
    Ok(Ciphertext {
        body,
        len: 1,
        scope: Scope::Audit,
        kind: ValueKind::SlotSum,
        ..prod
    })
}

/// ‖v‖² as an audit-scoped scalar ciphertext (tensor, relinearise, rescale).
pub fn sum_squares(ct: &Ciphertext, evk: &EvalKey) -> Result<Ciphertext> {
    require_level(ct)?;
    if ct.kind != ValueKind::Slots {
        return Err(Error::Compatibility(
            "sum of squares needs a vector ciphertext".into(),
        ));
    }
    if evk.key_id != ct.key_id || evk.ctx.params != ct.ctx.params {
        return Err(Error::Compatibility(
            "evaluation key does not match ciphertext".into(),
        ));
    }
    let body = match (&ct.body, &evk.keys) {
        (Body::Exact(v), None) => Body::Exact(vec![v.iter().map(|x| x * x).sum()]),
        (Body::Lattice(c0, c1), Some(keys)) => {
            let (ring, _) = ct.ctx.lattice();
            let f0 = ring.to_ntt(c0);
            let f1 = ring.to_ntt(c1);
            let d0 = ring.pointwise(&f0, &f0);
            let d1 = ring.mul_const(&ring.pointwise(&f0, &f1), 2);
            let d2 = ring.from_ntt(&ring.pointwise(&f1, &f1));
            let mut r0 = d0;
            let mut r1 = d1;
            for (digit, (k0, k1)) in ring
                .decompose(&d2, RELIN_BASE_BITS, RELIN_DIGITS)
                .iter()
                .zip(keys)
            {
                let dg = ring.to_ntt(digit);
                r0 = ring.add(&r0, &ring.pointwise(&dg, k0));
                r1 = ring.add(&r1, &ring.pointwise(&dg, k1));
            }
            Body::Lattice(
                ring.rescale(&ring.from_ntt(&r0)),
                ring.rescale(&ring.from_ntt(&r1)),
            )
        }
        _ => return Err(Error::Compatibility("backend mismatch".into())),
    };
    Ok(Ciphertext {
        ctx: ct.ctx.clone(),
        key_id: ct.key_id,
        body,
        level: ct.level - 1,
        scale: ct.scale * ct.scale / Q1 as f64,
        len: 1,
        scope: Scope::Audit,
        kind: ValueKind::SlotSum,
    })
}

/// A vector longer than one ciphertext, split into slot-sized chunks in order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncVector {
    pub chunks: Vec<Ciphertext>,
    pub len: usize,
}

impl EncVector {
    pub fn encrypt(pk: &PublicKey, v: &[f64], seed: u64) -> Result<Self> {
        if v.is_empty() {
            return Err(domain!("cannot encrypt an empty vector"));
        }
        let chunks = v
            .chunks(pk.params().slots())
            .enumerate()
            .map(|(i, c)| encrypt(pk, c, rng::derive(seed, &[i as u64])))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            chunks,
            len: v.len(),
        })
    }

    pub fn decrypt(&self, sk: &SecretKey) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len);
        for c in &self.chunks {
            out.extend(decrypt(sk, c)?);
        }
        Ok(out)
    }

    pub fn add(&self, other: &EncVector) -> Result<Self> {
        if self.len != other.len || self.chunks.len() != other.chunks.len() {
            return Err(Error::Compatibility("vector lengths differ".into()));
        }
        let chunks = self
            .chunks
            .iter()
            .zip(&other.chunks)
            .map(|(a, b)| add(a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            chunks,
            len: self.len,
        })
    }

    pub fn sum(vs: &[EncVector]) -> Result<Self> {
        let (first, rest) = vs.split_first().ok_or_else(|| domain!("nothing to add"))?;
        rest.iter().try_fold(first.clone(), |acc, v| acc.add(v))
    }

    pub fn plain_mul_scalar(&self, c: f64) -> Result<Self> {
        let chunks = self
            .chunks
            .iter()
            .map(|ct| plain_mul_scalar(ct, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            chunks,
            len: self.len,
        })
    }

    pub fn plain_dot(&self, p: &[f64]) -> Result<Ciphertext> {
        if p.len() != self.len {
            return Err(Error::Schema(alloc::format!(
                "plaintext length {} vs {}",
                p.len(),
                self.len
            )));
        }
        let mut at = 0;
        let parts = self
            .chunks
            .iter()
            .map(|ct| {
                let part = plain_dot(ct, &p[at..at + ct.len])?;
                at += ct.len;
                Ok(part)
            })
            .collect::<Result<Vec<_>>>()?;
        add_many(&parts)
    }

    pub fn sum_squares(&self, evk: &EvalKey) -> Result<Ciphertext> {
        let parts = self
            .chunks
            .iter()
            .map(|ct| sum_squares(ct, evk))
            .collect::<Result<Vec<_>>>()?;
        add_many(&parts)
    }

    pub fn level(&self) -> usize {
        self.chunks.iter().map(Ciphertext::level).min().unwrap_or(0)
    }

    pub fn backend(&self) -> Option<Backend> {
        self.chunks.first().map(Ciphertext::backend)
    }
}
