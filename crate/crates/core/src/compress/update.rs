use alloc::sync::Arc;
use alloc::vec::Vec;

use super::kmedoids::kmedoids;
use crate::codec::{Reader, Writer};
use crate::crypto::{
    Backend, Ciphertext, EncVector, HeContext, PublicKey, SecretKey, PLAINTEXT_BOUND,
};
use crate::error::{domain, Error, Result};
use crate::numerics::{ModelSchema, ParamVector};
use crate::rng;

pub const DEFAULT_K: usize = 64;
pub const UPDATE_FORMAT_VERSION: u8 = 1;

/// A vector quantised to K medoid values Ψ plus one index per entry (Υ).
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedUpdate {
    pub psi: Vec<f64>,
    pub upsilon: Vec<usize>,
    pub len: usize,
    /// Σ|P_i − Ψ[Υ_i]|
    pub cost: f64,
    pub schema: ModelSchema,
}

/// Number of distinct entries, the largest usable K.
pub fn distinct_count(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

pub fn quantize_gradient(grad: &ParamVector, k: usize, seed: u64) -> Result<CompressedUpdate> {
    if grad.is_empty() {
        return Err(domain!("cannot quantise an empty vector"));
    }
    let km = kmedoids(&grad.values, k, seed, 100)?;
    Ok(CompressedUpdate {
        psi: km.medoids,
        upsilon: km.assignment,
        len: grad.len(),
        cost: km.cost,
        schema: grad.schema.clone(),
    })
}

pub fn dequantize(cu: &CompressedUpdate) -> Result<ParamVector> {
    if cu.upsilon.len() != cu.len {
        return Err(Error::Schema(alloc::format!(
            "{} indices for length {}",
            cu.upsilon.len(),
            cu.len
        )));
    }
    let values = cu
        .upsilon
        .iter()
        .map(|&i| {
            cu.psi
                .get(i)
                .copied()
                .ok_or_else(|| domain!("index {i} ≥ K = {}", cu.psi.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    ParamVector::new(cu.schema.clone(), values)
}

/// Index i of K is carried as the real i·8/K, inside the plaintext bound and
/// 8/K apart from its neighbours.
fn encode_index(i: usize, k: usize) -> f64 {
    i as f64 * PLAINTEXT_BOUND / k as f64
}

fn decode_index(v: f64, k: usize) -> Result<usize> {
    let r = crate::math::round(v * k as f64 / PLAINTEXT_BOUND);
    if !(0.0..k as f64).contains(&r) {
        return Err(domain!("decoded index {r} outside [0, {k})"));
    }
    Ok(r as usize)
}

/// Upload form of one enterprise's update. `enc_psi`/`enc_upsilon` are the
/// compressed pair written to the ledger; `enc_update` is the dequantised
/// vector encrypted client-side, the only part the server aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedUpdate {
    pub enc_psi: EncVector,
    pub enc_upsilon: EncVector,
    pub enc_update: EncVector,
    pub enterprise: usize,
    pub round: u64,
    pub model_tag: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateIds {
    pub enterprise: usize,
    pub round: u64,
    pub model_tag: u32,
}

pub fn encrypt_update(
    pk: &PublicKey,
    cu: &CompressedUpdate,
    ids: UpdateIds,
    seed: u64,
) -> Result<EncryptedUpdate> {
    if cu.len == 0 || cu.psi.is_empty() {
        return Err(domain!("cannot encrypt an empty update"));
    }
    let k = cu.psi.len();
    let idx: Vec<f64> = cu.upsilon.iter().map(|&i| encode_index(i, k)).collect();
    let full = dequantize(cu)?;
    Ok(EncryptedUpdate {
        enc_psi: EncVector::encrypt(pk, &cu.psi, rng::derive(seed, &[0]))?,
        enc_upsilon: EncVector::encrypt(pk, &idx, rng::derive(seed, &[1]))?,
        enc_update: EncVector::encrypt(pk, &full.values, rng::derive(seed, &[2]))?,
        enterprise: ids.enterprise,
        round: ids.round,
        model_tag: ids.model_tag,
    })
}

/// Holder-side inverse of `encrypt_update`: Ψ within the HE bound, Υ exact.
pub fn decrypt_update(
    sk: &SecretKey,
    eu: &EncryptedUpdate,
    schema: &ModelSchema,
) -> Result<CompressedUpdate> {
    let psi = eu.enc_psi.decrypt(sk)?;
    let k = psi.len();
    let upsilon = eu
        .enc_upsilon
        .decrypt(sk)?
        .into_iter()
        .map(|v| decode_index(v, k))
        .collect::<Result<Vec<_>>>()?;
    let len = upsilon.len();
    let cu = CompressedUpdate {
        psi,
        upsilon,
        len,
        cost: f64::NAN,
        schema: schema.clone(),
    };
    if len != schema.param_count() {
        return Err(Error::Schema(alloc::format!(
            "{len} indices for a {}-parameter schema",
            schema.param_count()
        )));
    }
    Ok(cu)
}

fn write_vector(w: &mut Writer, v: &EncVector) {
    w.u64(v.len as u64).u64(v.chunks.len() as u64);
    for c in &v.chunks {
        w.bytes(&c.to_bytes());
    }
}

fn read_vector(r: &mut Reader, ctx: &Arc<HeContext>) -> Result<EncVector> {
    let len = r.u64()? as usize;
    let count = r.count(8)?;
    let mut chunks = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.position();
        let body = r.bytes()?;
        let ct = Ciphertext::from_bytes(body, ctx).map_err(|e| match e {
            Error::Format { offset, reason } => Error::Format {
                offset: at + 8 + offset,
                reason,
            },
            other => other,
        })?;
        chunks.push(ct);
    }
    if chunks.iter().map(Ciphertext::len).sum::<usize>() != len {
        return Err(r.error("chunk lengths do not add up"));
    }
    Ok(EncVector { chunks, len })
}

impl EncryptedUpdate {
    /// ```text
    /// version u8 | 'U' | enterprise u64 | round u64 | tag u64
    /// | 3 × (len u64 | chunk count u64 | chunk count × length-prefixed ciphertext)
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(UPDATE_FORMAT_VERSION)
            .u8(b'U')
            .u64(self.enterprise as u64)
            .u64(self.round)
            .u64(self.model_tag as u64);
        for v in [&self.enc_psi, &self.enc_upsilon, &self.enc_update] {
            write_vector(&mut w, v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], ctx: &Arc<HeContext>) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.u8()? != UPDATE_FORMAT_VERSION {
            return Err(Error::Format {
                offset: 0,
                reason: "unsupported update format version".into(),
            });
        }
        if r.u8()? != b'U' {
            return Err(Error::Format {
                offset: 1,
                reason: "not an update payload".into(),
            });
        }
        let enterprise = r.u64()? as usize;
        let round = r.u64()?;
        let model_tag = u32::try_from(r.u64()?).map_err(|_| r.error("model tag out of range"))?;
        let enc_psi = read_vector(&mut r, ctx)?;
        let enc_upsilon = read_vector(&mut r, ctx)?;
        let enc_update = read_vector(&mut r, ctx)?;
        r.finish()?;
        Ok(Self {
            enc_psi,
            enc_upsilon,
            enc_update,
            enterprise,
            round,
            model_tag,
        })
    }

    pub fn backend(&self) -> Option<Backend> {
        self.enc_update.backend()
    }

    /// Bytes of the compressed pair (Ψ, Υ), for bandwidth accounting.
    pub fn compressed_size(&self) -> usize {
        let mut w = Writer::new();
        write_vector(&mut w, &self.enc_psi);
        write_vector(&mut w, &self.enc_upsilon);
        w.finish().len()
    }
}
