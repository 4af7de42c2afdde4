//! Versioned binary layout for public keys and ciphertexts.
//!
//! ```text
//! ciphertext: version u8 | 'C' | backend u8 | N u64 | key id u64 | level u64
//!             | scale f64 | len u64 | scope u8 | kind u8 | body
//! public key: version u8 | 'P' | backend u8 | N u64 | scale bits u64
//!             | noise f64 | key id u64 | body
//! body:       exact → f64 list; lattice → polynomials as limb-count u64
//!             followed by length-prefixed u64 limbs
//! ```
//! All integers little-endian.

use alloc::sync::Arc;
use alloc::vec::Vec;

use super::ring::{RnsPoly, PRIMES};
use super::{Backend, Body, Ciphertext, HeContext, HeParams, PublicKey, Scope, ValueKind};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u8 = 1;

fn backend_byte(b: Backend) -> u8 {
    match b {
        Backend::Exact => 0,
        Backend::Lattice => 1,
    }
}

fn read_backend(r: &mut Reader) -> Result<Backend> {
    match r.u8()? {
        0 => Ok(Backend::Exact),
        1 => Ok(Backend::Lattice),
        _ => Err(r.error("unknown backend")),
    }
}

fn write_poly(w: &mut Writer, p: &RnsPoly) {
    w.u64(p.limbs.len() as u64);
    for l in &p.limbs {
        w.u64s(l);
    }
}

fn read_poly(r: &mut Reader, n: usize, max_level: usize) -> Result<RnsPoly> {
    let count = r.u64()? as usize;
    if count == 0 || count > max_level + 1 {
        return Err(r.error("bad limb count"));
    }
    let mut limbs = Vec::with_capacity(count);
    for (l, &p) in PRIMES.iter().enumerate().take(count) {
        let limb = r.u64s()?;
        if limb.len() != n {
            return Err(r.error("limb length differs from ring degree"));
        }
        if limb.iter().any(|&x| x >= p) {
            return Err(r.error(if l == 0 {
                "residue ≥ q0"
            } else {
                "residue ≥ q1"
            }));
        }
        limbs.push(limb);
    }
    Ok(RnsPoly { limbs })
}

fn header(r: &mut Reader, tag: u8) -> Result<()> {
    if r.u8()? != FORMAT_VERSION {
        return Err(Error::Format {
            offset: 0,
            reason: "unsupported format version".into(),
        });
    }
    if r.u8()? != tag {
        return Err(Error::Format {
            offset: 1,
            reason: "wrong object tag".into(),
        });
    }
    Ok(())
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(FORMAT_VERSION)
            .u8(b'C')
            .u8(backend_byte(self.ctx.params.backend))
            .u64(self.ctx.params.ring_degree as u64)
            .u64(self.key_id)
            .u64(self.level as u64)
            .f64(self.scale)
            .u64(self.len as u64)
            .u8(matches!(self.scope, Scope::Audit) as u8)
            .u8(matches!(self.kind, ValueKind::SlotSum) as u8);
        match &self.body {
            Body::Exact(v) => {
                w.f64s(v);
            }
            Body::Lattice(c0, c1) => {
                write_poly(&mut w, c0);
                write_poly(&mut w, c1);
            }
        }
        w.finish()
    }

    /// Parse a ciphertext produced under `ctx`'s parameters.
    pub fn from_bytes(bytes: &[u8], ctx: &Arc<HeContext>) -> Result<Self> {
        let mut r = Reader::new(bytes);
        header(&mut r, b'C')?;
        let backend = read_backend(&mut r)?;
        let n = r.u64()? as usize;
        if backend != ctx.params.backend || n != ctx.params.ring_degree {
            return Err(Error::Compatibility(
                "ciphertext parameters differ from context".into(),
            ));
        }
        let key_id = r.u64()?;
        let level = r.u64()? as usize;
        if level > 1 {
            return Err(r.error("level above 1"));
        }
        let scale = r.f64()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(r.error("non-positive scale"));
        }
        let len = r.u64()? as usize;
        if len > ctx.params.slots() {
            return Err(r.error("encoded length exceeds slot count"));
        }
        let scope = match r.u8()? {
            0 => Scope::Aggregate,
            1 => Scope::Audit,
            _ => return Err(r.error("unknown scope")),
        };
        let kind = match r.u8()? {
            0 => ValueKind::Slots,
            1 => ValueKind::SlotSum,
            _ => return Err(r.error("unknown value kind")),
        };
        let body = match backend {
            Backend::Exact => {
                let v = r.f64s()?;
                let want = if kind == ValueKind::SlotSum { 1 } else { len };
                if v.len() != want {
                    return Err(r.error("exact body length mismatch"));
                }
                Body::Exact(v)
            }
            Backend::Lattice => {
                let c0 = read_poly(&mut r, n, level)?;
                let c1 = read_poly(&mut r, n, level)?;
                if c0.level() != level || c1.level() != level {
                    return Err(r.error("polynomial level differs from header"));
                }
                Body::Lattice(c0, c1)
            }
        };
        r.finish()?;
        Ok(Ciphertext {
            ctx: ctx.clone(),
            key_id,
            body,
            level,
            scale,
            len,
            scope,
            kind,
        })
    }
}

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.ctx.params;
        let mut w = Writer::new();
        w.u8(FORMAT_VERSION)
            .u8(b'P')
            .u8(backend_byte(p.backend))
            .u64(p.ring_degree as u64)
            .u64(p.scale_bits as u64)
            .f64(p.noise_std)
            .u64(self.key_id);
        if let Some((b, a)) = &self.pk {
            write_poly(&mut w, b);
            write_poly(&mut w, a);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        header(&mut r, b'P')?;
        let backend = read_backend(&mut r)?;
        let ring_degree = r.u64()? as usize;
        let scale_bits = r.u64()? as u32;
        let noise_std = r.f64()?;
        let params = HeParams {
            backend,
            ring_degree,
            scale_bits,
            noise_std,
        };
        let ctx = HeContext::new(params)?;
        let key_id = r.u64()?;
        let pk = match backend {
            Backend::Exact => None,
            Backend::Lattice => Some((
                read_poly(&mut r, ring_degree, 1)?,
                read_poly(&mut r, ring_degree, 1)?,
            )),
        };
        r.finish()?;
        Ok(PublicKey { ctx, key_id, pk })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{decrypt, encrypt, keygen};
    use super::*;

    #[test]
    fn ciphertext_bytes_roundtrip() {
        for backend in [Backend::Exact, Backend::Lattice] {
            let k = keygen(&HeParams::new(backend, 1024).unwrap(), 1).unwrap();
            let ct = encrypt(&k.public, &[0.25, -3.0], 4).unwrap();
            let bytes = ct.to_bytes();
            let back = Ciphertext::from_bytes(&bytes, k.public.context()).unwrap();
            assert_eq!(back, ct);
            assert_eq!(
                decrypt(&k.secret, &back).unwrap(),
                decrypt(&k.secret, &ct).unwrap()
            );
            let pk = PublicKey::from_bytes(&k.public.to_bytes()).unwrap();
            assert_eq!(pk, k.public);
        }
    }

    #[test]
    fn corrupt_bytes_are_format_errors() {
        let k = keygen(&HeParams::new(Backend::Lattice, 1024).unwrap(), 1).unwrap();
        let bytes = encrypt(&k.public, &[1.0], 0).unwrap().to_bytes();
        let ctx = k.public.context();
        assert!(matches!(
            Ciphertext::from_bytes(&bytes[..bytes.len() - 3], ctx),
            Err(Error::Format { .. })
        ));
        let mut v = bytes.clone();
        v[0] = 9;
        assert!(matches!(
            Ciphertext::from_bytes(&v, ctx),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(
            Ciphertext::from_bytes(&extra, ctx),
            Err(Error::Format { .. })
        ));
    }
}
