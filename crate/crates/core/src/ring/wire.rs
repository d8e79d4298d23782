//! Binary encodings of the signature and the server response.
//!
//! ```text
//! σ        = version:u8 | n:u16 | id_1..id_n (u16-prefixed) | v (ceil(b/8) bytes)
//!            | V | R | α_1 β_1 .. α_n β_n
//! response = h (u32-prefixed) | Y | I' (u32-prefixed)
//! ```
//!
//! Integers use the crate's length-prefixed encoding. Version 1 writes them
//! canonically; version 2 left-pads each to the byte width of its modulus so
//! the total length depends only on the ring's parameter sizes.

use crate::codec::{uint_to_fixed_bytes, Reader, Writer};
use crate::error::{Error, Result};
use crate::group::GroupParams;
use crate::trapdoor::Preimage;

use super::auth::{RingDirectory, RingSignature, ServerResponse};
use super::combine::CombiningConfig;

pub const VERSION_CANONICAL: u8 = 1;
pub const VERSION_FIXED_WIDTH: u8 = 2;

impl RingSignature {
    fn write_header(&self, w: &mut Writer, version: u8, cfg: &CombiningConfig) -> Result<()> {
        let n = u16::try_from(self.member_ids.len()).map_err(|_| Error::domain("ring too large"))?;
        if self.pairs.len() != self.member_ids.len() {
            return Err(Error::domain("pair count differs from member count"));
        }
        w.put_u8(version);
        w.put_u16(n);
        for id in &self.member_ids {
            w.put_short_bytes(id.as_bytes())?;
        }
        w.put_raw(&uint_to_fixed_bytes(&self.glue, cfg.block_bytes())?);
        Ok(())
    }

    /// Canonical encoding (version 1).
    pub fn encode(&self, cfg: &CombiningConfig) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        self.write_header(&mut w, VERSION_CANONICAL, cfg)?;
        w.put_uint(&self.blinded_share);
        w.put_uint(&self.commitment);
        for pre in &self.pairs {
            w.put_uint(&pre.alpha);
            w.put_uint(&pre.beta);
        }
        Ok(w.into_bytes())
    }

    /// Fixed-width encoding (version 2): `V`, `R` padded to the server's `p`,
    /// each `α_t`/`β_t` to member `t`'s `p_t`/`q_t`.
    pub fn encode_fixed_width(
        &self,
        cfg: &CombiningConfig,
        ring: &RingDirectory,
        server: &GroupParams,
    ) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        self.write_header(&mut w, VERSION_FIXED_WIDTH, cfg)?;
        w.put_uint_fixed(&self.blinded_share, server.p_bytes())?;
        w.put_uint_fixed(&self.commitment, server.p_bytes())?;
        for (id, pre) in self.member_ids.iter().zip(&self.pairs) {
            let m = ring
                .get(id)
                .ok_or_else(|| Error::domain(format!("unknown member {id:?}")))?;
            w.put_uint_fixed(&pre.alpha, m.public.group.p_bytes())?;
            w.put_uint_fixed(&pre.beta, m.public.group.q_bytes())?;
        }
        Ok(w.into_bytes())
    }

    /// Decodes either version; version 1 must be canonical.
    pub fn decode(bytes: &[u8], cfg: &CombiningConfig) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let version = r.get_u8()?;
        let canonical = match version {
            VERSION_CANONICAL => true,
            VERSION_FIXED_WIDTH => false,
            other => return Err(Error::decode(format!("unknown signature version {other}"))),
        };
        let get_uint = |r: &mut Reader| if canonical { r.get_uint() } else { r.get_uint_padded() };
        let n = r.get_u16()? as usize;
        let mut member_ids = Vec::with_capacity(n);
        for _ in 0..n {
            let raw = r.get_short_bytes()?;
            let id = std::str::from_utf8(raw).map_err(|_| Error::decode("member id is not UTF-8"))?;
            member_ids.push(id.to_owned());
        }
        let glue = num_bigint::BigUint::from_bytes_be(r.get_raw(cfg.block_bytes())?);
        cfg.check_block(&glue).map_err(|_| Error::decode("glue value wider than block"))?;
        let blinded_share = get_uint(&mut r)?;
        let commitment = get_uint(&mut r)?;
        let mut pairs = Vec::with_capacity(n);
        for _ in 0..n {
            let alpha = get_uint(&mut r)?;
            let beta = get_uint(&mut r)?;
            pairs.push(Preimage { alpha, beta });
        }
        r.finish()?;
        Ok(RingSignature {
            member_ids,
            glue,
            blinded_share,
            commitment,
            pairs,
        })
    }
}

impl ServerResponse {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_bytes(&self.digest);
        w.put_uint(&self.server_share);
        w.put_bytes(&self.ack);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let digest = r.get_bytes()?.to_vec();
        let server_share = r.get_uint()?;
        let ack = r.get_bytes()?.to_vec();
        r.finish()?;
        Ok(ServerResponse {
            digest,
            server_share,
            ack,
        })
    }
}
