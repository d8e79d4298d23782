//! Keyed permutations over b-bit blocks, the chained combining function and
//! the length-framed hash used to key it.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Output length of [`hash_parts`] in bytes.
pub const DIGEST_LEN: usize = 32;

const FEISTEL_ROUNDS: u8 = 4;

pub type DigestBytes = [u8; DIGEST_LEN];

/// SHA-256 over `parts`, each framed by its 4-byte big-endian length.
pub fn hash_parts<P: AsRef<[u8]>>(parts: &[P]) -> DigestBytes {
    let mut h = Sha256::new();
    for part in parts {
        let part = part.as_ref();
        h.update((part.len() as u32).to_be_bytes());
        h.update(part);
    }
    h.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationKind {
    /// `E_k(m) = m ⊕ k`. Only for tests and hand-checkable examples.
    Xor,
    /// Balanced 4-round Feistel network with a SHA-256 round function.
    Feistel,
}

/// Block width and keyed permutation used by the combining function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CombiningConfig {
    pub bits: u32,
    pub permutation: PermutationKind,
}

impl CombiningConfig {
    pub fn xor(bits: u32) -> Result<Self> {
        if bits == 0 {
            return Err(Error::domain("block width must be positive"));
        }
        Ok(CombiningConfig {
            bits,
            permutation: PermutationKind::Xor,
        })
    }

    pub fn feistel(bits: u32) -> Result<Self> {
        if bits < 2 || bits % 2 != 0 {
            return Err(Error::domain("Feistel block width must be even and at least 2"));
        }
        Ok(CombiningConfig {
            bits,
            permutation: PermutationKind::Feistel,
        })
    }

    /// Smallest even Feistel width whose block space covers every modulus.
    pub fn covering<'a>(moduli: impl IntoIterator<Item = &'a BigUint>) -> Result<Self> {
        let max_bits = moduli.into_iter().map(|p| p.bits()).max().unwrap_or(0) as u32;
        if max_bits == 0 {
            return Err(Error::domain("no moduli to cover"));
        }
        Self::feistel(max_bits.max(2).next_multiple_of(2))
    }

    pub fn block_bytes(&self) -> usize {
        (self.bits as usize).div_ceil(8)
    }

    /// `2^bits`, one past the largest block.
    pub fn block_limit(&self) -> BigUint {
        BigUint::one() << self.bits
    }

    pub fn check_block(&self, m: &BigUint) -> Result<()> {
        if m.bits() > self.bits as u64 {
            return Err(Error::domain(format!(
                "block has {} bits, width is {}",
                m.bits(),
                self.bits
            )));
        }
        Ok(())
    }

    fn mask(&self, bits: u32) -> BigUint {
        (BigUint::one() << bits) - 1u32
    }
}

fn xor_key(cfg: &CombiningConfig, k: &[u8]) -> BigUint {
    BigUint::from_bytes_be(k) & cfg.mask(cfg.bits)
}

/// Feistel round function: counter-mode SHA-256 truncated to `half` bits.
fn round_fn(k: &[u8], round: u8, half: u32, input: &BigUint) -> BigUint {
    let half_bytes = (half as usize).div_ceil(8);
    let mut input_bytes = input.to_bytes_be();
    if input.is_zero() {
        input_bytes.clear();
    }
    let mut framed = vec![0u8; half_bytes - input_bytes.len()];
    framed.extend_from_slice(&input_bytes);

    let mut stream = Vec::with_capacity(half_bytes + DIGEST_LEN);
    let mut counter = 0u32;
    while stream.len() < half_bytes {
        stream.extend_from_slice(&hash_parts(&[
            b"feistel-round".as_slice(),
            k,
            &[round],
            &counter.to_be_bytes(),
            &framed,
        ]));
        counter += 1;
    }
    stream.truncate(half_bytes);
    BigUint::from_bytes_be(&stream) & ((BigUint::one() << half) - 1u32)
}

/// `E_k(m)`.
pub fn prp_forward(cfg: &CombiningConfig, k: &[u8], m: &BigUint) -> Result<BigUint> {
    cfg.check_block(m)?;
    Ok(match cfg.permutation {
        PermutationKind::Xor => m ^ xor_key(cfg, k),
        PermutationKind::Feistel => {
            let half = cfg.bits / 2;
            let mask = cfg.mask(half);
            let mut left = m >> half;
            let mut right = m & &mask;
            for round in 0..FEISTEL_ROUNDS {
                let next = left ^ round_fn(k, round, half, &right);
                left = right;
                right = next;
            }
            (left << half) | right
        }
    })
}

/// `E_k^{-1}(m)`.
pub fn prp_inverse(cfg: &CombiningConfig, k: &[u8], m: &BigUint) -> Result<BigUint> {
    cfg.check_block(m)?;
    Ok(match cfg.permutation {
        PermutationKind::Xor => m ^ xor_key(cfg, k),
        PermutationKind::Feistel => {
            let half = cfg.bits / 2;
            let mask = cfg.mask(half);
            let mut left = m >> half;
            let mut right = m & &mask;
            for round in (0..FEISTEL_ROUNDS).rev() {
                let prev = right ^ round_fn(k, round, half, &left);
                right = left;
                left = prev;
            }
            (left << half) | right
        }
    })
}

/// `C_{k,v}(y_1..y_n)`: `z_0 = v`, `z_t = E_k(y_t ⊕ z_{t-1})`, returns `z_n`.
pub fn combine(cfg: &CombiningConfig, k: &[u8], v: &BigUint, ys: &[BigUint]) -> Result<BigUint> {
    cfg.check_block(v)?;
    let mut z = v.clone();
    for y in ys {
        cfg.check_block(y)?;
        z = prp_forward(cfg, k, &(y ^ &z))?;
    }
    Ok(z)
}

/// The unique `y` that closes the ring: `combine(before ++ [y] ++ after) = v`.
pub fn solve_ring_gap(
    cfg: &CombiningConfig,
    k: &[u8],
    v: &BigUint,
    before: &[BigUint],
    after: &[BigUint],
) -> Result<BigUint> {
    let forward = combine(cfg, k, v, before)?;
    let mut backward = v.clone();
    for y in after.iter().rev() {
        cfg.check_block(y)?;
        backward = prp_inverse(cfg, k, &backward)? ^ y;
    }
    Ok(prp_inverse(cfg, k, &backward)? ^ forward)
}
