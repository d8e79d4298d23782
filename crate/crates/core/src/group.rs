//! Modular arithmetic and Schnorr-style prime-order subgroups.
//!
//! Every random choice in this module is driven by a caller-supplied seed so
//! that parameter generation is reproducible.

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::hex_uint;
use crate::error::{Error, Result};

/// Number of Miller-Rabin rounds; each round has error at most 1/4.
pub const MILLER_RABIN_ROUNDS: usize = 64;

const MAX_Q_ATTEMPTS: usize = 4096;
const MAX_GENERATOR_ATTEMPTS: usize = 256;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// A prime `p`, a prime `q | p - 1`, and a generator `g` of the order-`q`
/// subgroup of `Z_p^*`.
///
/// Fields are public so that callers can build (and validate) arbitrary
/// triples; use [`GroupParams::new`] or [`gen_group_params`] to obtain a
/// checked value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupParams {
    #[serde(with = "hex_uint")]
    pub p: BigUint,
    #[serde(with = "hex_uint")]
    pub q: BigUint,
    #[serde(with = "hex_uint")]
    pub g: BigUint,
}

impl GroupParams {
    /// Builds a group, rejecting triples that fail [`is_valid_group`].
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self> {
        let params = GroupParams { p, q, g };
        if !params.is_valid() {
            return Err(Error::domain("invalid group parameters"));
        }
        Ok(params)
    }

    pub fn from_u64(p: u64, q: u64, g: u64) -> Self {
        GroupParams {
            p: p.into(),
            q: q.into(),
            g: g.into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        is_valid_group(self)
    }

    /// `g^e mod p` with the exponent reduced mod `q`.
    pub fn pow_g(&self, e: &BigUint) -> BigUint {
        self.g.modpow(&(e % &self.q), &self.p)
    }

    /// `g^(-e) mod p`, computed as `g^(q - e mod q)`.
    pub fn pow_g_neg(&self, e: &BigUint) -> BigUint {
        let e = e % &self.q;
        if e.is_zero() {
            return BigUint::one() % &self.p;
        }
        self.g.modpow(&(&self.q - e), &self.p)
    }

    /// True when `x ∈ [1, p)` and `x^q = 1 (mod p)`.
    pub fn contains(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.p && x.modpow(&self.q, &self.p).is_one()
    }

    pub fn p_bytes(&self) -> usize {
        byte_width(&self.p)
    }

    pub fn q_bytes(&self) -> usize {
        byte_width(&self.q)
    }

    /// Uniform scalar in `[1, q)`.
    pub fn random_nonzero_scalar<R: RngCore>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::one(), &self.q)
    }

    /// Uniform scalar in `[0, q)`.
    pub fn random_scalar<R: RngCore>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_below(&self.q)
    }
}

pub(crate) fn byte_width(n: &BigUint) -> usize {
    ((n.bits() as usize) + 7) / 8
}

/// `base^exp mod m`.
pub fn mod_exp(base: &BigUint, exp: &BigUint, m: &BigUint) -> Result<BigUint> {
    if m <= &BigUint::one() {
        return Err(Error::domain("modulus must be greater than 1"));
    }
    Ok(base.modpow(exp, m))
}

/// Multiplicative inverse of `a` modulo `m`, in `[1, m)`.
pub fn mod_inv(a: &BigUint, m: &BigUint) -> Result<BigUint> {
    if m <= &BigUint::one() {
        return Err(Error::domain("modulus must be greater than 1"));
    }
    let a = BigInt::from_biguint(Sign::Plus, a % m);
    let m_int = BigInt::from_biguint(Sign::Plus, m.clone());
    let egcd = a.extended_gcd(&m_int);
    if !egcd.gcd.is_one() {
        return Err(Error::domain("value is not invertible modulo m"));
    }
    let inv = egcd.x.mod_floor(&m_int);
    Ok(inv.to_biguint().expect("mod_floor of positive modulus is non-negative"))
}

/// Trial division by small primes followed by [`MILLER_RABIN_ROUNDS`]
/// Miller-Rabin rounds.
///
/// Witnesses are drawn from a generator seeded by `n` itself, so the answer is
/// a pure function of the input.
pub fn is_probable_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let mut rng = seeded_rng("miller-rabin", &n.to_bytes_be());
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// True iff `p`, `q` are (probable) primes, `q | p - 1`, `g ≠ 1` and
/// `g^q = 1 (mod p)`.
pub fn is_valid_group(params: &GroupParams) -> bool {
    let GroupParams { p, q, g } = params;
    if q < &BigUint::from(2u32) || p <= q {
        return false;
    }
    if !((p - 1u32) % q).is_zero() {
        return false;
    }
    if g.is_zero() || g.is_one() || g >= p {
        return false;
    }
    if !is_probable_prime(q) || !is_probable_prime(p) {
        return false;
    }
    g.modpow(q, p).is_one()
}

/// Deterministic generator for a domain-separated seed.
pub fn seeded_rng(domain: &str, seed: &[u8]) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update((domain.len() as u32).to_be_bytes());
    h.update(domain.as_bytes());
    h.update((seed.len() as u32).to_be_bytes());
    h.update(seed);
    ChaCha20Rng::from_seed(h.finalize().into())
}

fn random_odd_with_bits<R: RngCore>(rng: &mut R, bits: u64) -> BigUint {
    let mut n = rng.gen_biguint(bits);
    n.set_bit(bits - 1, true);
    n.set_bit(0, true);
    n
}

/// Generates a Schnorr group with a `p_bits`-bit modulus and a `q_bits`-bit
/// subgroup order.
///
/// A random prime `q` is drawn first, then random even `k` until
/// `p = k·q + 1` is prime with exactly `p_bits` bits; `g = h^((p-1)/q)` for
/// random `h` with `g ≠ 1`.
pub fn gen_group_params(p_bits: u32, q_bits: u32, seed: &[u8]) -> Result<GroupParams> {
    if q_bits < 2 || q_bits >= p_bits {
        return Err(Error::domain(format!(
            "need 2 <= q_bits < p_bits (got q_bits={q_bits}, p_bits={p_bits})"
        )));
    }
    let mut rng = seeded_rng("group-params", seed);
    let p_lo = BigUint::one() << (p_bits - 1);
    let p_hi = (BigUint::one() << p_bits) - 1u32;
    let k_attempts = 32 * p_bits as usize + 32;
    let mut attempts = 0;

    for _ in 0..MAX_Q_ATTEMPTS {
        attempts += 1;
        let q = random_odd_with_bits(&mut rng, q_bits as u64);
        if !is_probable_prime(&q) {
            continue;
        }
        // p = kq + 1 must land in [p_lo, p_hi].
        let k_min = (&p_lo - 1u32).div_ceil(&q);
        let k_max = (&p_hi - 1u32) / &q;
        if k_min > k_max {
            continue;
        }
        let k_span = &k_max - &k_min + 1u32;
        for _ in 0..k_attempts {
            let mut k = &k_min + rng.gen_biguint_below(&k_span);
            if k.is_odd() {
                if k < k_max {
                    k += 1u32;
                } else if k > k_min {
                    k -= 1u32;
                } else {
                    break;
                }
            }
            let p = &k * &q + 1u32;
            if !is_probable_prime(&p) {
                continue;
            }
            let cofactor = (&p - 1u32) / &q;
            let two = BigUint::from(2u32);
            let h_hi = &p - 1u32;
            for _ in 0..MAX_GENERATOR_ATTEMPTS {
                let h = rng.gen_biguint_range(&two, &h_hi);
                let g = h.modpow(&cofactor, &p);
                if !g.is_one() {
                    return Ok(GroupParams { p, q, g });
                }
            }
        }
    }
    Err(Error::Generation { attempts })
}
