//! Per-user discrete-log trapdoor function.
//!
//! Each user owns a group `(p, q, g)`, a secret `x` and the public value
//! `y = g^x mod p`. The public function is
//!
//! ```text
//! f(α, β) = α · y^(α mod q) · g^β  (mod p)
//! ```
//!
//! and the secret `x` lets its owner find a preimage of any `y' ∈ [1, p)`:
//! with a fresh `K ∈ [0, q)` and `e = K · (g^K mod p) mod q`,
//!
//! ```text
//! α = y' · g^(-e)          (mod p)
//! β = e - x · (α mod q)    (mod q)
//! ```

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::codec::{hex_uint, Reader, Writer};
use crate::error::{Error, Result};
use crate::group::{seeded_rng, GroupParams};

/// Public half of a trapdoor key pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrapdoorPublic {
    pub group: GroupParams,
    #[serde(with = "hex_uint")]
    pub y: BigUint,
}

/// Secret exponent `x ∈ [1, q)`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapdoorPrivate {
    #[serde(with = "hex_uint")]
    pub x: BigUint,
}

impl std::fmt::Debug for TrapdoorPrivate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TrapdoorPrivate(..)")
    }
}

/// An input `(α, β)` of the trapdoor function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Preimage {
    #[serde(with = "hex_uint")]
    pub alpha: BigUint,
    #[serde(with = "hex_uint")]
    pub beta: BigUint,
}

impl Preimage {
    pub fn new(alpha: impl Into<BigUint>, beta: impl Into<BigUint>) -> Self {
        Preimage {
            alpha: alpha.into(),
            beta: beta.into(),
        }
    }
}

/// Draws `x ∈ [1, q)` from `seed` and returns the matching key pair.
pub fn keygen(group: &GroupParams, seed: &[u8]) -> Result<(TrapdoorPublic, TrapdoorPrivate)> {
    if !group.is_valid() {
        return Err(Error::domain("invalid group"));
    }
    let mut rng = seeded_rng("trapdoor-keygen", seed);
    let x = group.random_nonzero_scalar(&mut rng);
    Ok(keypair_from_secret(group, x))
}

/// Key pair for a known secret. The caller vouches for the group.
///
/// Panics if `x` is not in `[1, q)`.
pub fn keypair_from_secret(group: &GroupParams, x: BigUint) -> (TrapdoorPublic, TrapdoorPrivate) {
    assert!(!x.is_zero() && x < group.q, "secret exponent out of range");
    let y = group.g.modpow(&x, &group.p);
    (
        TrapdoorPublic {
            group: group.clone(),
            y,
        },
        TrapdoorPrivate { x },
    )
}

impl TrapdoorPublic {
    /// True when `y` lies in the order-`q` subgroup.
    pub fn is_well_formed(&self) -> bool {
        self.group.contains(&self.y)
    }

    /// Checks that `pre` lies in the function's domain.
    pub fn check_preimage(&self, pre: &Preimage) -> Result<()> {
        if pre.alpha.is_zero() {
            return Err(Error::domain("alpha must be non-zero"));
        }
        if pre.alpha >= self.group.p {
            return Err(Error::domain("alpha must be below p"));
        }
        if pre.beta >= self.group.q {
            return Err(Error::domain("beta must be below q"));
        }
        Ok(())
    }

    /// `f(α, β) = α · y^(α mod q) · g^β mod p`.
    pub fn eval(&self, pre: &Preimage) -> Result<BigUint> {
        self.check_preimage(pre)?;
        let GroupParams { p, q, g } = &self.group;
        let alpha_star = &pre.alpha % q;
        let y_term = self.y.modpow(&alpha_star, p);
        let g_term = g.modpow(&pre.beta, p);
        Ok(&pre.alpha * y_term % p * g_term % p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_uint(&self.group.p);
        w.put_uint(&self.group.q);
        w.put_uint(&self.group.g);
        w.put_uint(&self.y);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let group = GroupParams {
            p: r.get_uint()?,
            q: r.get_uint()?,
            g: r.get_uint()?,
        };
        let y = r.get_uint()?;
        r.finish()?;
        Ok(TrapdoorPublic { group, y })
    }
}

impl TrapdoorPrivate {
    /// True when this secret generates `public.y`.
    pub fn pairs_with(&self, public: &TrapdoorPublic) -> bool {
        !self.x.is_zero()
            && self.x < public.group.q
            && public.group.g.modpow(&self.x, &public.group.p) == public.y
    }

    /// Finds `(α, β)` with `public.eval((α, β)) = target`, using the caller's
    /// randomizer `k ∈ [0, q)`.
    pub fn invert(&self, public: &TrapdoorPublic, target: &BigUint, k: &BigUint) -> Result<Preimage> {
        let GroupParams { p, q, g } = &public.group;
        if target.is_zero() || target >= p {
            return Err(Error::domain("inversion target must lie in [1, p)"));
        }
        if k >= q {
            return Err(Error::domain("randomizer K must lie in [0, q)"));
        }
        if !self.pairs_with(public) {
            return Err(Error::domain("private key does not match public key"));
        }
        let g_k = g.modpow(k, p);
        let e = k * &g_k % q;
        let alpha = target * public.group.pow_g_neg(&e) % p;
        let alpha_star = &alpha % q;
        let x_alpha = &self.x * &alpha_star % q;
        let beta = (&e + q - x_alpha) % q;
        debug_assert!(!alpha.is_zero() || p.is_one());
        Ok(Preimage { alpha, beta })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_uint(&self.x);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let x = r.get_uint()?;
        r.finish()?;
        Ok(TrapdoorPrivate { x })
    }
}

impl Preimage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_uint(&self.alpha);
        w.put_uint(&self.beta);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let alpha = r.get_uint()?;
        let beta = r.get_uint()?;
        r.finish()?;
        Ok(Preimage { alpha, beta })
    }
}
