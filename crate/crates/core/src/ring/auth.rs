//! Three-round anonymous authenticated key exchange between a ring member and
//! the authentication server.
//!
//! Round 1 (client): blind a Diffie-Hellman share `X = g^{x_A}` as
//! `V = X · g^{-Q}` where `Q = (y_B^{x_i} mod p) mod q`, publish
//! `R = g^{x_i}`, and ring-sign with combining key `l = H(X, Q, V, y_B, I)`.
//!
//! Round 2 (server): recover `Q = (R^{x_B} mod p) mod q` and `X = V · g^Q`,
//! recompute `l`, check the ring equation, then answer with
//! `Y = g^{x_b}`, `h = H(X^{x_b}, X, Y, I)` and `I' = H(I)`.
//!
//! Round 3 (client): accept iff `H(Y^{x_A}, X, Y, I) = h`.

use std::collections::{HashSet, VecDeque};
use std::sync::Mutex;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::combine::{combine, hash_parts, solve_ring_gap, CombiningConfig, DigestBytes};
use crate::codec::{hex_bytes, hex_uint, uint_to_bytes};
use crate::error::{Error, Result};
use crate::group::{gen_group_params, mod_inv, seeded_rng, GroupParams};
use crate::trapdoor::{keygen, Preimage, TrapdoorPrivate, TrapdoorPublic};
use num_bigint::RandBigInt;

/// Attempts at choosing a glue value `v` before signing gives up.
pub const SIGN_RETRY_BUDGET: usize = 64;

/// Authentication-server key pair `y_B = g^{x_B}`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerKeys {
    pub group: GroupParams,
    #[serde(with = "hex_uint")]
    pub x: BigUint,
    #[serde(with = "hex_uint")]
    pub y: BigUint,
}

impl std::fmt::Debug for ServerKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerKeys")
            .field("group", &self.group)
            .field("y", &self.y)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerPublic {
    pub group: GroupParams,
    #[serde(with = "hex_uint")]
    pub y: BigUint,
}

impl ServerKeys {
    pub fn generate(group: &GroupParams, seed: &[u8]) -> Result<Self> {
        if !group.is_valid() {
            return Err(Error::domain("invalid server group"));
        }
        let mut rng = seeded_rng("server-keygen", seed);
        let x = group.random_nonzero_scalar(&mut rng);
        let y = group.g.modpow(&x, &group.p);
        Ok(ServerKeys {
            group: group.clone(),
            x,
            y,
        })
    }

    pub fn public(&self) -> ServerPublic {
        ServerPublic {
            group: self.group.clone(),
            y: self.y.clone(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        !self.x.is_zero() && self.x < self.group.q && self.group.g.modpow(&self.x, &self.group.p) == self.y
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingMember {
    pub id: String,
    pub public: TrapdoorPublic,
}

/// The ordered set of users a signer hides among.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RingMember>", into = "Vec<RingMember>")]
pub struct RingDirectory {
    members: Vec<RingMember>,
}

impl TryFrom<Vec<RingMember>> for RingDirectory {
    type Error = Error;

    fn try_from(members: Vec<RingMember>) -> Result<Self> {
        RingDirectory::new(members)
    }
}

impl From<RingDirectory> for Vec<RingMember> {
    fn from(ring: RingDirectory) -> Self {
        ring.members
    }
}

impl RingDirectory {
    pub fn new(members: Vec<RingMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::domain("ring must have at least one member"));
        }
        if members.len() > u16::MAX as usize {
            return Err(Error::domain("ring too large for the wire format"));
        }
        let mut ids = HashSet::new();
        for m in &members {
            if !ids.insert(m.id.as_str()) {
                return Err(Error::domain(format!("duplicate ring member id {:?}", m.id)));
            }
            if !m.public.group.is_valid() || !m.public.is_well_formed() {
                return Err(Error::domain(format!("ring member {:?} has invalid keys", m.id)));
            }
        }
        Ok(RingDirectory { members })
    }

    pub fn members(&self) -> &[RingMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&RingMember> {
        self.members.iter().find(|m| m.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.members.iter().map(|m| m.id.clone()).collect()
    }

    /// Feistel width just covering the largest member modulus.
    pub fn combining_config(&self) -> Result<CombiningConfig> {
        CombiningConfig::covering(self.members.iter().map(|m| &m.public.group.p))
    }
}

/// `σ = (U_1..U_n, v, V, R, (α_1, β_1)..(α_n, β_n))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingSignature {
    pub member_ids: Vec<String>,
    #[serde(with = "hex_uint")]
    pub glue: BigUint,
    #[serde(with = "hex_uint")]
    pub blinded_share: BigUint,
    #[serde(with = "hex_uint")]
    pub commitment: BigUint,
    pub pairs: Vec<Preimage>,
}

/// Client state carried from round 1 to round 3. Holds secrets.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientSession {
    pub server: ServerPublic,
    #[serde(with = "hex_bytes")]
    pub identity: Vec<u8>,
    #[serde(with = "hex_uint")]
    pub blinding_exp: BigUint,
    #[serde(with = "hex_uint")]
    pub share_exp: BigUint,
    #[serde(with = "hex_uint")]
    pub share: BigUint,
    #[serde(with = "hex_uint")]
    pub commitment: BigUint,
    #[serde(with = "hex_uint")]
    pub shared_q: BigUint,
    #[serde(with = "hex_uint")]
    pub blinded_share: BigUint,
    #[serde(with = "hex_bytes")]
    pub combining_key: Vec<u8>,
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("identity", &hex::encode(&self.identity))
            .field("share", &self.share)
            .finish_non_exhaustive()
    }
}

/// Round-2 message `{h, Y, I'}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServerResponse {
    #[serde(with = "hex_bytes")]
    pub digest: Vec<u8>,
    #[serde(with = "hex_uint")]
    pub server_share: BigUint,
    #[serde(with = "hex_bytes")]
    pub ack: Vec<u8>,
}

/// Diffie-Hellman session key `g^{x_A · x_b} mod p`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionKey(#[serde(with = "hex_uint")] pub BigUint);

impl SessionKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        uint_to_bytes(&self.0)
    }
}

impl std::fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// `R` is not in the order-`q` subgroup.
    InvalidCommitment,
    /// The recovered `X` is not in the order-`q` subgroup.
    InvalidShare,
    /// `C_{l,v}(y_1..y_n) ≠ v`.
    RingEquation,
    /// The request identity was already used.
    Replay,
    /// The server's `Y` is not in the order-`q` subgroup.
    InvalidServerShare,
    /// `I'` does not acknowledge the client's identity.
    AckMismatch,
    /// `h' ≠ h`.
    DigestMismatch,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::InvalidCommitment => "commitment outside subgroup",
            RejectReason::InvalidShare => "recovered share outside subgroup",
            RejectReason::RingEquation => "ring equation does not close",
            RejectReason::Replay => "replayed request identity",
            RejectReason::InvalidServerShare => "server share outside subgroup",
            RejectReason::AckMismatch => "acknowledgment does not match identity",
            RejectReason::DigestMismatch => "server digest mismatch",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerVerdict {
    Accept {
        response: ServerResponse,
        session_key: SessionKey,
    },
    Reject(RejectReason),
}

impl ServerVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, ServerVerdict::Accept { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientVerdict {
    Accept(SessionKey),
    Reject(RejectReason),
}

impl ClientVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, ClientVerdict::Accept(_))
    }
}

/// `I' = H(I)`.
pub fn acknowledge(identity: &[u8]) -> Vec<u8> {
    hash_parts(&[identity]).to_vec()
}

fn combining_key(x: &BigUint, q: &BigUint, v: &BigUint, y_b: &BigUint, identity: &[u8]) -> DigestBytes {
    hash_parts(&[
        uint_to_bytes(x).as_slice(),
        &uint_to_bytes(q),
        &uint_to_bytes(v),
        &uint_to_bytes(y_b),
        identity,
    ])
}

fn session_digest(k: &BigUint, x: &BigUint, y: &BigUint, identity: &[u8]) -> DigestBytes {
    hash_parts(&[
        uint_to_bytes(k).as_slice(),
        &uint_to_bytes(x),
        &uint_to_bytes(y),
        identity,
    ])
}

/// Round 1: ring-sign a blinded key share on behalf of `ring`.
///
/// `signer_index` is zero-based. Every random choice is drawn from `seed`.
pub fn sign_and_initiate(
    ring: &RingDirectory,
    signer_index: usize,
    signer: &TrapdoorPrivate,
    server: &ServerPublic,
    identity: &[u8],
    cfg: &CombiningConfig,
    seed: &[u8],
) -> Result<(RingSignature, ClientSession)> {
    let members = ring.members();
    let me = members
        .get(signer_index)
        .ok_or_else(|| Error::domain(format!("signer index {signer_index} outside ring of {}", members.len())))?;
    if !signer.pairs_with(&me.public) {
        return Err(Error::domain("signer key does not match its ring entry"));
    }
    if let Some(m) = members.iter().find(|m| m.public.group.p.bits() > cfg.bits as u64) {
        return Err(Error::domain(format!(
            "block width {} cannot hold member {:?} modulus",
            cfg.bits, m.id
        )));
    }
    let grp = &server.group;
    if !grp.contains(&server.y) {
        return Err(Error::domain("server public key outside its subgroup"));
    }

    let mut rng = seeded_rng("ring-sign", seed);
    let blinding_exp = grp.random_nonzero_scalar(&mut rng);
    let share_exp = grp.random_nonzero_scalar(&mut rng);
    let commitment = grp.g.modpow(&blinding_exp, &grp.p);
    let shared_q = server.y.modpow(&blinding_exp, &grp.p) % &grp.q;
    let share = grp.g.modpow(&share_exp, &grp.p);
    let g_q_inv = mod_inv(&grp.pow_g(&shared_q), &grp.p)?;
    let blinded_share = &share * g_q_inv % &grp.p;
    let l = combining_key(&share, &shared_q, &blinded_share, &server.y, identity);

    let mut pairs: Vec<Option<Preimage>> = vec![None; members.len()];
    let mut ys: Vec<BigUint> = vec![BigUint::zero(); members.len()];
    for (t, member) in members.iter().enumerate() {
        if t == signer_index {
            continue;
        }
        let g = &member.public.group;
        let pre = Preimage {
            alpha: rng.gen_biguint_range(&BigUint::from(1u32), &g.p),
            beta: rng.gen_biguint_below(&g.q),
        };
        ys[t] = member.public.eval(&pre)?;
        pairs[t] = Some(pre);
    }

    let signer_p = &me.public.group.p;
    let mut found = None;
    for _ in 0..SIGN_RETRY_BUDGET {
        let glue = rng.gen_biguint(cfg.bits as u64);
        let y_i = solve_ring_gap(cfg, &l, &glue, &ys[..signer_index], &ys[signer_index + 1..])?;
        if y_i.is_zero() || &y_i >= signer_p {
            continue;
        }
        let k = me.public.group.random_scalar(&mut rng);
        let pre = signer.invert(&me.public, &y_i, &k)?;
        found = Some((glue, pre));
        break;
    }
    let (glue, pre) = found.ok_or(Error::SigningExhausted(SIGN_RETRY_BUDGET))?;
    pairs[signer_index] = Some(pre);

    let sig = RingSignature {
        member_ids: ring.ids(),
        glue,
        blinded_share: blinded_share.clone(),
        commitment: commitment.clone(),
        pairs: pairs.into_iter().map(|p| p.expect("every slot filled")).collect(),
    };
    let session = ClientSession {
        server: server.clone(),
        identity: identity.to_vec(),
        blinding_exp,
        share_exp,
        share,
        commitment,
        shared_q,
        blinded_share,
        combining_key: l.to_vec(),
    };
    Ok((sig, session))
}

/// Resolves the signature's members against `ring` and checks every field's
/// range. Failures here are malformed input, not rejections.
fn check_well_formed<'r>(
    sig: &RingSignature,
    ring: &'r RingDirectory,
    server: &GroupParams,
    cfg: &CombiningConfig,
) -> Result<Vec<&'r RingMember>> {
    let malformed = |m: String| Error::MalformedSignature(m);
    if sig.member_ids.is_empty() {
        return Err(malformed("empty ring".into()));
    }
    if sig.member_ids.len() != sig.pairs.len() {
        return Err(malformed(format!(
            "{} members but {} pairs",
            sig.member_ids.len(),
            sig.pairs.len()
        )));
    }
    let mut seen = HashSet::new();
    let mut members = Vec::with_capacity(sig.member_ids.len());
    for id in &sig.member_ids {
        if !seen.insert(id.as_str()) {
            return Err(malformed(format!("duplicate member {id:?}")));
        }
        let m = ring
            .get(id)
            .ok_or_else(|| malformed(format!("unknown member {id:?}")))?;
        if m.public.group.p.bits() > cfg.bits as u64 {
            return Err(malformed(format!("member {id:?} modulus wider than block")));
        }
        members.push(m);
    }
    if cfg.check_block(&sig.glue).is_err() {
        return Err(malformed("glue value wider than block".into()));
    }
    for (name, value) in [("V", &sig.blinded_share), ("R", &sig.commitment)] {
        if value.is_zero() || value >= &server.p {
            return Err(malformed(format!("{name} outside [1, p)")));
        }
    }
    for (m, pre) in members.iter().zip(&sig.pairs) {
        m.public
            .check_preimage(pre)
            .map_err(|e| malformed(format!("pair for {:?}: {e}", m.id)))?;
    }
    Ok(members)
}

/// Round 2 without replay tracking: a pure function of its inputs.
pub fn server_verify_and_respond(
    keys: &ServerKeys,
    ring: &RingDirectory,
    sig: &RingSignature,
    identity: &[u8],
    cfg: &CombiningConfig,
    seed: &[u8],
) -> Result<ServerVerdict> {
    let grp = &keys.group;
    let members = check_well_formed(sig, ring, grp, cfg)?;
    if !grp.contains(&sig.commitment) {
        return Ok(ServerVerdict::Reject(RejectReason::InvalidCommitment));
    }
    let shared_q = sig.commitment.modpow(&keys.x, &grp.p) % &grp.q;
    let share = &sig.blinded_share * grp.pow_g(&shared_q) % &grp.p;
    if !grp.contains(&share) {
        return Ok(ServerVerdict::Reject(RejectReason::InvalidShare));
    }
    let l = combining_key(&share, &shared_q, &sig.blinded_share, &keys.y, identity);
    let ys = members
        .iter()
        .zip(&sig.pairs)
        .map(|(m, pre)| m.public.eval(pre))
        .collect::<Result<Vec<_>>>()?;
    if combine(cfg, &l, &sig.glue, &ys)? != sig.glue {
        return Ok(ServerVerdict::Reject(RejectReason::RingEquation));
    }

    let mut rng = seeded_rng("server-respond", seed);
    let server_exp = grp.random_nonzero_scalar(&mut rng);
    let server_share = grp.g.modpow(&server_exp, &grp.p);
    let key = share.modpow(&server_exp, &grp.p);
    let digest = session_digest(&key, &share, &server_share, identity);
    Ok(ServerVerdict::Accept {
        response: ServerResponse {
            digest: digest.to_vec(),
            server_share,
            ack: acknowledge(identity),
        },
        session_key: SessionKey(key),
    })
}

/// Round 3: check the server's reply and derive the session key.
pub fn client_confirm(session: &ClientSession, resp: &ServerResponse) -> ClientVerdict {
    let grp = &session.server.group;
    if resp.ack != acknowledge(&session.identity) {
        return ClientVerdict::Reject(RejectReason::AckMismatch);
    }
    if !grp.contains(&resp.server_share) {
        return ClientVerdict::Reject(RejectReason::InvalidServerShare);
    }
    let key = resp.server_share.modpow(&session.share_exp, &grp.p);
    let digest = session_digest(&key, &session.share, &resp.server_share, &session.identity);
    if resp.digest != digest {
        return ClientVerdict::Reject(RejectReason::DigestMismatch);
    }
    ClientVerdict::Accept(SessionKey(key))
}

/// Bounded FIFO of recently accepted request identities.
#[derive(Debug, Default)]
struct ReplayWindow {
    capacity: usize,
    order: VecDeque<Vec<u8>>,
    seen: HashSet<Vec<u8>>,
}

impl ReplayWindow {
    /// Returns false if `identity` is already in the window.
    fn admit(&mut self, identity: &[u8]) -> bool {
        if self.seen.contains(identity) {
            return false;
        }
        if self.capacity == 0 {
            return true;
        }
        if self.order.len() == self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.seen.remove(&old);
            }
        }
        self.order.push_back(identity.to_vec());
        self.seen.insert(identity.to_vec());
        true
    }
}

/// Authentication server with replay tracking over request identities.
#[derive(Debug)]
pub struct AuthServer {
    keys: ServerKeys,
    ring: RingDirectory,
    cfg: CombiningConfig,
    window: Mutex<ReplayWindow>,
}

impl AuthServer {
    pub fn new(keys: ServerKeys, ring: RingDirectory, cfg: CombiningConfig, replay_window: usize) -> Self {
        AuthServer {
            keys,
            ring,
            cfg,
            window: Mutex::new(ReplayWindow {
                capacity: replay_window,
                ..Default::default()
            }),
        }
    }

    pub fn keys(&self) -> &ServerKeys {
        &self.keys
    }

    pub fn ring(&self) -> &RingDirectory {
        &self.ring
    }

    pub fn config(&self) -> &CombiningConfig {
        &self.cfg
    }

    /// Verifies and answers, rejecting identities seen in the replay window.
    /// Only accepted requests enter the window.
    pub fn handle(&self, sig: &RingSignature, identity: &[u8], seed: &[u8]) -> Result<ServerVerdict> {
        let verdict = server_verify_and_respond(&self.keys, &self.ring, sig, identity, &self.cfg, seed)?;
        if verdict.is_accept() {
            let mut window = self.window.lock().expect("replay window poisoned");
            if !window.admit(identity) {
                return Ok(ServerVerdict::Reject(RejectReason::Replay));
            }
        }
        Ok(verdict)
    }
}

/// Seed for the `t`-th draw of a derived stream; lets callers fan one seed out.
pub fn derive_seed(seed: &[u8], label: &str, index: u64) -> [u8; 32] {
    let mut rng = seeded_rng(label, &[seed, &index.to_be_bytes()].concat());
    let mut out = [0u8; 32];
    rng.fill_bytes(&mut out);
    out
}

/// Directory id of the `i`-th generated member.
pub fn member_id(i: usize) -> String {
    format!("user-{i:03}")
}

/// Generates `n` members, each with its own group, plus their secrets.
pub fn generate_ring(n: usize, p_bits: u32, q_bits: u32, seed: &[u8]) -> Result<(RingDirectory, Vec<TrapdoorPrivate>)> {
    let mut members = Vec::with_capacity(n);
    let mut secrets = Vec::with_capacity(n);
    for i in 0..n {
        let group = gen_group_params(p_bits, q_bits, &derive_seed(seed, "member-group", i as u64))?;
        let (public, private) = keygen(&group, &derive_seed(seed, "member-key", i as u64))?;
        members.push(RingMember { id: member_id(i), public });
        secrets.push(private);
    }
    Ok((RingDirectory::new(members)?, secrets))
}

/// Generates the authentication server's group and key pair.
pub fn generate_server(p_bits: u32, q_bits: u32, seed: &[u8]) -> Result<ServerKeys> {
    let group = gen_group_params(p_bits, q_bits, &derive_seed(seed, "server-group", 0))?;
    ServerKeys::generate(&group, &derive_seed(seed, "server-key", 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::gen_group_params;
    use crate::trapdoor::keygen;

    pub(crate) fn setup(n: usize, p_bits: u32, q_bits: u32) -> (RingDirectory, Vec<TrapdoorPrivate>, ServerKeys) {
        let mut members = Vec::new();
        let mut secrets = Vec::new();
        for i in 0..n {
            let group = gen_group_params(p_bits, q_bits, format!("member-{i}").as_bytes()).unwrap();
            let (public, private) = keygen(&group, format!("key-{i}").as_bytes()).unwrap();
            members.push(RingMember {
                id: format!("user-{i:03}"),
                public,
            });
            secrets.push(private);
        }
        let server_group = gen_group_params(p_bits, q_bits, b"server").unwrap();
        let keys = ServerKeys::generate(&server_group, b"server-key").unwrap();
        (RingDirectory::new(members).unwrap(), secrets, keys)
    }

    #[test]
    fn single_member_ring_with_tiny_groups() {
        let group = GroupParams::from_u64(23, 11, 4);
        let (public, private) = keygen(&group, b"u").unwrap();
        let ring = RingDirectory::new(vec![RingMember { id: "solo".into(), public }]).unwrap();
        let keys = ServerKeys::generate(&group, b"s").unwrap();
        let cfg = ring.combining_config().unwrap();
        for s in 0u32..50 {
            let seed = s.to_be_bytes();
            let (sig, session) =
                sign_and_initiate(&ring, 0, &private, &keys.public(), b"req", &cfg, &seed).unwrap();
            let verdict = server_verify_and_respond(&keys, &ring, &sig, b"req", &cfg, &seed).unwrap();
            let ServerVerdict::Accept { response, session_key } = verdict else {
                panic!("honest signature rejected: {verdict:?}");
            };
            assert_eq!(client_confirm(&session, &response), ClientVerdict::Accept(session_key));
        }
    }

    #[test]
    fn five_member_ring_every_signer() {
        let (ring, secrets, keys) = setup(5, 48, 24);
        let cfg = ring.combining_config().unwrap();
        for (i, secret) in secrets.iter().enumerate() {
            let (sig, session) = sign_and_initiate(&ring, i, secret, &keys.public(), b"I", &cfg, b"seed").unwrap();
            assert_eq!(session.shared_q, sig.commitment.modpow(&keys.x, &keys.group.p) % &keys.group.q);
            match server_verify_and_respond(&keys, &ring, &sig, b"I", &cfg, b"srv").unwrap() {
                ServerVerdict::Accept { response, session_key } => {
                    assert_eq!(client_confirm(&session, &response), ClientVerdict::Accept(session_key))
                }
                other => panic!("signer {i}: {other:?}"),
            }
        }
    }

    #[test]
    fn signing_is_deterministic() {
        let (ring, secrets, keys) = setup(3, 40, 20);
        let cfg = ring.combining_config().unwrap();
        let a = sign_and_initiate(&ring, 1, &secrets[1], &keys.public(), b"I", &cfg, b"s").unwrap();
        let b = sign_and_initiate(&ring, 1, &secrets[1], &keys.public(), b"I", &cfg, b"s").unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn sign_rejects_mismatched_signer() {
        let (ring, secrets, keys) = setup(3, 40, 20);
        let cfg = ring.combining_config().unwrap();
        assert!(sign_and_initiate(&ring, 0, &secrets[1], &keys.public(), b"I", &cfg, b"s").is_err());
        assert!(sign_and_initiate(&ring, 3, &secrets[1], &keys.public(), b"I", &cfg, b"s").is_err());
        let narrow = CombiningConfig::feistel(8).unwrap();
        assert!(sign_and_initiate(&ring, 1, &secrets[1], &keys.public(), b"I", &narrow, b"s").is_err());
    }

    #[test]
    fn wrong_identity_or_random_pairs_rejected() {
        let (ring, secrets, keys) = setup(4, 48, 24);
        let cfg = ring.combining_config().unwrap();
        let (sig, _) = sign_and_initiate(&ring, 2, &secrets[2], &keys.public(), b"I", &cfg, b"s").unwrap();
        assert_eq!(
            server_verify_and_respond(&keys, &ring, &sig, b"J", &cfg, b"srv").unwrap(),
            ServerVerdict::Reject(RejectReason::RingEquation)
        );
        let mut forged = sig.clone();
        let mut rng = seeded_rng("forge", b"");
        for (pre, m) in forged.pairs.iter_mut().zip(ring.members()) {
            pre.alpha = rng.gen_biguint_range(&BigUint::from(1u32), &m.public.group.p);
            pre.beta = rng.gen_biguint_below(&m.public.group.q);
        }
        assert!(!server_verify_and_respond(&keys, &ring, &forged, b"I", &cfg, b"srv").unwrap().is_accept());
    }

    #[test]
    fn malformed_is_an_error_not_a_reject() {
        let (ring, secrets, keys) = setup(2, 40, 20);
        let cfg = ring.combining_config().unwrap();
        let (sig, _) = sign_and_initiate(&ring, 0, &secrets[0], &keys.public(), b"I", &cfg, b"s").unwrap();
        let mut bad = sig.clone();
        bad.pairs.pop();
        assert!(matches!(
            server_verify_and_respond(&keys, &ring, &bad, b"I", &cfg, b"x"),
            Err(Error::MalformedSignature(_))
        ));
        let mut bad = sig.clone();
        bad.member_ids[0] = "stranger".into();
        assert!(matches!(
            server_verify_and_respond(&keys, &ring, &bad, b"I", &cfg, b"x"),
            Err(Error::MalformedSignature(_))
        ));
        let mut bad = sig;
        bad.pairs[1].alpha = BigUint::zero();
        assert!(matches!(
            server_verify_and_respond(&keys, &ring, &bad, b"I", &cfg, b"x"),
            Err(Error::MalformedSignature(_))
        ));
    }

    #[test]
    fn tampered_response_rejected() {
        let (ring, secrets, keys) = setup(2, 40, 20);
        let cfg = ring.combining_config().unwrap();
        let (sig, session) = sign_and_initiate(&ring, 1, &secrets[1], &keys.public(), b"I", &cfg, b"s").unwrap();
        let ServerVerdict::Accept { response, .. } =
            server_verify_and_respond(&keys, &ring, &sig, b"I", &cfg, b"x").unwrap()
        else {
            panic!()
        };
        let mut r = response.clone();
        r.digest[0] ^= 1;
        assert_eq!(client_confirm(&session, &r), ClientVerdict::Reject(RejectReason::DigestMismatch));
        let mut r = response.clone();
        r.server_share = &keys.group.g * &r.server_share % &keys.group.p;
        assert_eq!(client_confirm(&session, &r), ClientVerdict::Reject(RejectReason::DigestMismatch));
        let mut r = response.clone();
        r.ack[3] ^= 0x80;
        assert_eq!(client_confirm(&session, &r), ClientVerdict::Reject(RejectReason::AckMismatch));
        let mut r = response;
        r.server_share += 1u32;
        assert!(!client_confirm(&session, &r).is_accept());
    }

    #[test]
    fn dh_agreement_example() {
        // p = 23, g = 4: X = 4^3 = 18, Y = 4^2 = 16, X^2 = Y^3 = 2.
        let p = BigUint::from(23u32);
        let x = BigUint::from(18u32);
        let y = BigUint::from(16u32);
        assert_eq!(y.modpow(&BigUint::from(3u32), &p), BigUint::from(2u32));
        assert_eq!(x.modpow(&BigUint::from(2u32), &p), BigUint::from(2u32));
    }

    #[test]
    fn replay_window_rejects_duplicates() {
        let (ring, secrets, keys) = setup(2, 40, 20);
        let cfg = ring.combining_config().unwrap();
        let server = AuthServer::new(keys.clone(), ring.clone(), cfg, 2);
        let (sig, _) = sign_and_initiate(&ring, 0, &secrets[0], &keys.public(), b"I1", &cfg, b"s").unwrap();
        assert!(server.handle(&sig, b"I1", b"a").unwrap().is_accept());
        assert_eq!(server.handle(&sig, b"I1", b"b").unwrap(), ServerVerdict::Reject(RejectReason::Replay));
        // Rejected requests never enter the window.
        assert!(!server.handle(&sig, b"I2", b"c").unwrap().is_accept());
        for id in [b"I2", b"I3"] {
            let (s, _) = sign_and_initiate(&ring, 1, &secrets[1], &keys.public(), id, &cfg, id).unwrap();
            assert!(server.handle(&s, id, b"d").unwrap().is_accept());
        }
        // Capacity 2: I1 has been evicted.
        assert!(server.handle(&sig, b"I1", b"e").unwrap().is_accept());
    }
}
