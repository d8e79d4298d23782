//! Server-initiated key-list distribution.
//!
//! The authentication server issues an ordered list of symmetric keys stamped
//! with its generation time `TS_KL`. Key `k` (1-based) is live for elapsed
//! times in `[(k-1)·timeout, k·timeout)`, so synchronized peers agree on the
//! active key without talking to each other. Each node re-requests the next
//! list early enough to cover its observed response delay.
//!
//! Time values are plain integers; the crate uses milliseconds on the wire,
//! but the arithmetic is unit-agnostic.

use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::ring::hash_parts;

pub const KEY_LEN: usize = 32;

pub type SymmetricKey = [u8; KEY_LEN];

/// `floor((t_now - TS_KL) / timeout) + 1`.
pub fn current_key_index(t_now: u64, ts_kl: u64, timeout: u64) -> Result<u64> {
    if timeout == 0 {
        return Err(Error::domain("timeout must be positive"));
    }
    let elapsed = t_now
        .checked_sub(ts_kl)
        .ok_or(Error::ClockSkew { t_now, ts_kl })?;
    Ok(elapsed / timeout + 1)
}

/// `key_idx · timeout - (t_now - TS_KL)`, always in `(0, timeout]`.
pub fn remaining_validity(t_now: u64, ts_kl: u64, timeout: u64) -> Result<u64> {
    let idx = current_key_index(t_now, ts_kl, timeout)?;
    Ok(idx * timeout - (t_now - ts_kl))
}

/// `ceil((t_last - timeout) / timeout)` when `t_last >= timeout`, else 0.
pub fn correction_factor(t_last: u64, timeout: u64) -> u64 {
    if timeout == 0 || t_last < timeout {
        return 0;
    }
    (t_last - timeout).div_ceil(timeout)
}

/// Key index at which a node asks for the next list: `max(1, cardinality - c)`.
pub fn request_trigger_index(cardinality: u64, c: u64) -> u64 {
    cardinality.saturating_sub(c).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyList {
    #[serde(with = "hex_keys")]
    keys: Vec<SymmetricKey>,
    pub ts_kl: u64,
    pub timeout: u64,
}

/// The key in force at some instant, with its 1-based index and the time left
/// before the next key takes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyHandle {
    pub key_idx: u64,
    pub remaining: u64,
}

impl KeyList {
    pub fn new(keys: Vec<SymmetricKey>, ts_kl: u64, timeout: u64) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::domain("key list must hold at least one key"));
        }
        if keys.len() > u16::MAX as usize {
            return Err(Error::domain("key list too long for the wire format"));
        }
        if timeout == 0 {
            return Err(Error::domain("timeout must be positive"));
        }
        Ok(KeyList { keys, ts_kl, timeout })
    }

    pub fn keys(&self) -> &[SymmetricKey] {
        &self.keys
    }

    pub fn cardinality(&self) -> usize {
        self.keys.len()
    }

    /// `cardinality · timeout`.
    pub fn session_length(&self) -> u64 {
        self.keys.len() as u64 * self.timeout
    }

    /// First instant at which the list no longer yields a key.
    pub fn expires_at(&self) -> u64 {
        self.ts_kl + self.session_length()
    }

    /// Whether `lookup(t_now)` would succeed.
    pub fn covers(&self, t_now: u64) -> bool {
        t_now >= self.ts_kl && t_now < self.expires_at()
    }

    pub fn lookup(&self, t_now: u64) -> Result<(&SymmetricKey, KeyHandle)> {
        let key_idx = current_key_index(t_now, self.ts_kl, self.timeout)?;
        if key_idx > self.keys.len() as u64 {
            return Err(Error::SessionExpired {
                key_idx,
                cardinality: self.keys.len(),
            });
        }
        let remaining = key_idx * self.timeout - (t_now - self.ts_kl);
        Ok((&self.keys[key_idx as usize - 1], KeyHandle { key_idx, remaining }))
    }

    /// Start of window `key_idx`.
    pub fn window_start(&self, key_idx: u64) -> u64 {
        self.ts_kl + (key_idx.max(1) - 1) * self.timeout
    }
}

/// Key `index` of session `session` under `master`.
pub fn derive_key(master: &[u8], session: u64, index: u64) -> SymmetricKey {
    hash_parts(&[
        b"key-list".as_slice(),
        master,
        &session.to_be_bytes(),
        &index.to_be_bytes(),
    ])
}

/// Deterministic list for one session.
pub fn generate_key_list(master: &[u8], session: u64, session_start: u64, cardinality: usize, timeout: u64) -> Result<KeyList> {
    let keys = (0..cardinality as u64).map(|i| derive_key(master, session, i)).collect();
    KeyList::new(keys, session_start, timeout)
}

/// Authentication-server side: issues one list per session from a master seed.
#[derive(Debug, Clone)]
pub struct KeyDistributor {
    master: Vec<u8>,
    epoch: u64,
    cardinality: usize,
    timeout: u64,
}

impl KeyDistributor {
    /// Sessions tile time from `epoch` in steps of `cardinality · timeout`.
    pub fn new(master: &[u8], epoch: u64, cardinality: usize, timeout: u64) -> Result<Self> {
        if cardinality == 0 || cardinality > u16::MAX as usize {
            return Err(Error::domain("cardinality must be in 1..=65535"));
        }
        if timeout == 0 {
            return Err(Error::domain("timeout must be positive"));
        }
        Ok(KeyDistributor {
            master: master.to_vec(),
            epoch,
            cardinality,
            timeout,
        })
    }

    pub fn session_length(&self) -> u64 {
        self.cardinality as u64 * self.timeout
    }

    pub fn session_at(&self, t: u64) -> u64 {
        t.saturating_sub(self.epoch) / self.session_length()
    }

    pub fn session_start(&self, session: u64) -> u64 {
        self.epoch + session * self.session_length()
    }

    pub fn list_for_session(&self, session: u64) -> KeyList {
        generate_key_list(&self.master, session, self.session_start(session), self.cardinality, self.timeout)
            .expect("distributor parameters validated at construction")
    }

    /// List currently in force at `t`.
    pub fn current_list(&self, t: u64) -> KeyList {
        self.list_for_session(self.session_at(t))
    }

    /// List for the session after the one in force at `t`.
    pub fn next_list(&self, t: u64) -> KeyList {
        self.list_for_session(self.session_at(t) + 1)
    }
}

/// Node-side request timing: `t_last = t_r - t_s` feeds the correction factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub t_s: Option<u64>,
    pub t_r: Option<u64>,
    pub t_last: Option<u64>,
    pub c: u64,
}

impl SchedulerState {
    pub fn record_request(&mut self, t_s: u64) {
        self.t_s = Some(t_s);
    }

    /// Records a response and recomputes `c`. Ignored without a pending request.
    pub fn record_response(&mut self, t_r: u64, timeout: u64) -> Option<u64> {
        let t_s = self.t_s?;
        let t_r = t_r.max(t_s);
        self.t_r = Some(t_r);
        let t_last = t_r - t_s;
        self.t_last = Some(t_last);
        self.c = correction_factor(t_last, timeout);
        Some(t_last)
    }

    pub fn trigger_index(&self, cardinality: u64) -> u64 {
        request_trigger_index(cardinality, self.c)
    }
}

/// `node id (u32) | request counter (u32)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyListRequest {
    pub node_id: u32,
    pub counter: u32,
}

pub const KEY_LIST_REQUEST_LEN: usize = 8;

impl KeyListRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u32(self.node_id);
        w.put_u32(self.counter);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let node_id = r.get_u32()?;
        let counter = r.get_u32()?;
        r.finish()?;
        Ok(KeyListRequest { node_id, counter })
    }
}

/// Wire length of a response carrying `cardinality` keys.
pub fn key_list_response_len(cardinality: usize) -> usize {
    8 + 8 + 2 + KEY_LEN * cardinality
}

impl KeyList {
    /// `TS_KL (u64) | timeout (u64) | cardinality (u16) | keys (32 bytes each)`.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.ts_kl);
        w.put_u64(self.timeout);
        w.put_u16(self.keys.len() as u16);
        for k in &self.keys {
            w.put_raw(k);
        }
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let ts_kl = r.get_u64()?;
        let timeout = r.get_u64()?;
        let n = r.get_u16()? as usize;
        let mut keys = Vec::with_capacity(n);
        for _ in 0..n {
            keys.push(r.get_raw(KEY_LEN)?.try_into().unwrap());
        }
        r.finish()?;
        KeyList::new(keys, ts_kl, timeout).map_err(|e| Error::decode(e.to_string()))
    }
}

mod hex_keys {
    use super::{SymmetricKey, KEY_LEN};
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(keys: &[SymmetricKey], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(keys.iter().map(hex::encode))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<SymmetricKey>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|s| {
                let raw = hex::decode(&s).map_err(D::Error::custom)?;
                <[u8; KEY_LEN]>::try_from(raw.as_slice())
                    .map_err(|_| D::Error::custom("key must be 32 bytes"))
            })
            .collect()
    }
}
