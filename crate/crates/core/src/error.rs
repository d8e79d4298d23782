use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
///
/// Protocol-level rejections (a signature that fails the ring equation, a
/// replayed identity, a bad server digest) are *not* errors: they are
/// returned as verdict values. Errors are reserved for inputs that violate an
/// operation's preconditions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter search failed after {attempts} attempts")]
    Generation { attempts: usize },
    #[error("signing failed: retry budget of {0} exhausted")]
    SigningExhausted(usize),
    #[error("malformed signature: {0}")]
    MalformedSignature(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("clock skew: t_now {t_now} precedes key list timestamp {ts_kl}")]
    ClockSkew { t_now: u64, ts_kl: u64 },
    #[error("key list expired: index {key_idx} exceeds cardinality {cardinality}")]
    SessionExpired { key_idx: u64, cardinality: usize },
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),
    #[error("simulation invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn decode(msg: impl Into<String>) -> Self {
        Error::Decode(msg.into())
    }
}
