//! Ring signatures and the anonymous authenticated key exchange built on them.

mod auth;
mod combine;
mod size;
mod wire;

pub use auth::{
    acknowledge, client_confirm, derive_seed, generate_ring, generate_server, member_id, server_verify_and_respond, sign_and_initiate, AuthServer,
    ClientSession, ClientVerdict, RejectReason, RingDirectory, RingMember, RingSignature, ServerKeys,
    ServerPublic, ServerResponse, ServerVerdict, SessionKey, SIGN_RETRY_BUDGET,
};
pub use combine::{
    combine, hash_parts, prp_forward, prp_inverse, solve_ring_gap, CombiningConfig, DigestBytes,
    PermutationKind, DIGEST_LEN,
};
pub use size::{fit_affine, signature_sizes, AffineFit, SizeRow};
pub use wire::{VERSION_CANONICAL, VERSION_FIXED_WIDTH};
