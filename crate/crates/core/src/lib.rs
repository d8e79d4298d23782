//! Anonymous ring-signature authentication and key-list distribution for
//! wireless mesh networks, with a deterministic discrete-event simulator of
//! the three-tier mesh.
//!
//! * [`group`]: modular arithmetic and Schnorr group generation.
//! * [`trapdoor`]: the per-user discrete-log trapdoor function.
//! * [`ring`]: combining function, ring signature and three-round key exchange.
//! * [`keylist`]: key-index arithmetic, correction-factor scheduling, key lists.
//! * [`sim`]: the mesh simulator and its metrics.

pub mod codec;
pub mod error;
pub mod group;
pub mod keylist;
pub mod ring;
pub mod sim;
pub mod trapdoor;

pub use error::{Error, Result};
pub use num_bigint::BigUint;
pub use group::{gen_group_params, is_valid_group, mod_exp, mod_inv, GroupParams};
pub use keylist::{KeyList, SchedulerState};
pub use ring::{CombiningConfig, RingDirectory, RingSignature, ServerKeys};
pub use trapdoor::{Preimage, TrapdoorPrivate, TrapdoorPublic};
