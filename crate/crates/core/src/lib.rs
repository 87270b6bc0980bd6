//! Core of the healthledger stack.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): sealed
//! record encryption, a content-addressed replicated store, a PBFT replica
//! state machine, the EHR transaction ledger, multi-factor identity, a
//! deterministic discrete-event network and the scenario harness that ties
//! them together. File formats, the CLI and anything touching the OS live in
//! the `healthledger` companion crate.
//!
//! All randomness flows from caller-supplied RNGs, so a `(scenario, seed)`
//! pair always replays to the same bytes.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod codec;
pub mod crypto;
pub mod harness;
pub mod hash;
pub mod identity;
pub mod keys;
pub mod ledger;
pub mod pbft;
pub mod rng;
pub mod simnet;
pub mod store;
pub mod time;

pub use hash::Digest;
pub use keys::NodeId;
pub use time::SimTime;
