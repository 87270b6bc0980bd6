//! Std companion to `healthledger-core`: file formats, parallel seeded
//! runs, a front desk persisted on disk and the `healthledger` command line.

pub mod bench;
pub mod cli;
pub mod desk_dir;
pub mod formats;
pub mod host;
pub mod runs;
pub mod secrets;
