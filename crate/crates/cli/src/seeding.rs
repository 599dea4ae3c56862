//! Per-cell seed derivation.
//!
//! Every random stream of a cell is seeded by
//! `u64_le(SHA-256("{task}/{seed}/{purpose}")[..8])`, so a cell reproduces in
//! isolation and streams of different purposes never coincide.

use sha2::{Digest, Sha256};

pub const TRAIN_DATA: &str = "train-data";
pub const TEST_DATA: &str = "test-data";

pub fn derive_seed(task: &str, seed: u64, purpose: &str) -> u64 {
    let digest = Sha256::digest(format!("{task}/{seed}/{purpose}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}
