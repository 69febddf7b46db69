pub mod dist;
pub mod error;
pub mod eval;
pub mod exec;
pub mod nn;
pub mod ot;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;

/// SHA-256 of `bytes`, hex encoded.
pub fn digest_bytes(bytes: &[u8]) -> String {
    dist::sha256_hex(bytes)
}
