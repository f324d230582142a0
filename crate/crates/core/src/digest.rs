//! Content digests used for ids, config fingerprints and seed substreams.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First 8 bytes of SHA-256, big-endian.
pub fn digest_u64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_be_bytes(d[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Digest of the canonical JSON form of a value. `serde_json` writes struct
/// fields in declaration order and maps are expected to be `BTreeMap`s, so the
/// encoding is stable.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config is serializable");
    sha256_hex(&bytes)[..16].to_string()
}
