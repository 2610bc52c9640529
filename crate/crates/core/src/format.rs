//! Versioning and content digests shared by every file format.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_MAJOR: u32 = 1;
pub const FORMAT_VERSION: &str = "1.0";

/// Rejects files whose major version this build does not understand.
pub fn check_version(v: &str) -> Result<()> {
    let major = v
        .split('.')
        .next()
        .and_then(|m| m.trim().parse::<u32>().ok());
    match major {
        Some(FORMAT_MAJOR) => Ok(()),
        _ => Err(Error::Version {
            found: v.to_string(),
            supported: FORMAT_MAJOR,
        }),
    }
}

/// Stable content hash: SHA-256 of the compact JSON encoding, hex, truncated
/// to 16 bytes.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("in-memory serialization cannot fail");
    let hash = Sha256::digest(&bytes);
    hex::encode(&hash[..16])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn versions() {
        assert!(check_version("1.0").is_ok());
        assert!(check_version("1.7").is_ok());
        assert!(check_version("2.0").is_err());
        assert!(check_version("abc").is_err());
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest(&vec![1.0, 2.0]), digest(&vec![1.0, 2.0]));
        assert_ne!(digest(&vec![1.0, 2.0]), digest(&vec![2.0, 1.0]));
        assert_eq!(digest(&vec![1.0]).len(), 32);
    }
}
