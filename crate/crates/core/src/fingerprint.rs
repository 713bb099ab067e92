//! Content fingerprints: SHA-256 over canonical JSON.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn of<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize");
    of_bytes(&bytes)
}

pub fn of_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fingerprint of an ordered list of fingerprints.
pub fn combine<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Short form used in directory names.
pub fn short(fp: &str) -> &str {
    &fp[..fp.len().min(16)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_order_sensitive() {
        assert_eq!(of(&[1, 2]), of(&[1, 2]));
        assert_ne!(of(&[1, 2]), of(&[2, 1]));
        assert_ne!(combine(["ab", "c"]), combine(["a", "bc"]));
        assert_eq!(short(&of(&0)).len(), 16);
    }
}
