//! Small shared helpers: stable hashing, seed derivation, canonical JSON.

use serde::Serialize;

/// FNV-1a 64-bit hash. Used wherever a hash must be stable across builds
/// and platforms (feature hashing, seed derivation).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Derive a child seed from a base seed, a purpose tag, and an index.
/// Children of distinct (tag, index) pairs are independent streams.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(tag.len() + 16);
    buf.extend_from_slice(&base.to_le_bytes());
    buf.extend_from_slice(tag.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    fnv1a64(&buf)
}

/// Serialize any value to canonical single-line JSON: object keys in
/// lexicographic order, numbers in shortest round-trip form.
///
/// Relies on `serde_json::Value` maps being BTree-backed, which sorts keys.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_fnv1a64_reference_vectors() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn test_derive_seed_separates_streams() {
        let a = derive_seed(7, "walk", 0);
        let b = derive_seed(7, "walk", 1);
        let c = derive_seed(7, "init", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, "walk", 0));
    }

    #[test]
    fn test_canonical_json_sorts_keys() {
        #[derive(serde::Serialize)]
        struct S {
            zebra: u32,
            apple: u32,
        }
        let s = canonical_json(&S { zebra: 1, apple: 2 }).unwrap();
        assert_eq!(s, r#"{"apple":2,"zebra":1}"#);
    }
}
