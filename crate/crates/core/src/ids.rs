use sha2::{Digest, Sha256};

/// `{prefix}-{16 hex chars}` from the SHA-256 of the NUL-separated parts.
pub(crate) fn content_id(prefix: &str, parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
        h.update([0u8]);
    }
    format!("{prefix}-{}", &hex::encode(h.finalize())[..16])
}
