//! Deterministic bag-of-words embedder.
//!
//! Not a semantic model: it exists so the whole pipeline can run and be
//! verified without network access or model weights. Tokens are hashed with
//! 64-bit FNV-1a into `dims` buckets, counted, and L2-normalized.

use super::EmbeddingVector;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercase and split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn reference_embed(text: &str, dims: usize) -> EmbeddingVector {
    EmbeddingVector::normalized(&bucket_counts(text, dims))
}

/// Unnormalized token counts per bucket.
pub(crate) fn bucket_counts(text: &str, dims: usize) -> Vec<u32> {
    assert!(dims >= 1, "reference embedder needs at least one dimension");
    let mut counts = vec![0u32; dims];
    for token in tokenize(text) {
        counts[(fnv1a64(token.as_bytes()) % dims as u64) as usize] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::cosine;

    fn bucket(token: &str, dims: u64) -> u64 {
        fnv1a64(token.as_bytes()) % dims
    }

    #[test]
    fn fnv_known_vectors() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn single_token_is_one_hot() {
        let v = reference_embed("granite", 256);
        let nonzero: Vec<f32> = v.components().iter().copied().filter(|&c| c != 0.0).collect();
        assert_eq!(nonzero, vec![1.0]);
        assert_eq!(v.components()[bucket("granite", 256) as usize], 1.0);
    }

    #[test]
    fn repeated_token_same_vector() {
        assert_eq!(reference_embed("granite granite", 256), reference_embed("granite", 256));
        assert_eq!(reference_embed("GRANITE.", 256), reference_embed("granite", 256));
    }

    #[test]
    fn two_token_cosine() {
        assert_ne!(bucket("granite", 256), bucket("limestone", 256));
        let a = reference_embed("granite limestone", 256);
        let b = reference_embed("granite", 256);
        let c = cosine(&a, &b).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9, "{c}");
    }

    #[test]
    fn punctuation_only_is_empty() {
        assert!(reference_embed(" .,;- ", 64).is_empty());
        assert!(reference_embed("", 64).is_empty());
    }

    #[test]
    fn deterministic_bits() {
        let a = reference_embed("tonalite, granodiorite, quartz monzonite and granite.", 1024);
        let b = reference_embed("tonalite, granodiorite, quartz monzonite and granite.", 1024);
        let bits = |v: &EmbeddingVector| v.components().iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
