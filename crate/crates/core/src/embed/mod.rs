//! Sentence embeddings: the vector type, cosine similarity, a deterministic
//! reference embedder, remote providers, and the on-disk cache.

mod cache;
mod provider;
mod reference;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{embed_with_cache, CacheStats, EmbeddingCache, DEFAULT_BATCH_SIZE};
pub use provider::{
    build_provider, EmbeddingProvider, ProviderKind, ProviderSpec, ReferenceProvider,
    RemoteProvider, DEFAULT_REFERENCE_DIMS,
};
pub use reference::{fnv1a64, reference_embed, tokenize};

/// Unit-norm embedding stored as 32-bit floats.
///
/// A text with no usable content produces the zero vector flagged as empty;
/// similarity against it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    components: Vec<f32>,
    empty: bool,
}

impl EmbeddingVector {
    /// L2-normalize raw components (accumulated in f64) and store as f32.
    /// A zero or non-finite vector becomes the empty vector.
    pub fn normalized<T: Copy + Into<f64>>(raw: &[T]) -> Self {
        let norm = raw
            .iter()
            .map(|&x| {
                let x: f64 = x.into();
                x * x
            })
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return EmbeddingVector::empty(raw.len());
        }
        EmbeddingVector {
            components: raw.iter().map(|&x| (x.into() / norm) as f32).collect(),
            empty: false,
        }
    }

    pub fn empty(dims: usize) -> Self {
        EmbeddingVector {
            components: vec![0.0; dims],
            empty: true,
        }
    }

    /// Wrap stored components without renormalizing (cache reads).
    pub(crate) fn from_stored(components: Vec<f32>) -> Self {
        let empty = components.iter().all(|&c| c == 0.0);
        EmbeddingVector { components, empty }
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f32] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|&c| f64::from(c) * f64::from(c))
            .sum::<f64>()
            .sqrt()
    }
}

/// A provider together with its cache and batch size; what the scoring
/// code actually holds on to.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    cache: Option<EmbeddingCache>,
    batch_size: usize,
}

impl Embedder {
    pub fn new(provider: Box<dyn EmbeddingProvider>) -> Self {
        Embedder {
            provider,
            cache: None,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn reference() -> Self {
        Embedder::new(Box::new(ReferenceProvider::new(DEFAULT_REFERENCE_DIMS)))
    }

    pub fn with_cache(mut self, cache: EmbeddingCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn spec(&self) -> &ProviderSpec {
        self.provider.spec()
    }

    pub fn cache(&self) -> Option<&EmbeddingCache> {
        self.cache.as_ref()
    }

    pub fn embed(&self, texts: &[String]) -> Result<(Vec<EmbeddingVector>, CacheStats)> {
        embed_with_cache(self.provider.as_ref(), self.cache.as_ref(), texts, self.batch_size)
    }
}

/// Cosine similarity, accumulated left to right in f64 and clamped to
/// [-1, 1].
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dims() != v.dims() {
        return Err(Error::Shape {
            expected: u.dims(),
            actual: v.dims(),
        });
    }
    if u.is_empty() || v.is_empty() {
        return Err(Error::UndefinedSimilarity);
    }
    cosine_slices(u.components(), v.components()).ok_or(Error::UndefinedSimilarity)
}

/// Cosine over raw slices of equal length; `None` when either has zero norm.
pub fn cosine_slices<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Option<f64> {
    debug_assert_eq!(u.len(), v.len());
    let mut dot = 0.0f64;
    let mut uu = 0.0f64;
    let mut vv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        let (a, b): (f64, f64) = (a.into(), b.into());
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    let denom = uu.sqrt() * vv.sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    Some((dot / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn orthogonal_and_diagonal() {
        let x = EmbeddingVector::normalized(&[1.0f64, 0.0]);
        let y = EmbeddingVector::normalized(&[0.0f64, 1.0]);
        let d = EmbeddingVector::normalized(&[1.0f64, 1.0]);
        assert_eq!(cosine(&x, &y).unwrap(), 0.0);
        assert!((cosine(&x, &d).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn mismatched_dims() {
        let a = EmbeddingVector::normalized(&[1.0f64, 0.0]);
        let b = EmbeddingVector::normalized(&[1.0f64, 0.0, 0.0]);
        assert!(matches!(cosine(&a, &b), Err(Error::Shape { expected: 2, actual: 3 })));
    }

    #[test]
    fn empty_flag_is_undefined() {
        let a = EmbeddingVector::normalized(&[0.0f64, 0.0]);
        assert!(a.is_empty());
        let b = EmbeddingVector::normalized(&[1.0f64, 0.0]);
        assert!(matches!(cosine(&a, &b), Err(Error::UndefinedSimilarity)));
    }

    fn vec_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..64).prop_flat_map(|d| {
            (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn self_similarity_is_one(v in prop::collection::vec(-10.0f64..10.0, 1..64)) {
            let e = EmbeddingVector::normalized(&v);
            prop_assume!(!e.is_empty());
            prop_assert!((cosine(&e, &e).unwrap() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn symmetric_exactly((u, v) in vec_strategy()) {
            prop_assert_eq!(cosine_slices(&u, &v), cosine_slices(&v, &u));
        }

        #[test]
        fn scale_invariant((u, v) in vec_strategy(), alpha in 1e-3f64..1e3) {
            let scaled: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            if let (Some(a), Some(b)) = (cosine_slices(&scaled, &v), cosine_slices(&u, &v)) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }

        #[test]
        fn normalized_has_unit_norm(v in prop::collection::vec(-1e3f64..1e3, 1..512)) {
            let e = EmbeddingVector::normalized(&v);
            prop_assume!(!e.is_empty());
            prop_assert!((e.norm() - 1.0).abs() <= 1e-6);
        }
    }
}
