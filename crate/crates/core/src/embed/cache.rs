use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::provider::{EmbeddingProvider, ProviderSpec};
use super::EmbeddingVector;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const DEFAULT_BATCH_SIZE: usize = 64;

/// On-disk embedding store: `{root}/{provider_id}/{model_name}/{sha256 hex}`.
///
/// Each entry is a little-endian u32 dimension count followed by that many
/// little-endian f32 components. Writes go through a temp file and a rename
/// so readers never observe a partial entry.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    root: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: usize,
    /// Distinct texts computed by the provider.
    pub misses: usize,
    /// Provider calls made.
    pub requests: usize,
}

fn path_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl EmbeddingCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        EmbeddingCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, spec: &ProviderSpec, text: &str) -> PathBuf {
        self.root
            .join(path_component(&spec.provider_id))
            .join(path_component(&spec.model_name))
            .join(text_key(text))
    }

    /// Stored vector for `text`, if any. A malformed entry is deleted and
    /// reported as a cache error.
    pub fn get(&self, spec: &ProviderSpec, text: &str) -> Result<Option<EmbeddingVector>> {
        let path = self.entry_path(spec, text);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        match decode(&bytes, spec.dims) {
            Ok(v) => Ok(Some(v)),
            Err(message) => {
                let _ = fs::remove_file(&path);
                Err(Error::Cache {
                    path: path.clone(),
                    message: format!("{message}; entry removed"),
                })
            }
        }
    }

    pub fn put(&self, spec: &ProviderSpec, text: &str, v: &EmbeddingVector) -> Result<()> {
        let mut bytes = Vec::with_capacity(4 + 4 * v.dims());
        bytes.extend_from_slice(&(v.dims() as u32).to_le_bytes());
        for c in v.components() {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        write_atomic(&self.entry_path(spec, text), &bytes)
    }
}

fn decode(bytes: &[u8], expected_dims: usize) -> std::result::Result<EmbeddingVector, String> {
    if bytes.len() < 4 {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    let dims = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if dims != expected_dims {
        return Err(format!("stored dims {dims}, provider dims {expected_dims}"));
    }
    let body = &bytes[4..];
    if body.len() != 4 * dims {
        return Err(format!("expected {} payload bytes, found {}", 4 * dims, body.len()));
    }
    let components: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if components.iter().any(|c| !c.is_finite()) {
        return Err("non-finite component".into());
    }
    Ok(EmbeddingVector::from_stored(components))
}

/// Embed `texts` in order, reusing cached vectors where present.
///
/// Texts are deduplicated before they reach the provider, and misses are
/// sent in batches of `batch_size`. With `cache` set to `None` every
/// distinct text is computed.
pub fn embed_with_cache(
    provider: &dyn EmbeddingProvider,
    cache: Option<&EmbeddingCache>,
    texts: &[String],
    batch_size: usize,
) -> Result<(Vec<EmbeddingVector>, CacheStats)> {
    let spec = provider.spec();
    let batch_size = batch_size.max(1);
    let mut stats = CacheStats::default();

    let mut slot_of: HashMap<&str, usize> = HashMap::new();
    let mut unique: Vec<&str> = Vec::new();
    let order: Vec<usize> = texts
        .iter()
        .map(|t| {
            *slot_of.entry(t.as_str()).or_insert_with(|| {
                unique.push(t.as_str());
                unique.len() - 1
            })
        })
        .collect();

    let mut resolved: Vec<Option<EmbeddingVector>> = vec![None; unique.len()];
    let mut missing: Vec<usize> = Vec::new();
    for (i, text) in unique.iter().enumerate() {
        match cache.map(|c| c.get(spec, text)).transpose()?.flatten() {
            Some(v) => {
                stats.hits += 1;
                resolved[i] = Some(v);
            }
            None => missing.push(i),
        }
    }

    let mut completed = 0usize;
    for (batch_index, chunk) in missing.chunks(batch_size).enumerate() {
        let batch_texts: Vec<String> = chunk.iter().map(|&i| unique[i].to_string()).collect();
        let fail = |message: String| Error::Provider {
            provider: spec.provider_id.clone(),
            batch: batch_index,
            message,
            completed,
        };
        stats.requests += 1;
        let raw = provider.embed_batch(&batch_texts).map_err(fail)?;
        if raw.len() != chunk.len() {
            return Err(fail(format!(
                "returned {} vectors for {} texts",
                raw.len(),
                chunk.len()
            )));
        }
        for (&i, r) in chunk.iter().zip(&raw) {
            if r.len() != spec.dims {
                return Err(fail(format!("vector has {} dims, expected {}", r.len(), spec.dims)));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(fail("non-finite component".into()));
            }
            let v = EmbeddingVector::normalized(r);
            if let Some(c) = cache {
                c.put(spec, unique[i], &v)?;
            }
            resolved[i] = Some(v);
        }
        stats.misses += chunk.len();
        completed += chunk.len();
    }

    let resolved: Vec<EmbeddingVector> = resolved
        .into_iter()
        .map(|v| v.expect("every unique text resolved"))
        .collect();
    Ok((order.into_iter().map(|i| resolved[i].clone()).collect(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ReferenceProvider;

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("unit {i} granite")).collect()
    }

    #[test]
    fn duplicates_computed_once() {
        let p = ReferenceProvider::new(64);
        let t = vec!["a b".to_string(), "a b".to_string()];
        let (v, s) = embed_with_cache(&p, None, &t, 64).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(s.misses, 1);
        assert_eq!(s.requests, 1);
    }

    #[test]
    fn empty_list() {
        let p = ReferenceProvider::new(64);
        let (v, s) = embed_with_cache(&p, None, &[], 64).unwrap();
        assert!(v.is_empty());
        assert_eq!(s, CacheStats::default());
    }

    #[test]
    fn batches_by_ceiling() {
        let p = ReferenceProvider::new(64);
        let (_, s) = embed_with_cache(&p, None, &texts(130), 64).unwrap();
        assert_eq!(s.requests, 3);
    }

    #[test]
    fn cache_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let p = ReferenceProvider::new(128);
        let t = texts(20);
        let (plain, _) = embed_with_cache(&p, None, &t, 7).unwrap();
        let (first, s1) = embed_with_cache(&p, Some(&cache), &t, 7).unwrap();
        let (second, s2) = embed_with_cache(&p, Some(&cache), &t, 7).unwrap();
        assert_eq!((s1.hits, s1.misses), (0, 20));
        assert_eq!((s2.hits, s2.misses, s2.requests), (20, 0, 0));
        let bits = |vs: &[EmbeddingVector]| -> Vec<Vec<u32>> {
            vs.iter().map(|v| v.components().iter().map(|c| c.to_bits()).collect()).collect()
        };
        assert_eq!(bits(&plain), bits(&first));
        assert_eq!(bits(&plain), bits(&second));
    }

    #[test]
    fn empty_vector_survives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let p = ReferenceProvider::new(16);
        let t = vec!["...".to_string()];
        embed_with_cache(&p, Some(&cache), &t, 4).unwrap();
        let (v, s) = embed_with_cache(&p, Some(&cache), &t, 4).unwrap();
        assert_eq!(s.hits, 1);
        assert!(v[0].is_empty());
    }

    #[test]
    fn corrupt_entry_is_reported_and_removed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let p = ReferenceProvider::new(16);
        let t = vec!["quartzite".to_string()];
        embed_with_cache(&p, Some(&cache), &t, 4).unwrap();
        let path = cache.entry_path(p.spec(), "quartzite");
        fs::write(&path, [16u8, 0, 0, 0, 1, 2]).unwrap();
        let err = embed_with_cache(&p, Some(&cache), &t, 4).unwrap_err();
        assert!(matches!(err, Error::Cache { .. }), "{err:?}");
        assert!(!path.exists());
        let (_, s) = embed_with_cache(&p, Some(&cache), &t, 4).unwrap();
        assert_eq!(s.misses, 1);
    }
}
