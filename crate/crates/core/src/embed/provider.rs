use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::reference::bucket_counts;
use crate::error::{Error, Result};

pub const DEFAULT_REFERENCE_DIMS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Reference,
    Remote,
}

/// Identifies an embedding function. Model weights live with the provider,
/// never in this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    /// Filled from the table key when read from a config file.
    #[serde(default)]
    pub provider_id: String,
    pub kind: ProviderKind,
    pub model_name: String,
    pub dims: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl ProviderSpec {
    pub fn reference(dims: usize) -> Self {
        ProviderSpec {
            provider_id: "reference".into(),
            kind: ProviderKind::Reference,
            model_name: format!("fnv1a-bow-{dims}"),
            dims,
            endpoint: None,
        }
    }

    pub fn is_remote(&self) -> bool {
        self.kind == ProviderKind::Remote
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::Config(format!(
                "provider {} must have dims > 0",
                self.provider_id
            )));
        }
        if self.kind == ProviderKind::Remote && self.endpoint.as_deref().unwrap_or("").is_empty() {
            return Err(Error::Config(format!(
                "remote provider {} needs an endpoint",
                self.provider_id
            )));
        }
        Ok(())
    }
}

/// Something that turns a batch of texts into raw vectors, one per text, in
/// order. Vectors need not be normalized.
pub trait EmbeddingProvider: Send + Sync {
    fn spec(&self) -> &ProviderSpec;
    fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, String>;
}

pub struct ReferenceProvider {
    spec: ProviderSpec,
}

impl ReferenceProvider {
    pub fn new(dims: usize) -> Self {
        ReferenceProvider {
            spec: ProviderSpec::reference(dims),
        }
    }
}

impl EmbeddingProvider for ReferenceProvider {
    fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, String> {
        Ok(texts
            .iter()
            .map(|t| bucket_counts(t, self.spec.dims).into_iter().map(f64::from).collect())
            .collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP provider: `POST {endpoint}/embed` with `{"model", "texts"}`,
/// answered by `{"vectors": [[...], ...]}`.
pub struct RemoteProvider {
    spec: ProviderSpec,
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(spec: ProviderSpec) -> Result<Self> {
        spec.validate()?;
        let base = spec.endpoint.clone().unwrap_or_default();
        let url = format!("{}/embed", base.trim_end_matches('/'));
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(RemoteProvider { spec, url, client })
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, String> {
        let body = EmbedRequest {
            model: &self.spec.model_name,
            texts,
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| format!("request to {} failed: {e}", self.url))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("{} answered {status}", self.url));
        }
        let parsed: EmbedResponse = resp
            .json()
            .map_err(|e| format!("malformed response from {}: {e}", self.url))?;
        Ok(parsed.vectors)
    }
}

/// Instantiate the provider described by `spec`.
pub fn build_provider(spec: &ProviderSpec) -> Result<Box<dyn EmbeddingProvider>> {
    spec.validate()?;
    match spec.kind {
        ProviderKind::Reference => {
            let mut p = ReferenceProvider::new(spec.dims);
            p.spec.provider_id = spec.provider_id.clone();
            Ok(Box::new(p))
        }
        ProviderKind::Remote => Ok(Box::new(RemoteProvider::new(spec.clone())?)),
    }
}
