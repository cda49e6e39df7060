//! Settings shared by the service and the command line.
//!
//! Read from a TOML file, then overridden by `LITHOQUERY_*` environment
//! variables, then by explicit flags. Keys:
//!
//! | key | env | default |
//! |---|---|---|
//! | `data_dir` | `LITHOQUERY_DATA_DIR` | `./lithoquery-data` |
//! | `default_provider` | `LITHOQUERY_DEFAULT_PROVIDER` | `reference` |
//! | `embed_batch_size` | `LITHOQUERY_EMBED_BATCH_SIZE` | 64 |
//! | `default_tau` | `LITHOQUERY_DEFAULT_TAU` | 0.1 |
//! | `default_r1` | `LITHOQUERY_DEFAULT_R1` | 500 |
//! | `default_r2` | `LITHOQUERY_DEFAULT_R2` | 500 |
//! | `bind_address` | `LITHOQUERY_BIND_ADDRESS` | `127.0.0.1` |
//! | `port` | `LITHOQUERY_PORT` | 8080 |
//! | `llm_endpoint` | `LITHOQUERY_LLM_ENDPOINT` | none |
//! | `max_jobs` | `LITHOQUERY_MAX_JOBS` | 2 |
//! | `albers.lat1`, `.lat2`, `.lat0`, `.lon0` | `LITHOQUERY_ALBERS_LAT1`, … | 29.5, 45.5, 40, −96 |
//!
//! Additional embedding providers go under `[providers.<id>]` with `kind`
//! (`reference` or `remote`), `model_name`, `dims` and `endpoint`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contact::{DEFAULT_R1_M, DEFAULT_R2_M};
use crate::embed::{
    build_provider, Embedder, EmbeddingCache, ProviderSpec, DEFAULT_BATCH_SIZE,
    DEFAULT_REFERENCE_DIMS,
};
use crate::error::{Error, Result};
use crate::projection::{AlbersParams, AUTHALIC_RADIUS_M};

pub const ENV_PREFIX: &str = "LITHOQUERY_";
pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlbersConfig {
    pub lat1: f64,
    pub lat2: f64,
    pub lat0: f64,
    pub lon0: f64,
}

impl Default for AlbersConfig {
    fn default() -> Self {
        let p = AlbersParams::default();
        AlbersConfig {
            lat1: p.lat1,
            lat2: p.lat2,
            lat0: p.lat0,
            lon0: p.lon0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub default_provider: String,
    pub embed_batch_size: usize,
    pub default_tau: f64,
    pub default_r1: f64,
    pub default_r2: f64,
    pub bind_address: String,
    pub port: u16,
    pub llm_endpoint: Option<String>,
    pub max_jobs: usize,
    pub albers: AlbersConfig,
    pub providers: BTreeMap<String, ProviderSpec>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("./lithoquery-data"),
            default_provider: "reference".into(),
            embed_batch_size: DEFAULT_BATCH_SIZE,
            default_tau: DEFAULT_TAU,
            default_r1: DEFAULT_R1_M,
            default_r2: DEFAULT_R2_M,
            bind_address: "127.0.0.1".into(),
            port: 8080,
            llm_endpoint: None,
            max_jobs: 2,
            albers: AlbersConfig::default(),
            providers: BTreeMap::new(),
        }
    }
}

impl Config {
    /// File (if given) then environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let mut cfg = match path {
            Some(p) => Config::from_toml(&crate::geojson_io::read_text(p)?, &p.display().to_string())?,
            None => Config::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str, source_name: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{source_name}: {e}")))
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_PREFIX}{key}: cannot parse {v:?}")))
        }
        for (k, v) in vars {
            let Some(key) = k.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            match key {
                "DATA_DIR" => self.data_dir = PathBuf::from(v),
                "DEFAULT_PROVIDER" => self.default_provider = v,
                "EMBED_BATCH_SIZE" => self.embed_batch_size = num(key, &v)?,
                "DEFAULT_TAU" => self.default_tau = num(key, &v)?,
                "DEFAULT_R1" => self.default_r1 = num(key, &v)?,
                "DEFAULT_R2" => self.default_r2 = num(key, &v)?,
                "BIND_ADDRESS" => self.bind_address = v,
                "PORT" => self.port = num(key, &v)?,
                "LLM_ENDPOINT" => self.llm_endpoint = Some(v),
                "MAX_JOBS" => self.max_jobs = num(key, &v)?,
                "ALBERS_LAT1" => self.albers.lat1 = num(key, &v)?,
                "ALBERS_LAT2" => self.albers.lat2 = num(key, &v)?,
                "ALBERS_LAT0" => self.albers.lat0 = num(key, &v)?,
                "ALBERS_LON0" => self.albers.lon0 = num(key, &v)?,
                _ => tracing::warn!("ignoring unknown setting {k}"),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_batch_size == 0 {
            return Err(Error::Config("embed_batch_size must be >= 1".into()));
        }
        if !(self.default_tau > 0.0 && self.default_tau <= 1.0) {
            return Err(Error::Config(format!("default_tau {} not in (0, 1]", self.default_tau)));
        }
        for (k, r) in [("default_r1", self.default_r1), ("default_r2", self.default_r2)] {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::Config(format!("{k} must be >= 0")));
            }
        }
        if self.max_jobs == 0 {
            return Err(Error::Config("max_jobs must be >= 1".into()));
        }
        for spec in self.providers.values() {
            spec.validate()?;
        }
        crate::projection::Albers::new(self.albers_params())?;
        self.provider_spec(&self.default_provider)?;
        Ok(())
    }

    pub fn albers_params(&self) -> AlbersParams {
        AlbersParams {
            lat1: self.albers.lat1,
            lat2: self.albers.lat2,
            lat0: self.albers.lat0,
            lon0: self.albers.lon0,
            radius: AUTHALIC_RADIUS_M,
        }
    }

    /// Configured providers plus the built-in `reference`.
    pub fn provider_spec(&self, provider_id: &str) -> Result<ProviderSpec> {
        if let Some(spec) = self.providers.get(provider_id) {
            let mut spec = spec.clone();
            spec.provider_id = provider_id.to_string();
            return Ok(spec);
        }
        if provider_id == "reference" {
            return Ok(ProviderSpec::reference(DEFAULT_REFERENCE_DIMS));
        }
        Err(Error::not_found(format!("no embedding provider {provider_id:?}")))
    }

    pub fn provider_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.providers.keys().cloned().collect();
        if !ids.iter().any(|i| i == "reference") {
            ids.insert(0, "reference".into());
        }
        ids
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.data_dir.join("cache").join("embeddings")
    }

    /// Provider with the data directory's cache attached.
    pub fn embedder(&self, provider_id: Option<&str>) -> Result<Embedder> {
        let spec = self.provider_spec(provider_id.unwrap_or(&self.default_provider))?;
        let provider = build_provider(&spec)?;
        Ok(Embedder::new(provider)
            .with_cache(EmbeddingCache::new(self.cache_dir()))
            .with_batch_size(self.embed_batch_size))
    }
}
