//! File-backed persistence for projects, datasets, layers, focus areas and
//! replayable requests.
//!
//! ```text
//! {data_dir}/
//!   projects/{project_id}/project.json
//!   projects/{project_id}/focus/{name-slug}.json
//!   projects/{project_id}/requests/{request_id}.json
//!   datasets/{dataset_id}.json
//!   layers/{layer_id}/manifest.json   written last; marks the layer complete
//!   layers/{layer_id}/layer.geojson   WGS84 features for GIS tools
//!   layers/{layer_id}/geometry.json   union geometry in the dataset CRS
//!   layers/{layer_id}/scores.csv      record_id,score for every eligible record
//!   models/                           deposit models
//!   cache/embeddings/                 embedding cache
//! ```
//!
//! Every file is written through a temp file and renamed into place.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::depositmodel::ModelStore;
use crate::error::{Error, Result};
use crate::evidence::ScoredLayer;
use crate::fsutil::write_atomic;
use crate::geodata::{FocusArea, GeoDataset, RecordId};
use crate::geometry::MultiPolygon;
use crate::projection::Crs;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectSettings {
    pub default_provider: Option<String>,
    pub default_tau: Option<f64>,
    pub default_r1: Option<f64>,
    pub default_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub dataset_id: String,
    pub crs: Crs,
    pub record_count: usize,
    pub dissolved: bool,
    pub provenance: String,
    /// Dataset this one was derived from, with the operation used.
    pub parent: Option<String>,
    pub operation: String,
}

impl DatasetRef {
    pub fn of(ds: &GeoDataset, parent: Option<&str>, operation: &str) -> Self {
        DatasetRef {
            dataset_id: ds.dataset_id().to_string(),
            crs: ds.crs(),
            record_count: ds.count(),
            dissolved: ds.is_dissolved(),
            provenance: ds.provenance().to_string(),
            parent: parent.map(str::to_string),
            operation: operation.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub settings: ProjectSettings,
    pub datasets: Vec<DatasetRef>,
    pub layers: Vec<String>,
    pub focus_areas: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Evidence,
    Contact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerManifest {
    pub layer_id: String,
    pub kind: LayerKind,
    pub project_id: String,
    pub dataset_id: String,
    pub crs: Crs,
    pub created_at: DateTime<Utc>,
    pub feature_count: usize,
    /// Area of the layer geometry in CRS units (m² when projected).
    pub area: f64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deposit_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scored_layer_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eligible_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_record_ids: Vec<RecordId>,

    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_layer_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc_segments: Option<u32>,
}

impl LayerManifest {
    pub fn new(layer_id: &str, kind: LayerKind, project_id: &str, dataset_id: &str, crs: Crs) -> Self {
        LayerManifest {
            layer_id: layer_id.to_string(),
            kind,
            project_id: project_id.to_string(),
            dataset_id: dataset_id.to_string(),
            crs,
            created_at: Utc::now(),
            feature_count: 0,
            area: 0.0,
            query: None,
            deposit_type: None,
            characteristic: None,
            provider_id: None,
            model_name: None,
            tau: None,
            scored_layer_id: None,
            eligible_count: None,
            excluded_count: None,
            excluded_record_ids: Vec::new(),
            input_layer_ids: Vec::new(),
            r1: None,
            r2: None,
            arc_segments: None,
        }
    }
}

/// Everything a layer is written with.
pub struct LayerFiles<'a> {
    pub manifest: LayerManifest,
    pub features: &'a geojson::FeatureCollection,
    pub geometry: &'a MultiPolygon,
    pub scores: Option<&'a [(RecordId, f64)]>,
}

/// Ids become path components, so keep them to a safe alphabet.
pub fn check_id(kind: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::input(format!("invalid {kind} id {id:?}")))
    }
}

pub struct ProjectStore {
    root: PathBuf,
    models: ModelStore,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    datasets: Mutex<HashMap<String, Arc<GeoDataset>>>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::not_found(format!("{} does not exist", path.display()))
        } else {
            Error::io(path, e)
        }
    })?;
    serde_json::from_str(&text).map_err(|e| Error::from_json(&path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

impl ProjectStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        ProjectStore {
            models: ModelStore::new(root.join("models")),
            root,
            locks: Mutex::new(HashMap::new()),
            datasets: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn models(&self) -> &ModelStore {
        &self.models
    }

    fn project_dir(&self, pid: &str) -> PathBuf {
        self.root.join("projects").join(pid)
    }

    fn layer_dir(&self, layer_id: &str) -> PathBuf {
        self.root.join("layers").join(layer_id)
    }

    fn lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(key.to_string()).or_default().clone()
    }

    /// Run `f` while holding the write lock of one project.
    pub fn with_project_lock<T>(&self, pid: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let lock = self.lock(pid);
        let _g = lock.lock().unwrap_or_else(|p| p.into_inner());
        f()
    }

    pub fn create_project(&self, name: &str, settings: ProjectSettings) -> Result<Project> {
        let id = format!("p-{:016x}", rand::rng().random::<u64>());
        self.create_project_with_id(&id, name, settings)
    }

    pub fn create_project_with_id(&self, pid: &str, name: &str, settings: ProjectSettings) -> Result<Project> {
        check_id("project", pid)?;
        self.with_project_lock(pid, || {
            let path = self.project_dir(pid).join("project.json");
            if path.exists() {
                return Err(Error::state(format!("project {pid} already exists")));
            }
            let p = Project {
                project_id: pid.to_string(),
                name: name.to_string(),
                created_at: Utc::now(),
                settings,
                datasets: Vec::new(),
                layers: Vec::new(),
                focus_areas: Vec::new(),
            };
            write_json(&path, &p)?;
            Ok(p)
        })
    }

    /// Existing project, or a fresh one with this id.
    pub fn ensure_project(&self, pid: &str) -> Result<Project> {
        match self.project(pid) {
            Err(Error::NotFound(_)) => match self.create_project_with_id(pid, pid, ProjectSettings::default()) {
                Err(Error::State(_)) => self.project(pid),
                other => other,
            },
            other => other,
        }
    }

    pub fn project(&self, pid: &str) -> Result<Project> {
        check_id("project", pid)?;
        read_json(&self.project_dir(pid).join("project.json"))
            .map_err(|e| match e {
                Error::NotFound(_) => Error::not_found(format!("project {pid}")),
                e => e,
            })
    }

    pub fn projects(&self) -> Result<Vec<Project>> {
        let dir = self.root.join("projects");
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("project.json").is_file())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        ids.sort();
        ids.iter().map(|id| self.project(id)).collect()
    }

    fn update_project(&self, pid: &str, f: impl FnOnce(&mut Project)) -> Result<Project> {
        self.with_project_lock(pid, || {
            let mut p = self.project(pid)?;
            f(&mut p);
            write_json(&self.project_dir(pid).join("project.json"), &p)?;
            Ok(p)
        })
    }

    // Datasets

    pub fn save_dataset(&self, pid: &str, ds: &GeoDataset, parent: Option<&str>, operation: &str) -> Result<DatasetRef> {
        check_id("dataset", ds.dataset_id())?;
        self.project(pid)?;
        let path = self.root.join("datasets").join(format!("{}.json", ds.dataset_id()));
        if path.exists() {
            if *self.dataset_by_id(ds.dataset_id())? != *ds {
                return Err(Error::state(format!(
                    "dataset id {} is already used by different content",
                    ds.dataset_id()
                )));
            }
        } else {
            write_atomic(&path, &serde_json::to_vec(ds)?)?;
        }
        self.datasets
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(ds.dataset_id().to_string(), Arc::new(ds.clone()));
        let r = DatasetRef::of(ds, parent, operation);
        let rr = r.clone();
        self.update_project(pid, move |p| {
            if !p.datasets.iter().any(|d| d.dataset_id == rr.dataset_id) {
                p.datasets.push(rr);
            }
        })?;
        Ok(r)
    }

    /// A dataset registered with the project.
    pub fn dataset(&self, pid: &str, dataset_id: &str) -> Result<Arc<GeoDataset>> {
        check_id("dataset", dataset_id)?;
        let p = self.project(pid)?;
        if !p.datasets.iter().any(|d| d.dataset_id == dataset_id) {
            return Err(Error::not_found(format!("dataset {dataset_id} in project {pid}")));
        }
        self.dataset_by_id(dataset_id)
    }

    pub fn dataset_by_id(&self, dataset_id: &str) -> Result<Arc<GeoDataset>> {
        check_id("dataset", dataset_id)?;
        if let Some(ds) = self.datasets.lock().unwrap_or_else(|p| p.into_inner()).get(dataset_id) {
            return Ok(ds.clone());
        }
        let ds: GeoDataset = read_json(&self.root.join("datasets").join(format!("{dataset_id}.json")))
            .map_err(|e| match e {
                Error::NotFound(_) => Error::not_found(format!("dataset {dataset_id}")),
                e => e,
            })?;
        let ds = Arc::new(ds);
        self.datasets
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(dataset_id.to_string(), ds.clone());
        Ok(ds)
    }

    // Layers

    /// Write a layer unless one with the same id already exists; layers
    /// are immutable. Returns the stored manifest either way.
    pub fn save_layer(&self, files: LayerFiles<'_>) -> Result<LayerManifest> {
        let id = files.manifest.layer_id.clone();
        check_id("layer", &id)?;
        let pid = files.manifest.project_id.clone();
        let lock = self.lock(&format!("layer:{id}"));
        let _g = lock.lock().unwrap_or_else(|p| p.into_inner());
        let manifest = match self.layer_manifest(&id) {
            Ok(m) => m,
            Err(Error::NotFound(_)) => {
                let dir = self.layer_dir(&id);
                write_atomic(&dir.join("layer.geojson"), serde_json::to_string(files.features)?.as_bytes())?;
                write_atomic(&dir.join("geometry.json"), &serde_json::to_vec(files.geometry)?)?;
                if let Some(scores) = files.scores {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["record_id", "score"]).map_err(|e| Error::Input(e.to_string()))?;
                    for (id, s) in scores {
                        w.write_record([id.to_string(), s.to_string()])
                            .map_err(|e| Error::Input(e.to_string()))?;
                    }
                    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
                    write_atomic(&dir.join("scores.csv"), &bytes)?;
                }
                write_json(&dir.join("manifest.json"), &files.manifest)?;
                files.manifest
            }
            Err(e) => return Err(e),
        };
        self.update_project(&pid, |p| {
            if !p.layers.contains(&id) {
                p.layers.push(id.clone());
            }
        })?;
        Ok(manifest)
    }

    pub fn layer_manifest(&self, layer_id: &str) -> Result<LayerManifest> {
        check_id("layer", layer_id)?;
        read_json(&self.layer_dir(layer_id).join("manifest.json")).map_err(|e| match e {
            Error::NotFound(_) => Error::not_found(format!("layer {layer_id}")),
            e => e,
        })
    }

    pub fn layer_geometry(&self, layer_id: &str) -> Result<(LayerManifest, MultiPolygon)> {
        let m = self.layer_manifest(layer_id)?;
        let g: MultiPolygon = read_json(&self.layer_dir(layer_id).join("geometry.json"))?;
        Ok((m, g))
    }

    pub fn layer_geojson_text(&self, layer_id: &str) -> Result<String> {
        self.layer_manifest(layer_id)?;
        let path = self.layer_dir(layer_id).join("layer.geojson");
        fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }

    pub fn layer_features(&self, layer_id: &str) -> Result<geojson::FeatureCollection> {
        let text = self.layer_geojson_text(layer_id)?;
        crate::geojson_io::parse_feature_collection(&text, layer_id)
    }

    /// Scores of an evidence layer, rebuilt into the scored layer they came
    /// from.
    pub fn layer_scores(&self, layer_id: &str) -> Result<ScoredLayer> {
        let m = self.layer_manifest(layer_id)?;
        if m.kind != LayerKind::Evidence {
            return Err(Error::input(format!("layer {layer_id} is not an evidence layer")));
        }
        let path = self.layer_dir(layer_id).join("scores.csv");
        let name = path.display().to_string();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut scores = Vec::new();
        for row in reader.deserialize::<(RecordId, f64)>() {
            scores.push(row.map_err(|e| Error::from_csv(&name, e))?);
        }
        scores.sort_by_key(|s| s.0);
        Ok(ScoredLayer {
            layer_id: m.scored_layer_id.clone().unwrap_or_default(),
            dataset_id: m.dataset_id.clone(),
            query: m.query.clone().unwrap_or_default(),
            provider_id: m.provider_id.clone().unwrap_or_default(),
            model_name: m.model_name.clone().unwrap_or_default(),
            scores,
            excluded: m.excluded_record_ids.clone(),
            created_at: m.created_at,
        })
    }

    // Focus areas

    fn focus_path(&self, pid: &str, name: &str) -> PathBuf {
        self.project_dir(pid)
            .join("focus")
            .join(format!("{}.json", crate::depositmodel::slug(name)))
    }

    pub fn save_focus_area(&self, pid: &str, area: &FocusArea) -> Result<()> {
        if crate::depositmodel::slug(&area.name).is_empty() {
            return Err(Error::input("focus area needs a name"));
        }
        self.project(pid)?;
        write_json(&self.focus_path(pid, &area.name), area)?;
        let name = area.name.clone();
        self.update_project(pid, |p| {
            if !p.focus_areas.contains(&name) {
                p.focus_areas.push(name);
            }
        })?;
        Ok(())
    }

    pub fn focus_area(&self, pid: &str, name: &str) -> Result<FocusArea> {
        self.project(pid)?;
        read_json(&self.focus_path(pid, name)).map_err(|e| match e {
            Error::NotFound(_) => Error::not_found(format!("focus area {name:?} in project {pid}")),
            e => e,
        })
    }

    pub fn focus_areas(&self, pid: &str) -> Result<Vec<FocusArea>> {
        let p = self.project(pid)?;
        p.focus_areas.iter().map(|n| self.focus_area(pid, n)).collect()
    }

    // Replayable requests

    pub fn request_result<T: DeserializeOwned>(&self, pid: &str, request_id: &str) -> Result<Option<T>> {
        check_id("request", request_id)?;
        let path = self.project_dir(pid).join("requests").join(format!("{request_id}.json"));
        match read_json(&path) {
            Ok(v) => Ok(Some(v)),
            Err(Error::NotFound(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn save_request_result<T: Serialize>(&self, pid: &str, request_id: &str, value: &T) -> Result<()> {
        check_id("request", request_id)?;
        write_json(&self.project_dir(pid).join("requests").join(format!("{request_id}.json")), value)
    }

    /// Return the stored result for `request_id`, or run `f` once and store
    /// its result. Concurrent replays of one id are serialized.
    pub fn idempotent<T, F>(&self, pid: &str, request_id: Option<&str>, f: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let Some(rid) = request_id else {
            return f();
        };
        check_id("request", rid)?;
        self.project(pid)?;
        let lock = self.lock(&format!("request:{pid}:{rid}"));
        let _g = lock.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(v) = self.request_result(pid, rid)? {
            return Ok(v);
        }
        let v = f()?;
        self.save_request_result(pid, rid, &v)?;
        Ok(v)
    }

    // Generic JSON artifacts (job records, results)

    pub fn save_artifact<T: Serialize>(&self, kind: &str, id: &str, value: &T) -> Result<PathBuf> {
        check_id(kind, id)?;
        let path = self.root.join(kind).join(format!("{id}.json"));
        write_json(&path, value)?;
        Ok(path)
    }

    /// Ids of every stored artifact of one kind, sorted.
    pub fn artifact_ids(&self, kind: &str) -> Result<Vec<String>> {
        let dir = self.root.join(kind);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".json").map(str::to_string))
            .filter(|id| !id.starts_with('.'))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn artifact<T: DeserializeOwned>(&self, kind: &str, id: &str) -> Result<T> {
        check_id(kind, id)?;
        read_json(&self.root.join(kind).join(format!("{id}.json"))).map_err(|e| match e {
            Error::NotFound(_) => Error::not_found(format!("{kind} {id}")),
            e => e,
        })
    }
}
