//! One entry point per user-facing operation, shared by the HTTP service and
//! the command line. Requests and outcomes are plain serde types; outcomes
//! carry no timestamps so repeated runs serialize identically.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::contact::{find_contact, ContactParams, LayerGeometry};
use crate::depositmodel::{
    summarize_document, validate_model, DepositModel, Diagnostic, HttpLlm, LlmProvider,
    DEFAULT_PROMPT_TEMPLATE,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    area_metrics, baseline_curves, grid_search, recall_curve_union, site_coverage, AreaMetrics,
    Baselines, GridSearchResult, GridSpec, OracleMode, RecallCurve,
};
use crate::evidence::{
    check_tau, layer_histogram, select_top, score_dataset, tau_from_percentile, HistogramBin,
    ScoredLayer,
};
use crate::geodata::{
    clip_to_focus, dissolve, parse_dataset, parse_sites, project_dataset, DissolveReport, FocusArea,
    GeoDataset, IngestConfig, IngestReport, RecordId,
};
use crate::geojson_io::{self, feature, geometry_to_geojson, record_properties};
use crate::geometry::{self, MultiPolygon};
use crate::ids::content_id;
use crate::project::{DatasetRef, LayerFiles, LayerKind, LayerManifest, Project, ProjectStore};
use crate::projection::{AlbersParams, Crs};

pub const DEFAULT_HISTOGRAM_BINS: usize = 10;
pub const DEFAULT_TRIALS: usize = 10;

/// A document given inline (a JSON value, or a string holding the text) or
/// by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Path { path: PathBuf },
    Inline(serde_json::Value),
}

impl Source {
    pub fn path(p: impl Into<PathBuf>) -> Self {
        Source::Path { path: p.into() }
    }

    pub fn text(t: impl Into<String>) -> Self {
        Source::Inline(serde_json::Value::String(t.into()))
    }

    /// (text, name used in error messages)
    pub fn read(&self, what: &str) -> Result<(String, String)> {
        match self {
            Source::Path { path } => Ok((geojson_io::read_text(path)?, path.display().to_string())),
            Source::Inline(serde_json::Value::String(s)) => Ok((s.clone(), format!("inline {what}"))),
            Source::Inline(v) => Ok((v.to_string(), format!("inline {what}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestRequest {
    /// Polygon FeatureCollection.
    pub geojson: Option<Source>,
    /// Download the FeatureCollection instead; `sha256` must then match.
    pub geojson_url: Option<String>,
    pub sha256: Option<String>,
    /// Optional attribute table joined on `config.join_column`.
    pub attributes: Option<Source>,
    pub config: IngestConfig,
    pub dissolve: bool,
    /// Project to Albers with the configured parameters.
    pub project: bool,
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    /// The final dataset after the optional dissolve and projection.
    pub dataset_id: String,
    /// Every dataset created, first to last.
    pub datasets: Vec<DatasetRef>,
    pub report: IngestReport,
    pub dissolve_report: Option<DissolveReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum DeriveOp {
    Dissolve,
    Project,
    Clip { focus_area: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeriveRequest {
    pub dataset_id: String,
    #[serde(flatten)]
    pub op: DeriveOp,
    #[serde(default)]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeriveOutcome {
    pub dataset: DatasetRef,
    pub dissolve_report: Option<DissolveReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryRequest {
    pub dataset_id: String,
    /// Custom mode.
    pub query: Option<String>,
    /// Deposit-model mode: both must be set.
    pub deposit_type: Option<String>,
    pub characteristic: Option<String>,
    /// Fraction kept; alternatively `percentile` p keeps the top (100 − p)%.
    pub tau: Option<f64>,
    pub percentile: Option<f64>,
    pub provider_id: Option<String>,
    pub bins: Option<usize>,
    /// Clip the dataset to this saved focus area first.
    pub focus_area: Option<String>,
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub layer_id: String,
    pub dataset_id: String,
    pub query: String,
    pub tau: f64,
    pub selected_count: usize,
    pub eligible_count: usize,
    pub excluded_count: usize,
    pub area: f64,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactRequest {
    pub layer_ids: Vec<String>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub arc_segments: Option<u32>,
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactOutcome {
    pub layer_id: String,
    pub input_layer_ids: Vec<String>,
    pub r1: f64,
    pub r2: f64,
    pub area: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSitesRequest {
    /// Evidence layers whose full rankings are merged.
    pub layer_ids: Vec<String>,
    pub sites: Source,
    #[serde(default = "default_buffers")]
    pub buffers_m: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub oracle_mode: OracleMode,
}

fn default_buffers() -> Vec<f64> {
    vec![0.0]
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitesCurves {
    pub buffer_m: f64,
    pub method: RecallCurve,
    pub baselines: Baselines,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSitesOutcome {
    pub dataset_id: String,
    pub n_sites: usize,
    pub curves: Vec<SitesCurves>,
}

/// Reference tracts: a GeoJSON document in WGS84 or an existing layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Geojson(Source),
    LayerId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTractsRequest {
    pub pred_layer_id: String,
    pub truth: Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchRequest {
    /// Evidence layers whose scores are re-thresholded; one τ list each.
    pub layer_ids: Vec<String>,
    pub truth: Truth,
    pub taus: Vec<Vec<f64>>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    #[serde(default)]
    pub arc_segments: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelValidation {
    pub deposit_type: String,
    pub diagnostics: Vec<Diagnostic>,
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeRequest {
    pub deposit_type: String,
    pub document: Source,
    #[serde(default)]
    pub prompt_template: Option<String>,
    /// Store the result as the current model for its type.
    #[serde(default)]
    pub save: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreFilter {
    pub score_min: Option<f64>,
    pub score_max: Option<f64>,
}

impl ScoreFilter {
    pub fn is_open(&self) -> bool {
        self.score_min.is_none() && self.score_max.is_none()
    }

    /// Bounds are inclusive. Features without a score pass only an open
    /// filter.
    pub fn keeps(&self, score: Option<f64>) -> bool {
        match score {
            None => self.is_open(),
            Some(s) => self.score_min.is_none_or(|lo| s >= lo) && self.score_max.is_none_or(|hi| s <= hi),
        }
    }
}

pub struct Workspace {
    config: Config,
    store: ProjectStore,
    llm: Option<Arc<dyn LlmProvider>>,
}

impl Workspace {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let llm: Option<Arc<dyn LlmProvider>> = match &config.llm_endpoint {
            Some(e) => Some(Arc::new(HttpLlm::new(e)?)),
            None => None,
        };
        Ok(Workspace {
            store: ProjectStore::new(config.data_dir.clone()),
            config,
            llm,
        })
    }

    pub fn with_llm(mut self, llm: Arc<dyn LlmProvider>) -> Self {
        self.llm = Some(llm);
        self
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &ProjectStore {
        &self.store
    }

    fn albers(&self) -> AlbersParams {
        self.config.albers_params()
    }

    // Datasets

    pub fn ingest(&self, pid: &str, req: &IngestRequest) -> Result<IngestOutcome> {
        self.store
            .idempotent(pid, req.request_id.as_deref(), || self.ingest_now(pid, req))
    }

    fn ingest_now(&self, pid: &str, req: &IngestRequest) -> Result<IngestOutcome> {
        let (gj_text, gj_name) = match (&req.geojson, &req.geojson_url) {
            (Some(src), None) => src.read("geojson")?,
            (None, Some(url)) => (fetch_verified(url, req.sha256.as_deref())?, url.clone()),
            _ => return Err(Error::input("give exactly one of geojson or geojson_url")),
        };
        let attrs = req.attributes.as_ref().map(|s| s.read("attributes")).transpose()?;
        let provenance = match &attrs {
            Some((_, name)) => format!("attributes: {name}; geometry: {gj_name}"),
            None => format!("geometry: {gj_name}"),
        };
        let (ds, report) = parse_dataset(
            attrs.as_ref().map(|(t, n)| (t.as_str(), n.as_str())),
            (&gj_text, &gj_name),
            &req.config,
            &provenance,
        )?;
        let mut datasets = vec![self.store.save_dataset(pid, &ds, None, "ingest")?];
        let mut current = ds;
        let mut dissolve_report = None;
        if req.dissolve {
            let (d, r) = dissolve(&current);
            datasets.push(self.store.save_dataset(pid, &d, Some(current.dataset_id()), "dissolve")?);
            dissolve_report = Some(r);
            current = d;
        }
        if req.project {
            let p = self.project_now(&current)?;
            datasets.push(self.store.save_dataset(pid, &p, Some(current.dataset_id()), "project")?);
            current = p;
        }
        Ok(IngestOutcome {
            dataset_id: current.dataset_id().to_string(),
            datasets,
            report,
            dissolve_report,
        })
    }

    fn project_now(&self, ds: &GeoDataset) -> Result<GeoDataset> {
        let params = self.albers();
        let out = project_dataset(ds, &params)?;
        if params == AlbersParams::default() {
            return Ok(out);
        }
        let tag = content_id(
            "p",
            &[
                &params.lat1.to_le_bytes(),
                &params.lat2.to_le_bytes(),
                &params.lat0.to_le_bytes(),
                &params.lon0.to_le_bytes(),
                &params.radius.to_le_bytes(),
            ],
        );
        let id = format!("{}-{tag}", out.dataset_id());
        Ok(out.with_id(id))
    }

    pub fn derive(&self, pid: &str, req: &DeriveRequest) -> Result<DeriveOutcome> {
        self.store.idempotent(pid, req.request_id.as_deref(), || {
            let ds = self.store.dataset(pid, &req.dataset_id)?;
            let (out, op, dissolve_report) = match &req.op {
                DeriveOp::Dissolve => {
                    let (d, r) = dissolve(&ds);
                    (d, "dissolve", Some(r))
                }
                DeriveOp::Project => (self.project_now(&ds)?, "project", None),
                DeriveOp::Clip { focus_area } => {
                    let f = self.store.focus_area(pid, focus_area)?;
                    (clip_to_focus(&ds, &f)?, "clip", None)
                }
            };
            let dataset = self.store.save_dataset(pid, &out, Some(ds.dataset_id()), op)?;
            Ok(DeriveOutcome {
                dataset,
                dissolve_report,
            })
        })
    }

    pub fn datasets(&self, pid: &str) -> Result<Vec<DatasetRef>> {
        Ok(self.store.project(pid)?.datasets)
    }

    // Evidence layers

    pub fn query(&self, pid: &str, req: &QueryRequest) -> Result<QueryOutcome> {
        self.store
            .idempotent(pid, req.request_id.as_deref(), || self.query_now(pid, req))
    }

    fn query_text(&self, req: &QueryRequest) -> Result<String> {
        match (&req.query, &req.deposit_type, &req.characteristic) {
            (Some(q), None, None) => Ok(q.clone()),
            (None, Some(t), Some(c)) => {
                let model = self.store.models().get(t)?;
                model
                    .characteristic(c)
                    .map(str::to_string)
                    .ok_or_else(|| Error::not_found(format!("deposit model {t:?} has no characteristic {c:?}")))
            }
            (None, Some(_), None) | (None, None, Some(_)) => Err(Error::input(
                "deposit-model queries need both deposit_type and characteristic",
            )),
            (None, None, None) => Err(Error::input("give a query or a deposit_type and characteristic")),
            _ => Err(Error::input(
                "give either a query or a deposit_type and characteristic, not both",
            )),
        }
    }

    fn resolve_tau(&self, project: &Project, tau: Option<f64>, percentile: Option<f64>) -> Result<f64> {
        let tau = match (tau, percentile) {
            (Some(t), None) => t,
            (None, Some(p)) => tau_from_percentile(p)?,
            (None, None) => project.settings.default_tau.unwrap_or(self.config.default_tau),
            (Some(_), Some(_)) => return Err(Error::input("give tau or percentile, not both")),
        };
        check_tau(tau)?;
        Ok(tau)
    }

    fn query_now(&self, pid: &str, req: &QueryRequest) -> Result<QueryOutcome> {
        let project = self.store.project(pid)?;
        let text = self.query_text(req)?;
        let tau = self.resolve_tau(&project, req.tau, req.percentile)?;
        let bins = req.bins.unwrap_or(DEFAULT_HISTOGRAM_BINS);
        let mut ds = self.store.dataset(pid, &req.dataset_id)?;
        if let Some(name) = &req.focus_area {
            let f = self.store.focus_area(pid, name)?;
            let clipped = clip_to_focus(&ds, &f)?;
            self.store.save_dataset(pid, &clipped, Some(ds.dataset_id()), "clip")?;
            ds = Arc::new(clipped);
        }
        let provider = req
            .provider_id
            .as_deref()
            .or(project.settings.default_provider.as_deref());
        let embedder = self.config.embedder(provider)?;
        let scored = score_dataset(&ds, &text, &embedder)?;
        let histogram = layer_histogram(&scored.score_values(), bins)?;
        let evidence = select_top(&scored, tau, &ds)?;

        let mut features = Vec::with_capacity(evidence.selected.len());
        for (rank, &(id, score)) in evidence.selected.iter().enumerate() {
            let rec = ds
                .record(id)
                .ok_or_else(|| Error::state(format!("record {id} missing from {}", ds.dataset_id())))?;
            let mut props = record_properties(&ds, rec);
            props.insert("score".into(), score.into());
            props.insert("rank".into(), (rank as u64 + 1).into());
            props.insert("layer_id".into(), evidence.layer_id.clone().into());
            let g = geojson_io::to_wgs84(&rec.geometry, ds.crs())?;
            features.push(feature(geometry_to_geojson(&g), props));
        }
        let fc = geojson::FeatureCollection::new(features);

        let mut m = LayerManifest::new(&evidence.layer_id, LayerKind::Evidence, pid, ds.dataset_id(), ds.crs());
        m.feature_count = evidence.selected.len();
        m.area = geometry::area(&evidence.geometry);
        m.query = Some(scored.query.clone());
        m.deposit_type = req.query.is_none().then(|| req.deposit_type.clone()).flatten();
        m.characteristic = req.query.is_none().then(|| req.characteristic.clone()).flatten();
        m.provider_id = Some(scored.provider_id.clone());
        m.model_name = Some(scored.model_name.clone());
        m.tau = Some(tau);
        m.scored_layer_id = Some(scored.layer_id.clone());
        m.eligible_count = Some(scored.eligible());
        m.excluded_count = Some(scored.excluded.len());
        m.excluded_record_ids = scored.excluded.clone();
        let stored = self.store.save_layer(LayerFiles {
            manifest: m,
            features: &fc,
            geometry: &evidence.geometry,
            scores: Some(&scored.scores),
        })?;
        Ok(QueryOutcome {
            layer_id: stored.layer_id,
            dataset_id: stored.dataset_id,
            query: scored.query,
            tau,
            selected_count: stored.feature_count,
            eligible_count: scored.scores.len(),
            excluded_count: scored.excluded.len(),
            area: stored.area,
            histogram,
        })
    }

    // Contact

    pub fn contact(&self, pid: &str, req: &ContactRequest) -> Result<ContactOutcome> {
        self.store.idempotent(pid, req.request_id.as_deref(), || {
            let project = self.store.project(pid)?;
            let params = ContactParams {
                r1: req.r1.or(project.settings.default_r1).unwrap_or(self.config.default_r1),
                r2: req.r2.or(project.settings.default_r2).unwrap_or(self.config.default_r2),
                arc_segments: req.arc_segments.unwrap_or(geometry::DEFAULT_ARC_SEGMENTS),
            };
            let loaded: Vec<(LayerManifest, MultiPolygon)> = req
                .layer_ids
                .iter()
                .map(|id| self.store.layer_geometry(id))
                .collect::<Result<_>>()?;
            let inputs: Vec<LayerGeometry<'_>> = loaded
                .iter()
                .map(|(m, g)| LayerGeometry {
                    layer_id: &m.layer_id,
                    crs: m.crs,
                    geometry: g,
                })
                .collect();
            let derived = find_contact(&inputs, &params)?;

            let mut props = geojson::JsonObject::new();
            props.insert("layer_id".into(), derived.layer_id.clone().into());
            props.insert("r1".into(), params.r1.into());
            props.insert("r2".into(), params.r2.into());
            let features = if geometry::is_empty(&derived.geometry) {
                Vec::new()
            } else {
                let g = geojson_io::to_wgs84(&derived.geometry, derived.crs)?;
                vec![feature(geometry_to_geojson(&g), props)]
            };
            let fc = geojson::FeatureCollection::new(features);
            let mut m = LayerManifest::new(
                &derived.layer_id,
                LayerKind::Contact,
                pid,
                &loaded[0].0.dataset_id,
                derived.crs,
            );
            m.feature_count = fc.features.len();
            m.area = geometry::area(&derived.geometry);
            m.input_layer_ids = derived.input_layer_ids.clone();
            m.r1 = Some(params.r1);
            m.r2 = Some(params.r2);
            m.arc_segments = Some(params.arc_segments);
            let stored = self.store.save_layer(LayerFiles {
                manifest: m,
                features: &fc,
                geometry: &derived.geometry,
                scores: None,
            })?;
            Ok(ContactOutcome {
                layer_id: stored.layer_id,
                input_layer_ids: stored.input_layer_ids,
                r1: params.r1,
                r2: params.r2,
                area: stored.area,
                empty: stored.feature_count == 0,
            })
        })
    }

    // Layers

    pub fn layers(&self, pid: &str) -> Result<Vec<LayerManifest>> {
        let p = self.store.project(pid)?;
        p.layers.iter().map(|id| self.store.layer_manifest(id)).collect()
    }

    pub fn layer(&self, layer_id: &str) -> Result<LayerManifest> {
        self.store.layer_manifest(layer_id)
    }

    pub fn histogram(&self, layer_id: &str, bins: Option<usize>) -> Result<Vec<HistogramBin>> {
        let scored = self.store.layer_scores(layer_id)?;
        layer_histogram(&scored.score_values(), bins.unwrap_or(DEFAULT_HISTOGRAM_BINS))
    }

    /// Stored WGS84 features with score in `[score_min, score_max]`.
    pub fn export(&self, layer_id: &str, filter: ScoreFilter) -> Result<geojson::FeatureCollection> {
        if let (Some(lo), Some(hi)) = (filter.score_min, filter.score_max) {
            if lo > hi {
                return Err(Error::input(format!("score_min {lo} exceeds score_max {hi}")));
            }
        }
        let mut fc = self.store.layer_features(layer_id)?;
        if !filter.is_open() {
            fc.features
                .retain(|f| filter.keeps(f.property("score").and_then(serde_json::Value::as_f64)));
        }
        Ok(fc)
    }

    // Evaluation

    fn evidence_scores(&self, layer_ids: &[String]) -> Result<(Arc<GeoDataset>, Vec<ScoredLayer>)> {
        if layer_ids.is_empty() {
            return Err(Error::input("no layers given"));
        }
        let scored: Vec<ScoredLayer> = layer_ids
            .iter()
            .map(|id| self.store.layer_scores(id))
            .collect::<Result<_>>()?;
        let dataset_id = &scored[0].dataset_id;
        if let Some(other) = scored.iter().find(|s| &s.dataset_id != dataset_id) {
            return Err(Error::input(format!(
                "layers come from different datasets ({dataset_id} and {})",
                other.dataset_id
            )));
        }
        Ok((self.store.dataset_by_id(dataset_id)?, scored))
    }

    pub fn eval_sites(&self, req: &EvalSitesRequest) -> Result<EvalSitesOutcome> {
        let (ds, scored) = self.evidence_scores(&req.layer_ids)?;
        let (text, name) = req.sites.read("sites")?;
        let (sites, _) = parse_sites(&text, &name)?;
        let rankings: Vec<Vec<RecordId>> = scored.iter().map(ScoredLayer::ranking).collect();
        let refs: Vec<&[RecordId]> = rankings.iter().map(Vec::as_slice).collect();
        let mut curves = Vec::with_capacity(req.buffers_m.len());
        for &b in &req.buffers_m {
            let coverage = site_coverage(&ds, &sites, b)?;
            let method = recall_curve_union(&refs, &coverage)?;
            let baselines = baseline_curves(&ds, &sites, req.trials, req.seed, b, req.oracle_mode)?;
            curves.push(SitesCurves {
                buffer_m: b,
                method,
                baselines,
            });
        }
        Ok(EvalSitesOutcome {
            dataset_id: ds.dataset_id().to_string(),
            n_sites: sites.len(),
            curves,
        })
    }

    fn truth_geometry(&self, truth: &Truth, crs: Crs) -> Result<(String, Crs, MultiPolygon)> {
        match truth {
            Truth::LayerId(id) => {
                let (m, g) = self.store.layer_geometry(id)?;
                Ok((m.layer_id, m.crs, g))
            }
            Truth::Geojson(src) => {
                let (text, name) = src.read("truth")?;
                let g = geojson_io::read_polygonal(&text, &name)?;
                Ok((name, crs, geojson_io::from_wgs84(&g, crs)?))
            }
        }
    }

    pub fn eval_tracts(&self, req: &EvalTractsRequest) -> Result<AreaMetrics> {
        let (pm, pg) = self.store.layer_geometry(&req.pred_layer_id)?;
        let (tid, tcrs, tg) = self.truth_geometry(&req.truth, pm.crs)?;
        area_metrics(
            LayerGeometry {
                layer_id: &pm.layer_id,
                crs: pm.crs,
                geometry: &pg,
            },
            LayerGeometry {
                layer_id: &tid,
                crs: tcrs,
                geometry: &tg,
            },
        )
    }

    pub fn grid_search(&self, req: &GridSearchRequest) -> Result<GridSearchResult> {
        let (ds, scored) = self.evidence_scores(&req.layer_ids)?;
        let (tid, tcrs, tg) = self.truth_geometry(&req.truth, ds.crs())?;
        let spec = GridSpec {
            taus: req.taus.clone(),
            r1: req.r1.clone(),
            r2: req.r2.clone(),
            arc_segments: req.arc_segments.unwrap_or(geometry::DEFAULT_ARC_SEGMENTS),
        };
        let refs: Vec<&ScoredLayer> = scored.iter().collect();
        grid_search(
            &ds,
            &refs,
            LayerGeometry {
                layer_id: &tid,
                crs: tcrs,
                geometry: &tg,
            },
            &spec,
        )
    }

    // Focus areas

    pub fn save_focus_area(&self, pid: &str, area: &FocusArea, request_id: Option<&str>) -> Result<FocusArea> {
        self.store.idempotent(pid, request_id, || {
            // Revalidate: the ring may come straight from a request body.
            let area = FocusArea::new(area.name.clone(), area.ring.clone())?;
            self.store.save_focus_area(pid, &area)?;
            Ok(area)
        })
    }

    pub fn focus_areas(&self, pid: &str) -> Result<Vec<FocusArea>> {
        self.store.focus_areas(pid)
    }

    // Deposit models

    pub fn model(&self, deposit_type: &str) -> Result<DepositModel> {
        self.store.models().get(deposit_type)
    }

    pub fn models(&self) -> Result<Vec<DepositModel>> {
        self.store.models().list()
    }

    /// Store an edited model. Missing or empty characteristics are refused.
    pub fn put_model(&self, model: DepositModel) -> Result<DepositModel> {
        let v = validate(&model);
        if !v.usable {
            let msgs: Vec<String> = v
                .diagnostics
                .into_iter()
                .filter(Diagnostic::is_blocking)
                .map(|d| d.message)
                .collect();
            return Err(Error::Validation(msgs.join("; ")));
        }
        self.store.models().put(model)
    }

    pub fn validate_model(&self, model: &DepositModel) -> ModelValidation {
        validate(model)
    }

    pub fn summarize(&self, req: &SummarizeRequest) -> Result<DepositModel> {
        let llm = self
            .llm
            .as_ref()
            .ok_or_else(|| Error::Config("no llm_endpoint configured".into()))?;
        let (doc, _) = req.document.read("document")?;
        let template = req.prompt_template.as_deref().unwrap_or(DEFAULT_PROMPT_TEMPLATE);
        let model = summarize_document(&doc, &req.deposit_type, llm.as_ref(), template)?;
        if req.save {
            return self.store.models().put(model);
        }
        Ok(model)
    }
}

fn validate(model: &DepositModel) -> ModelValidation {
    let diagnostics = validate_model(model);
    ModelValidation {
        deposit_type: model.deposit_type.clone(),
        usable: !diagnostics.iter().any(Diagnostic::is_blocking),
        diagnostics,
    }
}

fn fetch_verified(url: &str, sha256: Option<&str>) -> Result<String> {
    let expected = sha256.ok_or_else(|| Error::input("URL ingest needs a sha256 checksum"))?;
    let provider_err = |message: String| Error::Provider {
        provider: url.to_string(),
        batch: 0,
        message,
        completed: 0,
    };
    let resp = reqwest::blocking::get(url).map_err(|e| provider_err(e.to_string()))?;
    if !resp.status().is_success() {
        return Err(provider_err(format!("status {}", resp.status())));
    }
    let bytes = resp.bytes().map_err(|e| provider_err(e.to_string()))?;
    let actual = hex::encode(Sha256::digest(&bytes));
    if !actual.eq_ignore_ascii_case(expected.trim()) {
        return Err(Error::input(format!(
            "checksum mismatch for {url}: expected {expected}, got {actual}"
        )));
    }
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::input(format!("{url} is not UTF-8")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_filter_bounds() {
        let open = ScoreFilter::default();
        assert!(open.keeps(None) && open.keeps(Some(-1.0)));
        let f = ScoreFilter {
            score_min: Some(0.8),
            score_max: Some(1.0),
        };
        let kept: Vec<f64> = [0.9, 0.5].into_iter().filter(|&s| f.keeps(Some(s))).collect();
        assert_eq!(kept, vec![0.9]);
        assert!(!f.keeps(None));
        assert!(f.keeps(Some(0.8)) && f.keeps(Some(1.0)));
    }

    #[test]
    fn source_forms() {
        let s: Source = serde_json::from_str(r#"{"path":"/x.geojson"}"#).unwrap();
        assert_eq!(s, Source::path("/x.geojson"));
        let s: Source = serde_json::from_str(r#"{"type":"FeatureCollection","features":[]}"#).unwrap();
        assert!(s.read("g").unwrap().0.contains("FeatureCollection"));
        let s: Source = serde_json::from_str(r#""a,b\n1,2""#).unwrap();
        assert_eq!(s.read("t").unwrap().0, "a,b\n1,2");
    }
}
