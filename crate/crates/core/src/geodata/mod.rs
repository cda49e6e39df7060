//! Polygon datasets: ingest, description building, dissolve, projection,
//! clipping, and point sites.

mod focus;
mod ingest;
mod ops;
mod sites;
mod text;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MultiPolygon;
use crate::projection::Crs;

pub use focus::FocusArea;
pub use ingest::{
    load_dataset, load_dataset_geojson, parse_dataset, IngestConfig, IngestReport,
    DEFAULT_JOIN_COLUMN, DEFAULT_KEY_COLUMNS, DEFAULT_MIN_DESC_LENGTH, DEFAULT_SIGNATURE_COLUMNS,
};
pub use ops::{clip_to_focus, dissolve, project_dataset, DissolveReport};
pub use sites::{load_sites, parse_sites, Site, SiteReport, SiteSet};
pub use text::{build_description, clean_description, DESCRIPTION_SEPARATOR};

pub type RecordId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRecord {
    pub record_id: RecordId,
    /// Values of the dataset's key columns, in key-column order.
    pub key: Vec<String>,
    /// All source attributes as (heading, value), in source column order.
    pub attributes: Vec<(String, String)>,
    pub geometry: MultiPolygon,
    pub full_desc: String,
}

impl PolygonRecord {
    pub fn attribute(&self, heading: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(h, _)| h == heading)
            .map(|(_, v)| v.as_str())
    }
}

/// Immutable snapshot of polygon records. Every transformation returns a
/// new dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoDataset {
    dataset_id: String,
    crs: Crs,
    signature_columns: Vec<String>,
    key_columns: Vec<String>,
    provenance: String,
    #[serde(default)]
    dissolved: bool,
    records: Vec<PolygonRecord>,
}

impl GeoDataset {
    pub fn new(
        dataset_id: impl Into<String>,
        crs: Crs,
        signature_columns: Vec<String>,
        key_columns: Vec<String>,
        provenance: impl Into<String>,
        mut records: Vec<PolygonRecord>,
    ) -> Result<Self> {
        records.sort_by_key(|r| r.record_id);
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.record_id) {
                return Err(Error::input(format!("duplicate record_id {}", r.record_id)));
            }
            if r.key.len() != key_columns.len() {
                return Err(Error::input(format!(
                    "record {} has {} key values for {} key columns",
                    r.record_id,
                    r.key.len(),
                    key_columns.len()
                )));
            }
        }
        Ok(GeoDataset {
            dataset_id: dataset_id.into(),
            crs,
            signature_columns,
            key_columns,
            provenance: provenance.into(),
            dissolved: false,
            records,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn crs(&self) -> Crs {
        self.crs
    }

    pub fn signature_columns(&self) -> &[String] {
        &self.signature_columns
    }

    pub fn key_columns(&self) -> &[String] {
        &self.key_columns
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn is_dissolved(&self) -> bool {
        self.dissolved
    }

    pub fn records(&self) -> &[PolygonRecord] {
        &self.records
    }

    pub fn count(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: RecordId) -> Option<&PolygonRecord> {
        // Records are kept sorted by id.
        self.records
            .binary_search_by_key(&id, |r| r.record_id)
            .ok()
            .map(|i| &self.records[i])
    }

    /// Copy with a different id and records; everything else carried over.
    pub(crate) fn derive(
        &self,
        dataset_id: String,
        crs: Crs,
        provenance: String,
        records: Vec<PolygonRecord>,
    ) -> GeoDataset {
        let mut records = records;
        records.sort_by_key(|r| r.record_id);
        GeoDataset {
            dataset_id,
            crs,
            signature_columns: self.signature_columns.clone(),
            key_columns: self.key_columns.clone(),
            provenance,
            dissolved: self.dissolved,
            records,
        }
    }

    pub fn with_id(mut self, dataset_id: impl Into<String>) -> GeoDataset {
        self.dataset_id = dataset_id.into();
        self
    }
}
