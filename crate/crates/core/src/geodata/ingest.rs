use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::text::{build_description, clean_description};
use super::{GeoDataset, PolygonRecord, RecordId};
use crate::error::{Error, Result};
use crate::geojson_io::{self, property_to_string, RESERVED_PROPERTIES};
use crate::projection::Crs;

pub const DEFAULT_SIGNATURE_COLUMNS: &[&str] = &[
    "UNIT_NAME",
    "MAJOR1",
    "MAJOR2",
    "MAJOR3",
    "MINOR1",
    "MINOR2",
    "MINOR3",
    "MINOR4",
    "MINOR5",
    "GENERALIZE",
    "UNITDESC",
];
pub const DEFAULT_KEY_COLUMNS: &[&str] = &["STATE", "ORIG_LABEL", "SGMC_LABEL", "UNIT_LINK"];
pub const DEFAULT_JOIN_COLUMN: &str = "UNIT_LINK";
pub const DEFAULT_MIN_DESC_LENGTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub signature_columns: Vec<String>,
    pub key_columns: Vec<String>,
    /// Cleaned descriptions shorter than this (in characters) are dropped.
    pub min_desc_length: usize,
    /// Column shared by the attribute table and the features' properties.
    pub join_column: String,
    /// Explicit id; derived from the inputs' content when absent.
    pub dataset_id: Option<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            signature_columns: DEFAULT_SIGNATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            key_columns: DEFAULT_KEY_COLUMNS.iter().map(|s| s.to_string()).collect(),
            min_desc_length: DEFAULT_MIN_DESC_LENGTH,
            join_column: DEFAULT_JOIN_COLUMN.to_string(),
            dataset_id: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub ingested: usize,
    pub dropped_short: usize,
    pub dropped_record_ids: Vec<RecordId>,
    pub auto_closed_rings: usize,
    pub warnings: Vec<String>,
}

/// Join a CSV attribute table onto GeoJSON polygons.
pub fn load_dataset(
    attribute_table: &Path,
    geometry: &Path,
    config: &IngestConfig,
) -> Result<(GeoDataset, IngestReport)> {
    let csv_text = geojson_io::read_text(attribute_table)?;
    let gj_text = geojson_io::read_text(geometry)?;
    let provenance = format!(
        "attributes: {}; geometry: {}",
        attribute_table.display(),
        geometry.display()
    );
    parse_dataset(
        Some((&csv_text, &attribute_table.display().to_string())),
        (&gj_text, &geometry.display().to_string()),
        config,
        &provenance,
    )
}

/// Ingest a FeatureCollection whose properties already carry the attributes
/// (for example a previous export).
pub fn load_dataset_geojson(
    geometry: &Path,
    config: &IngestConfig,
) -> Result<(GeoDataset, IngestReport)> {
    let gj_text = geojson_io::read_text(geometry)?;
    let name = geometry.display().to_string();
    parse_dataset(None, (&gj_text, &name), config, &format!("geometry: {name}"))
}

struct AttributeTable {
    headers: Vec<String>,
    rows: HashMap<String, Vec<String>>,
}

fn parse_table(text: &str, source_name: &str, join_column: &str) -> Result<AttributeTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::from_csv(source_name, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let join_idx = headers
        .iter()
        .position(|h| h == join_column)
        .ok_or_else(|| {
            Error::Config(format!(
                "join column {join_column:?} missing from attribute table {source_name}"
            ))
        })?;
    let mut rows = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::from_csv(source_name, e))?;
        let values: Vec<String> = row.iter().map(str::to_string).collect();
        // First row per join id wins; the table is expected to be keyed.
        rows.entry(values[join_idx].clone()).or_insert(values);
    }
    Ok(AttributeTable { headers, rows })
}

/// Shared ingest path over in-memory inputs: `(text, source name)` pairs.
pub fn parse_dataset(
    attribute_csv: Option<(&str, &str)>,
    geojson: (&str, &str),
    config: &IngestConfig,
    provenance: &str,
) -> Result<(GeoDataset, IngestReport)> {
    let table = attribute_csv
        .map(|(text, name)| parse_table(text, name, &config.join_column))
        .transpose()?;
    let fc = geojson_io::parse_feature_collection(geojson.0, geojson.1)?;

    // Every configured column must exist somewhere in the schema.
    let mut schema: Vec<String> = table.as_ref().map(|t| t.headers.clone()).unwrap_or_default();
    for f in &fc.features {
        if let Some(props) = &f.properties {
            for k in props.keys() {
                if !schema.contains(k) && !RESERVED_PROPERTIES.contains(&k.as_str()) {
                    schema.push(k.clone());
                }
            }
        }
    }
    for column in config.signature_columns.iter().chain(&config.key_columns) {
        if !schema.contains(column) {
            return Err(Error::Config(format!(
                "configured column {column:?} not present in the inputs"
            )));
        }
    }

    let mut report = IngestReport::default();
    let mut records = Vec::with_capacity(fc.features.len());
    for (index, feature) in fc.features.iter().enumerate() {
        let props = feature.properties.clone().unwrap_or_default();
        let mut attributes: Vec<(String, String)> = Vec::new();
        if let Some(table) = &table {
            let join_value = props
                .get(&config.join_column)
                .map(property_to_string)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| {
                    Error::Ingest(format!(
                        "feature {index} has no {:?} property",
                        config.join_column
                    ))
                })?;
            let row = table.rows.get(&join_value).ok_or_else(|| {
                Error::Ingest(format!(
                    "feature {index}: join id {join_value:?} not found in attribute table"
                ))
            })?;
            attributes.extend(table.headers.iter().cloned().zip(row.iter().cloned()));
        }
        for (k, v) in &props {
            if RESERVED_PROPERTIES.contains(&k.as_str()) {
                continue;
            }
            if !attributes.iter().any(|(h, _)| h == k) {
                attributes.push((k.clone(), property_to_string(v)));
            }
        }

        let geometry = feature
            .geometry
            .as_ref()
            .ok_or_else(|| Error::Ingest(format!("feature {index} has no geometry")))?;
        let (geometry, closed) = geojson_io::polygonal_from_geojson(geometry)
            .map_err(|e| Error::Ingest(format!("feature {index}: {e}")))?;
        if closed > 0 {
            report.auto_closed_rings += closed;
            let msg = format!("feature {index}: closed {closed} open ring(s)");
            tracing::warn!("{msg}");
            report.warnings.push(msg);
        }

        let record_id = index as RecordId;
        let full_desc = clean_description(&build_description(&attributes, &config.signature_columns));
        if full_desc.is_empty() || full_desc.chars().count() < config.min_desc_length {
            report.dropped_short += 1;
            report.dropped_record_ids.push(record_id);
            continue;
        }
        let key = config
            .key_columns
            .iter()
            .map(|c| {
                attributes
                    .iter()
                    .find(|(h, _)| h == c)
                    .map(|(_, v)| v.clone())
                    .unwrap_or_default()
            })
            .collect();
        records.push(PolygonRecord {
            record_id,
            key,
            attributes,
            geometry,
            full_desc,
        });
    }
    report.ingested = records.len();
    if report.dropped_short > 0 {
        tracing::info!(
            dropped = report.dropped_short,
            "records dropped by the minimum description length"
        );
    }

    let dataset_id = config.dataset_id.clone().unwrap_or_else(|| {
        let mut h = Sha256::new();
        if let Some((text, _)) = attribute_csv {
            h.update(text.as_bytes());
        }
        h.update([0u8]);
        h.update(geojson.0.as_bytes());
        h.update(serde_json::to_vec(config).unwrap_or_default());
        format!("ds-{}", &hex::encode(h.finalize())[..16])
    });
    let dataset = GeoDataset::new(
        dataset_id,
        Crs::GeographicWgs84,
        config.signature_columns.clone(),
        config.key_columns.clone(),
        provenance,
        records,
    )?;
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_feature(link: &str, x: f64) -> String {
        format!(
            r#"{{"type":"Feature","properties":{{"UNIT_LINK":"{link}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x},0],[{x1},0],[{x1},1],[{x},1],[{x},0]]]}}}}"#,
            x1 = x + 1.0
        )
    }

    fn fc(features: &[String]) -> String {
        format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(","))
    }

    fn small_config(min: usize) -> IngestConfig {
        IngestConfig {
            signature_columns: vec!["UNIT_NAME".into(), "MAJOR1".into()],
            key_columns: vec!["STATE".into(), "UNIT_LINK".into()],
            min_desc_length: min,
            ..IngestConfig::default()
        }
    }

    const CSV: &str = "UNIT_LINK,STATE,UNIT_NAME,MAJOR1\n\
                       NVa,NV,Granite of Pine Nut,granite\n\
                       NVb,NV,Pogonip Group,limestone\n\
                       CAc,CA,granite,\n";

    #[test]
    fn identity_join() {
        let gj = fc(&[square_feature("NVa", 0.0), square_feature("NVb", 2.0), square_feature("CAc", 4.0)]);
        let (ds, report) = parse_dataset(Some((CSV, "t.csv")), (&gj, "t.geojson"), &small_config(0), "t").unwrap();
        assert_eq!(ds.count(), 3);
        assert_eq!(report.dropped_short, 0);
        assert_eq!(ds.records()[0].full_desc, "Granite of Pine Nut. granite");
        assert_eq!(ds.records()[1].key, vec!["NV".to_string(), "NVb".to_string()]);
    }

    #[test]
    fn short_description_dropped() {
        let gj = fc(&[square_feature("NVa", 0.0), square_feature("NVb", 2.0), square_feature("CAc", 4.0)]);
        let (ds, report) = parse_dataset(Some((CSV, "t.csv")), (&gj, "t.geojson"), &small_config(10), "t").unwrap();
        // "granite" (7 chars) falls under the threshold.
        assert_eq!(ds.count(), 2);
        assert_eq!(report.dropped_short, 1);
        assert_eq!(report.dropped_record_ids, vec![2]);
    }

    #[test]
    fn missing_join_id_names_feature() {
        let bad = r#"{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}"#;
        let gj = fc(&[square_feature("NVa", 0.0), bad.to_string()]);
        let err = parse_dataset(Some((CSV, "t.csv")), (&gj, "t.geojson"), &small_config(0), "t").unwrap_err();
        match err {
            Error::Ingest(msg) => assert!(msg.contains("feature 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_join_id_rejected() {
        let gj = fc(&[square_feature("XX", 0.0)]);
        let err = parse_dataset(Some((CSV, "t.csv")), (&gj, "t.geojson"), &small_config(0), "t").unwrap_err();
        assert!(matches!(err, Error::Ingest(_)));
    }

    #[test]
    fn missing_column_is_config_error() {
        let gj = fc(&[square_feature("NVa", 0.0)]);
        let mut cfg = small_config(0);
        cfg.signature_columns.push("UNITDESC".into());
        let err = parse_dataset(Some((CSV, "t.csv")), (&gj, "t.geojson"), &cfg, "t").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let csv = "UNIT_LINK,STATE,UNIT_NAME,MAJOR1\nNVa,NV,\"unterminated,granite\nNVb,NV,x\n";
        let gj = fc(&[square_feature("NVa", 0.0)]);
        let err = parse_dataset(Some((csv, "t.csv")), (&gj, "t.geojson"), &small_config(0), "t").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
    }

    #[test]
    fn malformed_geojson_reports_position() {
        let err = parse_dataset(Some((CSV, "t.csv")), ("{\"type\":", "t.geojson"), &small_config(0), "t")
            .unwrap_err();
        match err {
            Error::Parse { source_name, location, .. } => {
                assert_eq!(source_name, "t.geojson");
                assert!(location.contains("line 1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn self_intersecting_ring_rejected() {
        let bowtie = r#"{"type":"Feature","properties":{"UNIT_LINK":"NVa"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,1],[1,0],[0,1],[0,0]]]}}"#;
        let gj = fc(&[bowtie.to_string()]);
        let err = parse_dataset(Some((CSV, "t.csv")), (&gj, "t.geojson"), &small_config(0), "t").unwrap_err();
        assert!(matches!(err, Error::Ingest(ref m) if m.contains("self-intersects")), "{err:?}");
    }

    #[test]
    fn content_derived_id_is_stable() {
        let gj = fc(&[square_feature("NVa", 0.0)]);
        let a = parse_dataset(Some((CSV, "a")), (&gj, "b"), &small_config(0), "x").unwrap().0;
        let b = parse_dataset(Some((CSV, "c")), (&gj, "d"), &small_config(0), "y").unwrap().0;
        assert_eq!(a.dataset_id(), b.dataset_id());
        assert!(a.dataset_id().starts_with("ds-"));
    }
}
