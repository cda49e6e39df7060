//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use lithoquery::config::Config;
use lithoquery::geodata::IngestConfig;
use lithoquery::projection::{Albers, AlbersParams};
use lithoquery::workspace::{IngestRequest, Source, Workspace};
use serde_json::json;

pub const HOST_QUERY: &str = "limestones, calcareous to carbonaceous pelites.";
pub const SOURCE_QUERY: &str = "tonalite, granodiorite, quartz monzonite and granite.";

pub const STRIP_WIDTH_M: f64 = 1000.0;
pub const STRIP_HEIGHT_M: f64 = 10_000.0;

/// Lithology of each strip, west to east. Host-like units (H) and
/// source-like units (S) of decreasing similarity to the two queries sit
/// between unrelated units, so each τ step adds a known neighbour.
pub const STRIPS: [&str; 10] = [
    "basalt flows",                                         // 0
    "limestones with shale",                                // 1  H3
    "granite with aplite dikes",                            // 2  S3
    "limestones, calcareous to carbonaceous pelites.",      // 3  H1
    "tonalite, granodiorite, quartz monzonite and granite.", // 4  S1
    "alluvium sand gravel",                                 // 5
    "limestones, calcareous pelites",                       // 6  H2
    "granodiorite and granite",                             // 7  S2
    "quartzite",                                            // 8
    "rhyolite tuff",                                        // 9
];

pub fn config(data_dir: &Path) -> Config {
    Config {
        data_dir: data_dir.to_path_buf(),
        ..Config::default()
    }
}

pub fn workspace(data_dir: &Path) -> Workspace {
    Workspace::new(config(data_dir)).unwrap()
}

pub fn strip_ingest_config() -> IngestConfig {
    IngestConfig {
        signature_columns: vec!["LITH".into()],
        key_columns: vec!["UNIT_LINK".into()],
        min_desc_length: 1,
        join_column: "UNIT_LINK".into(),
        dataset_id: None,
    }
}

/// Ring in WGS84 for a projected rectangle under the default Albers
/// parameters.
pub fn wgs84_rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
    let a = Albers::new(AlbersParams::default()).unwrap();
    [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
        .iter()
        .map(|&(x, y)| {
            let (lon, lat) = a.inverse(x, y);
            [lon, lat]
        })
        .collect()
}

/// Ten adjacent strips 1 km wide and 10 km tall near the projection
/// origin, with the lithologies of [`STRIPS`].
pub fn strip_world_geojson() -> serde_json::Value {
    let features: Vec<serde_json::Value> = STRIPS
        .iter()
        .enumerate()
        .map(|(i, lith)| {
            let x0 = i as f64 * STRIP_WIDTH_M;
            json!({
                "type": "Feature",
                "properties": {"UNIT_LINK": format!("U{i:02}"), "LITH": lith},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [wgs84_rect(x0, 0.0, x0 + STRIP_WIDTH_M, STRIP_HEIGHT_M)]
                }
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn strip_ingest_request() -> IngestRequest {
    IngestRequest {
        geojson: Some(Source::Inline(strip_world_geojson())),
        config: strip_ingest_config(),
        project: true,
        ..IngestRequest::default()
    }
}

/// Sites at the centres of the given strips, as CSV.
pub fn sites_csv(strips: &[usize]) -> String {
    let a = Albers::new(AlbersParams::default()).unwrap();
    let mut out = String::from("site_id,name,longitude,latitude\n");
    for (n, &i) in strips.iter().enumerate() {
        let (lon, lat) = a.inverse((i as f64 + 0.5) * STRIP_WIDTH_M, STRIP_HEIGHT_M / 2.0);
        out.push_str(&format!("s{n},site {n},{lon},{lat}\n"));
    }
    out
}

/// Projected dataset from (key, geometry, description) triples; record ids
/// follow input order.
pub fn projected_dataset(
    id: &str,
    items: Vec<(String, lithoquery::geometry::MultiPolygon, String)>,
) -> lithoquery::geodata::GeoDataset {
    use lithoquery::geodata::{GeoDataset, PolygonRecord};
    use lithoquery::projection::Crs;
    let records = items
        .into_iter()
        .enumerate()
        .map(|(i, (key, geometry, desc))| PolygonRecord {
            record_id: i as u64,
            key: vec![key.clone()],
            attributes: vec![("KEY".into(), key), ("DESC".into(), desc.clone())],
            geometry,
            full_desc: desc,
        })
        .collect();
    GeoDataset::new(
        id,
        Crs::AlbersConicProjected(AlbersParams::default()),
        vec!["DESC".into()],
        vec!["KEY".into()],
        "test fixture",
        records,
    )
    .unwrap()
}

pub fn scored(dataset_id: &str, scores: Vec<(u64, f64)>) -> lithoquery::evidence::ScoredLayer {
    let mut scores = scores;
    scores.sort_by_key(|s| s.0);
    lithoquery::evidence::ScoredLayer {
        layer_id: "sl-test".into(),
        dataset_id: dataset_id.into(),
        query: "q".into(),
        provider_id: "reference".into(),
        model_name: "m".into(),
        scores,
        excluded: vec![],
        created_at: chrono::Utc::now(),
    }
}
