//! GeoJSON conversion for polygon geometry and datasets.

use std::path::Path;

use geo::orient::{Direction, Orient};
use geo::Coord;
use geojson::{Feature, FeatureCollection, GeoJson, GeometryValue, JsonObject, JsonValue};

use crate::error::{Error, Result};
use crate::geodata::{GeoDataset, PolygonRecord};
use crate::geometry::{self, MultiPolygon};
use crate::projection::{Albers, Crs};

/// Property names written by exports and ignored as attributes on re-ingest.
pub const RESERVED_PROPERTIES: &[&str] = &["record_id", "full_desc", "score", "rank", "layer_id"];

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_feature_collection(text: &str, source_name: &str) -> Result<FeatureCollection> {
    serde_json::from_str(text).map_err(|e| Error::from_json(source_name, e))
}

pub fn parse_geojson(text: &str, source_name: &str) -> Result<GeoJson> {
    serde_json::from_str(text).map_err(|e| Error::from_json(source_name, e))
}

/// Polygon or MultiPolygon geometry with every ring checked. Returns the
/// geometry and how many rings had to be closed.
pub fn polygonal_from_geojson(geom: &geojson::Geometry) -> Result<(MultiPolygon, usize)> {
    let polys: Vec<&Vec<Vec<geojson::Position>>> = match &geom.value {
        GeometryValue::Polygon { coordinates } => vec![coordinates],
        GeometryValue::MultiPolygon { coordinates } => coordinates.iter().collect(),
        other => {
            return Err(Error::Geometry(format!(
                "expected Polygon or MultiPolygon, found {}",
                other.type_name()
            )))
        }
    };
    let mut closed = 0;
    let mut out = Vec::with_capacity(polys.len());
    for rings in polys {
        if rings.is_empty() {
            return Err(Error::Geometry("polygon without rings".into()));
        }
        let mut checked = Vec::with_capacity(rings.len());
        for ring in rings {
            let coords = positions_to_coords(ring)?;
            let c = geometry::check_ring(&coords)?;
            if c.auto_closed {
                closed += 1;
            }
            checked.push(c.ring);
        }
        out.push(geometry::polygon_from_rings(checked));
    }
    Ok((geo::MultiPolygon(out), closed))
}

fn positions_to_coords(ring: &[geojson::Position]) -> Result<Vec<Coord<f64>>> {
    ring.iter()
        .map(|p| {
            let s = p.as_slice();
            if s.len() < 2 {
                Err(Error::Geometry("position with fewer than 2 values".into()))
            } else {
                Ok(Coord { x: s[0], y: s[1] })
            }
        })
        .collect()
}

/// RFC 7946 orientation: exterior counter-clockwise, holes clockwise.
pub fn geometry_to_geojson(g: &MultiPolygon) -> geojson::Geometry {
    let oriented = g.orient(Direction::Default);
    let polys = oriented
        .0
        .iter()
        .map(|p| {
            std::iter::once(p.exterior())
                .chain(p.interiors())
                .map(|r| r.0.iter().map(|c| geojson::Position::from([c.x, c.y])).collect())
                .collect()
        })
        .collect();
    geojson::Geometry::new(GeometryValue::MultiPolygon { coordinates: polys })
}

/// Convert to WGS84 longitude/latitude for export.
pub fn to_wgs84(g: &MultiPolygon, crs: Crs) -> Result<MultiPolygon> {
    match crs {
        Crs::GeographicWgs84 => Ok(g.clone()),
        Crs::AlbersConicProjected(params) => {
            let albers = Albers::new(params)?;
            Ok(geometry::map_coords(g, |x, y| albers.inverse(x, y)))
        }
    }
}

/// Convert WGS84 longitude/latitude into `crs`.
pub fn from_wgs84(g: &MultiPolygon, crs: Crs) -> Result<MultiPolygon> {
    match crs {
        Crs::GeographicWgs84 => Ok(g.clone()),
        Crs::AlbersConicProjected(params) => {
            let albers = Albers::new(params)?;
            Ok(geometry::map_coords(g, |x, y| albers.forward(x, y)))
        }
    }
}

pub fn property_to_string(v: &JsonValue) -> String {
    match v {
        JsonValue::Null => String::new(),
        JsonValue::String(s) => s.clone(),
        JsonValue::Bool(b) => b.to_string(),
        JsonValue::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

/// Properties carried by every exported record: id, key and source
/// attributes, and the built description.
pub fn record_properties(dataset: &GeoDataset, record: &PolygonRecord) -> JsonObject {
    let mut props = JsonObject::new();
    props.insert("record_id".into(), JsonValue::from(record.record_id));
    for (heading, value) in &record.attributes {
        props.insert(heading.clone(), JsonValue::String(value.clone()));
    }
    for (column, value) in dataset.key_columns().iter().zip(&record.key) {
        props
            .entry(column.clone())
            .or_insert_with(|| JsonValue::String(value.clone()));
    }
    props.insert("full_desc".into(), JsonValue::String(record.full_desc.clone()));
    props
}

pub fn feature(geometry: geojson::Geometry, properties: JsonObject) -> Feature {
    Feature {
        bbox: None,
        geometry: Some(geometry),
        id: None,
        properties: Some(properties),
        foreign_members: None,
    }
}

/// Whole dataset as a WGS84 FeatureCollection.
pub fn export_dataset(dataset: &GeoDataset) -> Result<FeatureCollection> {
    let mut features = Vec::with_capacity(dataset.count());
    for r in dataset.records() {
        let g = to_wgs84(&r.geometry, dataset.crs())?;
        features.push(feature(geometry_to_geojson(&g), record_properties(dataset, r)));
    }
    Ok(FeatureCollection::new(features))
}

/// Union of every polygonal geometry in a GeoJSON document (FeatureCollection,
/// Feature or bare Geometry). Used for truth tracts and focus areas.
pub fn read_polygonal(text: &str, source_name: &str) -> Result<MultiPolygon> {
    let doc = parse_geojson(text, source_name)?;
    let geoms: Vec<geojson::Geometry> = match doc {
        GeoJson::Geometry(g) => vec![g],
        GeoJson::Feature(f) => f.geometry.into_iter().collect(),
        GeoJson::FeatureCollection(fc) => fc.features.into_iter().filter_map(|f| f.geometry).collect(),
    };
    let mut parts = Vec::with_capacity(geoms.len());
    for g in &geoms {
        parts.push(polygonal_from_geojson(g)?.0);
    }
    if parts.is_empty() {
        return Err(Error::input(format!("{source_name}: no polygon geometry found")));
    }
    Ok(geometry::union_all(parts.iter()))
}

pub fn to_json_string(fc: &FeatureCollection) -> Result<String> {
    Ok(serde_json::to_string(fc)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_round_trip_keeps_area() {
        let text = r#"{"type":"Polygon","coordinates":[[[0,0],[2,0],[2,1],[0,1],[0,0]]]}"#;
        let g = read_polygonal(text, "t").unwrap();
        assert_eq!(geometry::area(&g), 2.0);
        let gj = geometry_to_geojson(&g);
        let (back, closed) = polygonal_from_geojson(&gj).unwrap();
        assert_eq!(closed, 0);
        assert_eq!(geometry::area(&back), 2.0);
    }

    #[test]
    fn open_ring_is_closed() {
        let g: geojson::Geometry = serde_json::from_str(
            r#"{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}"#,
        )
        .unwrap();
        let (mp, closed) = polygonal_from_geojson(&g).unwrap();
        assert_eq!(closed, 1);
        assert_eq!(geometry::area(&mp), 1.0);
    }

    #[test]
    fn line_string_rejected() {
        let g: geojson::Geometry =
            serde_json::from_str(r#"{"type":"LineString","coordinates":[[0,0],[1,1]]}"#).unwrap();
        assert!(matches!(polygonal_from_geojson(&g), Err(Error::Geometry(_))));
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_feature_collection("{\"type\": \"FeatureCollection\",\n \"features\": [}", "x.geojson")
            .unwrap_err();
        match err {
            Error::Parse { location, .. } => assert!(location.starts_with("line 2"), "{location}"),
            other => panic!("{other:?}"),
        }
    }
}
