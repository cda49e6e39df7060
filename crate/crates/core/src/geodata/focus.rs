use geo::Coord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geojson_io;
use crate::geometry::{self, MultiPolygon};
use crate::projection::{Albers, Crs};

/// Named study area: one closed ring in geographic coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusArea {
    pub name: String,
    pub ring: Vec<Coord<f64>>,
}

impl FocusArea {
    /// Validates the ring; an open ring is closed, a self-intersecting one
    /// is rejected.
    pub fn new(name: impl Into<String>, ring: Vec<Coord<f64>>) -> Result<Self> {
        let checked = geometry::check_ring(&ring)?;
        for c in &checked.ring {
            if !(-180.0..=180.0).contains(&c.x) || !(-90.0..=90.0).contains(&c.y) {
                return Err(Error::Geometry(format!(
                    "focus vertex ({}, {}) is not a longitude/latitude pair",
                    c.x, c.y
                )));
            }
        }
        Ok(FocusArea {
            name: name.into(),
            ring: checked.ring,
        })
    }

    /// Latitude band between two parallels across a longitude range.
    pub fn latitude_band(name: impl Into<String>, lon: (f64, f64), lat: (f64, f64)) -> Result<Self> {
        let ring = vec![
            Coord { x: lon.0, y: lat.0 },
            Coord { x: lon.1, y: lat.0 },
            Coord { x: lon.1, y: lat.1 },
            Coord { x: lon.0, y: lat.1 },
            Coord { x: lon.0, y: lat.0 },
        ];
        FocusArea::new(name, ring)
    }

    /// First Polygon found in a GeoJSON document; the name comes from a
    /// `name` property when present.
    pub fn from_geojson(text: &str, fallback_name: &str) -> Result<Self> {
        let doc = geojson_io::parse_geojson(text, fallback_name)?;
        let (geom, name) = match doc {
            geojson::GeoJson::Geometry(g) => (Some(g), None),
            geojson::GeoJson::Feature(f) => {
                let name = f.property("name").map(geojson_io::property_to_string);
                (f.geometry, name)
            }
            geojson::GeoJson::FeatureCollection(fc) => match fc.features.into_iter().next() {
                Some(f) => {
                    let name = f.property("name").map(geojson_io::property_to_string);
                    (f.geometry, name)
                }
                None => (None, None),
            },
        };
        let geom = geom.ok_or_else(|| Error::Geometry("focus area has no geometry".into()))?;
        let ring = match geom.value {
            geojson::GeometryValue::Polygon { coordinates } if !coordinates.is_empty() => {
                outer_ring(&coordinates)
            }
            geojson::GeometryValue::MultiPolygon { coordinates }
                if coordinates.len() == 1 && !coordinates[0].is_empty() =>
            {
                outer_ring(&coordinates[0])
            }
            _ => return Err(Error::Geometry("focus area must be a Polygon".into())),
        };
        FocusArea::new(name.unwrap_or_else(|| fallback_name.to_string()), ring)
    }

    pub fn to_geojson(&self) -> geojson::Feature {
        let mut props = geojson::JsonObject::new();
        props.insert("name".into(), self.name.clone().into());
        geojson_io::feature(geojson_io::geometry_to_geojson(&self.geometry()), props)
    }

    pub fn geometry(&self) -> MultiPolygon {
        geo::MultiPolygon(vec![geometry::polygon_from_rings(vec![self.ring.clone()])])
    }

    /// The focus polygon expressed in `crs`.
    pub fn geometry_in(&self, crs: Crs) -> Result<MultiPolygon> {
        match crs {
            Crs::GeographicWgs84 => Ok(self.geometry()),
            Crs::AlbersConicProjected(params) => {
                let albers = Albers::new(params)?;
                Ok(geometry::map_coords(&self.geometry(), |x, y| albers.forward(x, y)))
            }
        }
    }

    /// Short stable identifier derived from the name and ring.
    pub fn slug(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for c in &self.ring {
            h.update(c.x.to_le_bytes());
            h.update(c.y.to_le_bytes());
        }
        hex::encode(h.finalize())[..8].to_string()
    }
}

fn outer_ring(rings: &[Vec<geojson::Position>]) -> Vec<Coord<f64>> {
    rings[0].iter().map(|p| Coord { x: p[0], y: p[1] }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_is_valid() {
        let f = FocusArea::latitude_band("study", (-125.0, -100.0), (36.0, 42.0)).unwrap();
        assert_eq!(f.ring.len(), 5);
        assert!((geometry::area(&f.geometry()) - 150.0).abs() < 1e-9);
    }

    #[test]
    fn bowtie_rejected() {
        let ring = vec![
            Coord { x: 0.0, y: 0.0 },
            Coord { x: 1.0, y: 1.0 },
            Coord { x: 1.0, y: 0.0 },
            Coord { x: 0.0, y: 1.0 },
        ];
        assert!(FocusArea::new("bad", ring).is_err());
    }

    #[test]
    fn geojson_round_trip() {
        let f = FocusArea::latitude_band("nv", (-120.0, -114.0), (36.0, 42.0)).unwrap();
        let text = serde_json::to_string(&f.to_geojson()).unwrap();
        let back = FocusArea::from_geojson(&text, "x").unwrap();
        assert_eq!(back.name, "nv");
        assert!((geometry::area(&back.geometry()) - geometry::area(&f.geometry())).abs() < 1e-9);
    }
}
