use std::collections::HashSet;
use std::path::Path;

use geo::Coord;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geojson_io::{self, property_to_string};
use crate::projection::{Albers, Crs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub site_id: String,
    pub name: String,
    /// Longitude, degrees.
    pub x: f64,
    /// Latitude, degrees.
    pub y: f64,
}

/// Known mineral occurrences in geographic coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    pub sites: Vec<Site>,
}

impl SiteSet {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Site locations in `crs`, in site order.
    pub fn coords_in(&self, crs: Crs) -> Result<Vec<Coord<f64>>> {
        match crs {
            Crs::GeographicWgs84 => Ok(self.sites.iter().map(|s| Coord { x: s.x, y: s.y }).collect()),
            Crs::AlbersConicProjected(p) => {
                let albers = Albers::new(p)?;
                Ok(self
                    .sites
                    .iter()
                    .map(|s| {
                        let (x, y) = albers.forward(s.x, s.y);
                        Coord { x, y }
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub loaded: usize,
    /// (line number for CSV or feature index for GeoJSON, reason)
    pub skipped: Vec<(usize, String)>,
}

/// CSV with columns site_id,name,longitude,latitude, or GeoJSON Points.
pub fn load_sites(path: &Path) -> Result<(SiteSet, SiteReport)> {
    let text = geojson_io::read_text(path)?;
    parse_sites(&text, &path.display().to_string())
}

pub fn parse_sites(text: &str, source_name: &str) -> Result<(SiteSet, SiteReport)> {
    let looks_json = text.trim_start().starts_with('{');
    let (sites, skipped) = if looks_json {
        parse_geojson_sites(text, source_name)?
    } else {
        parse_csv_sites(text, source_name)?
    };
    if sites.is_empty() {
        return Err(Error::Ingest(format!("{source_name}: no valid sites")));
    }
    for (at, why) in &skipped {
        tracing::warn!(source = source_name, at, "skipped site: {why}");
    }
    let report = SiteReport {
        loaded: sites.len(),
        skipped,
    };
    Ok((SiteSet { sites }, report))
}

fn check(
    site: Site,
    seen: &mut HashSet<String>,
) -> std::result::Result<Site, String> {
    if !site.x.is_finite() || !(-180.0..=180.0).contains(&site.x) {
        return Err(format!("longitude {} out of range", site.x));
    }
    if !site.y.is_finite() || !(-90.0..=90.0).contains(&site.y) {
        return Err(format!("latitude {} out of range", site.y));
    }
    if site.site_id.is_empty() {
        return Err("empty site_id".into());
    }
    if !seen.insert(site.site_id.clone()) {
        return Err(format!("duplicate site_id {}", site.site_id));
    }
    Ok(site)
}

type Parsed = (Vec<Site>, Vec<(usize, String)>);

fn parse_csv_sites(text: &str, source_name: &str) -> Result<Parsed> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::from_csv(source_name, e))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("{source_name}: missing column {name:?}")))
    };
    let (id_i, name_i, lon_i, lat_i) = (col("site_id")?, col("name")?, col("longitude")?, col("latitude")?);

    let mut seen = HashSet::new();
    let mut sites = Vec::new();
    let mut skipped = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::from_csv(source_name, e))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let parsed = match (field(lon_i).parse::<f64>(), field(lat_i).parse::<f64>()) {
            (Ok(x), Ok(y)) => check(
                Site {
                    site_id: field(id_i).to_string(),
                    name: field(name_i).to_string(),
                    x,
                    y,
                },
                &mut seen,
            ),
            _ => Err("unparseable coordinates".into()),
        };
        match parsed {
            Ok(s) => sites.push(s),
            Err(why) => skipped.push((line, why)),
        }
    }
    Ok((sites, skipped))
}

fn parse_geojson_sites(text: &str, source_name: &str) -> Result<Parsed> {
    let fc = geojson_io::parse_feature_collection(text, source_name)?;
    let mut seen = HashSet::new();
    let mut sites = Vec::new();
    let mut skipped = Vec::new();
    for (index, f) in fc.features.iter().enumerate() {
        let point = match f.geometry.as_ref().map(|g| &g.value) {
            Some(geojson::GeometryValue::Point { coordinates }) if coordinates.len() >= 2 => {
                (coordinates[0], coordinates[1])
            }
            Some(other) => {
                skipped.push((index, format!("{} is not a Point", other.type_name())));
                continue;
            }
            None => {
                skipped.push((index, "no geometry".into()));
                continue;
            }
        };
        let prop = |k: &str| f.property(k).map(property_to_string).unwrap_or_default();
        let site_id = match prop("site_id") {
            s if s.is_empty() => f
                .id
                .as_ref()
                .map(|id| match id {
                    geojson::feature::Id::String(s) => s.clone(),
                    geojson::feature::Id::Number(n) => n.to_string(),
                })
                .unwrap_or_else(|| format!("site-{index}")),
            s => s,
        };
        let site = Site {
            site_id,
            name: prop("name"),
            x: point.0,
            y: point.1,
        };
        match check(site, &mut seen) {
            Ok(s) => sites.push(s),
            Err(why) => skipped.push((index, why)),
        }
    }
    Ok((sites, skipped))
}
