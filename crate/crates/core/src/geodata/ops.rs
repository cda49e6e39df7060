use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FocusArea, GeoDataset, PolygonRecord, RecordId};
use crate::error::{Error, Result};
use crate::geometry::{self, MultiPolygon};
use crate::projection::{Albers, AlbersParams, Crs};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DissolveReport {
    pub input_records: usize,
    pub output_records: usize,
    /// Keys whose members disagreed on the description; the first member by
    /// record_id was kept.
    pub conflicting_keys: Vec<Vec<String>>,
}

/// Merge records sharing a key tuple into one multipolygon record.
///
/// Output order follows each group's lowest member record_id and ids are
/// reassigned densely from 0. Attributes and description come from that
/// lowest member.
pub fn dissolve(dataset: &GeoDataset) -> (GeoDataset, DissolveReport) {
    let mut group_of: HashMap<&[String], usize> = HashMap::new();
    let mut groups: Vec<Vec<&PolygonRecord>> = Vec::new();
    for r in dataset.records() {
        let next = groups.len();
        let g = *group_of.entry(r.key.as_slice()).or_insert(next);
        if g == next {
            groups.push(Vec::new());
        }
        groups[g].push(r);
    }

    let mut report = DissolveReport {
        input_records: dataset.count(),
        output_records: groups.len(),
        ..Default::default()
    };
    for members in &groups {
        let first = members[0];
        if members[1..].iter().any(|m| m.full_desc != first.full_desc) {
            tracing::warn!(key = ?first.key, "dissolve members disagree on description; keeping first");
            report.conflicting_keys.push(first.key.clone());
        }
    }

    let records: Vec<PolygonRecord> = groups
        .par_iter()
        .enumerate()
        .map(|(i, members)| {
            let first = members[0];
            let geometry = if members.len() == 1 {
                first.geometry.clone()
            } else {
                geometry::union_all(members.iter().map(|m| &m.geometry))
            };
            PolygonRecord {
                record_id: i as RecordId,
                key: first.key.clone(),
                attributes: first.attributes.clone(),
                geometry,
                full_desc: first.full_desc.clone(),
            }
        })
        .collect();

    let mut out = dataset.derive(
        format!("{}-dissolved", dataset.dataset_id().trim_end_matches("-dissolved")),
        dataset.crs(),
        format!("dissolve of {}", dataset.dataset_id()),
        records,
    );
    out.dissolved = true;
    (out, report)
}

/// Map every coordinate through the spherical Albers forward equations.
pub fn project_dataset(dataset: &GeoDataset, params: &AlbersParams) -> Result<GeoDataset> {
    if dataset.crs().is_projected() {
        return Err(Error::state(format!(
            "dataset {} is already projected",
            dataset.dataset_id()
        )));
    }
    let albers = Albers::new(*params)?;
    let records = dataset
        .records()
        .par_iter()
        .map(|r| PolygonRecord {
            geometry: geometry::map_coords(&r.geometry, |x, y| albers.forward(x, y)),
            ..r.clone()
        })
        .collect();
    Ok(dataset.derive(
        format!("{}-albers", dataset.dataset_id()),
        Crs::AlbersConicProjected(*params),
        format!("albers projection of {}", dataset.dataset_id()),
        records,
    ))
}

/// Intersect every record with the focus polygon, dropping records that fall
/// entirely outside. A geographic focus is projected to match a projected
/// dataset.
pub fn clip_to_focus(dataset: &GeoDataset, focus: &FocusArea) -> Result<GeoDataset> {
    let focus_geom: MultiPolygon = focus.geometry_in(dataset.crs())?;
    let records = dataset
        .records()
        .par_iter()
        .filter_map(|r| {
            let clipped = geometry::intersection(&r.geometry, &focus_geom);
            (!geometry::is_empty(&clipped) && geometry::area(&clipped) > 0.0).then(|| PolygonRecord {
                geometry: clipped,
                ..r.clone()
            })
        })
        .collect();
    Ok(dataset.derive(
        format!("{}-clip-{}", dataset.dataset_id(), focus.slug()),
        dataset.crs(),
        format!("{} clipped to focus area {}", dataset.dataset_id(), focus.name),
        records,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rect;
    use geo::Coord;

    fn record(id: RecordId, key: &[&str], g: MultiPolygon, desc: &str) -> PolygonRecord {
        PolygonRecord {
            record_id: id,
            key: key.iter().map(|s| s.to_string()).collect(),
            attributes: vec![("UNITDESC".into(), desc.into())],
            geometry: g,
            full_desc: desc.into(),
        }
    }

    fn dataset(records: Vec<PolygonRecord>) -> GeoDataset {
        GeoDataset::new(
            "t",
            Crs::GeographicWgs84,
            vec!["UNITDESC".into()],
            vec!["STATE".into(), "LABEL".into()],
            "test",
            records,
        )
        .unwrap()
    }

    #[test]
    fn dissolve_groups_by_key() {
        let ds = dataset(vec![
            record(0, &["NV", "Kg"], rect(0.0, 0.0, 1.0, 1.0), "granite"),
            record(1, &["NV", "Kg"], rect(1.0, 0.0, 2.0, 1.0), "granite"),
            record(2, &["CA", "Pzl"], rect(5.0, 0.0, 6.0, 1.0), "limestone"),
        ]);
        let (out, report) = dissolve(&ds);
        assert_eq!(out.count(), 2);
        assert!(report.conflicting_keys.is_empty());
        let nv = &out.records()[0];
        assert_eq!(nv.record_id, 0);
        assert_eq!(nv.key, vec!["NV", "Kg"]);
        assert_eq!(geometry::area(&nv.geometry), 2.0);
        // Edge-sharing squares merge into one polygon.
        assert_eq!(nv.geometry.0.len(), 1);
        assert_eq!(out.records()[1].record_id, 1);
        assert!(out.is_dissolved());
    }

    #[test]
    fn dissolve_keeps_first_on_conflict() {
        let ds = dataset(vec![
            record(4, &["NV", "Kg"], rect(0.0, 0.0, 1.0, 1.0), "second"),
            record(1, &["NV", "Kg"], rect(3.0, 0.0, 4.0, 1.0), "first"),
        ]);
        let (out, report) = dissolve(&ds);
        assert_eq!(out.records()[0].full_desc, "first");
        assert_eq!(report.conflicting_keys.len(), 1);
        assert_eq!(geometry::area(&out.records()[0].geometry), 2.0);
    }

    #[test]
    fn project_twice_is_state_error() {
        let ds = dataset(vec![record(0, &["NV", "Kg"], rect(-96.0, 40.0, -95.9, 40.1), "x")]);
        let p = project_dataset(&ds, &AlbersParams::default()).unwrap();
        assert!(p.crs().is_projected());
        assert!(matches!(
            project_dataset(&p, &AlbersParams::default()),
            Err(Error::State(_))
        ));
    }

    fn focus(x0: f64, y0: f64, x1: f64, y1: f64) -> FocusArea {
        FocusArea::new(
            "f",
            vec![
                Coord { x: x0, y: y0 },
                Coord { x: x1, y: y0 },
                Coord { x: x1, y: y1 },
                Coord { x: x0, y: y1 },
                Coord { x: x0, y: y0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn clip_left_half() {
        let ds = dataset(vec![record(0, &["a", "b"], rect(0.0, 0.0, 1.0, 1.0), "x")]);
        let out = clip_to_focus(&ds, &focus(-1.0, -1.0, 0.5, 2.0)).unwrap();
        assert_eq!(out.count(), 1);
        assert!((geometry::area(&out.records()[0].geometry) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn clip_containing_and_disjoint() {
        let ds = dataset(vec![
            record(0, &["a", "b"], rect(0.0, 0.0, 1.0, 1.0), "x"),
            record(1, &["a", "c"], rect(2.0, 0.0, 3.0, 1.0), "y"),
        ]);
        let all = clip_to_focus(&ds, &focus(-10.0, -10.0, 10.0, 10.0)).unwrap();
        assert_eq!(all.count(), 2);
        for (a, b) in all.records().iter().zip(ds.records()) {
            assert!((geometry::area(&a.geometry) - geometry::area(&b.geometry)).abs() < 1e-9);
            assert_eq!(a.full_desc, b.full_desc);
        }
        let none = clip_to_focus(&ds, &focus(20.0, 20.0, 21.0, 21.0)).unwrap();
        assert_eq!(none.count(), 0);
    }
}
