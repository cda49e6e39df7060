//! Contact zones between evidence layers: buffer each layer by r1,
//! intersect them in order, then buffer the result by r2.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::EvidenceLayer;
use crate::geometry::{self, MultiPolygon, DEFAULT_ARC_SEGMENTS};
use crate::ids::content_id;
use crate::projection::Crs;

pub const DEFAULT_R1_M: f64 = 500.0;
pub const DEFAULT_R2_M: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub r1: f64,
    pub r2: f64,
    pub arc_segments: u32,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            r1: DEFAULT_R1_M,
            r2: DEFAULT_R2_M,
            arc_segments: DEFAULT_ARC_SEGMENTS,
        }
    }
}

impl ContactParams {
    pub fn new(r1: f64, r2: f64) -> Self {
        ContactParams {
            r1,
            r2,
            ..ContactParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("r1", self.r1), ("r2", self.r2)] {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::input(format!("{name} must be finite and >= 0, got {r}")));
            }
        }
        if self.arc_segments < 4 {
            return Err(Error::input(format!(
                "arc_segments must be >= 4, got {}",
                self.arc_segments
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivedKind {
    Buffered,
    Intersected,
    Contact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedLayer {
    pub layer_id: String,
    pub input_layer_ids: Vec<String>,
    pub params: ContactParams,
    pub kind: DerivedKind,
    pub crs: Crs,
    pub geometry: MultiPolygon,
}

/// Borrowed view of any layer that can feed a contact derivation.
#[derive(Debug, Clone, Copy)]
pub struct LayerGeometry<'a> {
    pub layer_id: &'a str,
    pub crs: Crs,
    pub geometry: &'a MultiPolygon,
}

impl EvidenceLayer {
    pub fn as_input(&self) -> LayerGeometry<'_> {
        LayerGeometry {
            layer_id: &self.layer_id,
            crs: self.crs,
            geometry: &self.geometry,
        }
    }
}

impl DerivedLayer {
    pub fn as_input(&self) -> LayerGeometry<'_> {
        LayerGeometry {
            layer_id: &self.layer_id,
            crs: self.crs,
            geometry: &self.geometry,
        }
    }
}

/// Outward buffer of a layer geometry in projected coordinates.
pub fn buffer_layer(g: &MultiPolygon, crs: Crs, r: f64, arc_segments: u32) -> Result<MultiPolygon> {
    crs.require_projected("buffering")?;
    geometry::buffer(g, r, arc_segments)
}

pub fn intersect_layers(a: &MultiPolygon, a_crs: Crs, b: &MultiPolygon, b_crs: Crs) -> Result<MultiPolygon> {
    if a_crs != b_crs {
        return Err(Error::state(format!(
            "cannot intersect layers in different CRS ({} vs {})",
            a_crs.label(),
            b_crs.label()
        )));
    }
    Ok(geometry::intersection(a, b))
}

/// Every stage of a contact derivation, for inspection and logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactStages {
    /// Each input buffered by r1, in input order.
    pub buffered: Vec<MultiPolygon>,
    /// Left fold of the buffered layers under intersection.
    pub intersected: MultiPolygon,
    pub contact: DerivedLayer,
}

pub fn contact_layer_id(input_ids: &[&str], params: &ContactParams) -> String {
    let mut parts: Vec<&[u8]> = input_ids.iter().map(|s| s.as_bytes()).collect();
    let r1 = params.r1.to_le_bytes();
    let r2 = params.r2.to_le_bytes();
    let arc = params.arc_segments.to_le_bytes();
    parts.extend([&r1[..], &r2[..], &arc[..]]);
    content_id("ct", &parts)
}

pub fn find_contact(layers: &[LayerGeometry<'_>], params: &ContactParams) -> Result<DerivedLayer> {
    Ok(find_contact_stages(layers, params)?.contact)
}

pub fn find_contact_stages(layers: &[LayerGeometry<'_>], params: &ContactParams) -> Result<ContactStages> {
    if layers.len() < 2 {
        return Err(Error::input(format!(
            "contact needs at least 2 layers, got {}",
            layers.len()
        )));
    }
    params.validate()?;
    let crs = layers[0].crs;
    for l in layers {
        l.crs.require_projected("contact derivation")?;
        if l.crs != crs {
            return Err(Error::state(format!(
                "layer {} is in a different CRS from {}",
                l.layer_id, layers[0].layer_id
            )));
        }
    }

    let buffered: Vec<MultiPolygon> = layers
        .par_iter()
        .map(|l| buffer_layer(l.geometry, l.crs, params.r1, params.arc_segments))
        .collect::<Result<_>>()?;
    let intersected = intersect_all(&buffered);
    tracing::debug!(
        inputs = layers.len(),
        intersected_area = geometry::area(&intersected),
        "contact intersection"
    );
    let geometry = buffer_layer(&intersected, crs, params.r2, params.arc_segments)?;

    let ids: Vec<&str> = layers.iter().map(|l| l.layer_id).collect();
    let contact = DerivedLayer {
        layer_id: contact_layer_id(&ids, params),
        input_layer_ids: ids.iter().map(|s| s.to_string()).collect(),
        params: *params,
        kind: DerivedKind::Contact,
        crs,
        geometry,
    };
    Ok(ContactStages {
        buffered,
        intersected,
        contact,
    })
}

/// ((g0 ∩ g1) ∩ g2) ∩ …
pub fn intersect_all(parts: &[MultiPolygon]) -> MultiPolygon {
    let mut it = parts.iter();
    let Some(first) = it.next() else {
        return geometry::empty();
    };
    let mut acc = first.clone();
    for g in it {
        if geometry::is_empty(&acc) {
            break;
        }
        acc = geometry::intersection(&acc, g);
    }
    acc
}
