use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{area_metrics, AreaMetrics};
use crate::contact::{contact_layer_id, intersect_all, ContactParams, LayerGeometry};
use crate::error::{Error, Result};
use crate::evidence::{select_top, EvidenceLayer, ScoredLayer};
use crate::geodata::GeoDataset;
use crate::geometry::{self, MultiPolygon, DEFAULT_ARC_SEGMENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// One list of τ values per scored layer, in layer order.
    pub taus: Vec<Vec<f64>>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    #[serde(default = "default_arc_segments")]
    pub arc_segments: u32,
}

fn default_arc_segments() -> u32 {
    DEFAULT_ARC_SEGMENTS
}

impl GridSpec {
    pub fn cell_count(&self) -> usize {
        self.taus.iter().map(Vec::len).product::<usize>() * self.r1.len() * self.r2.len()
    }

    /// Configuration of cell `index`; the last axis (r2) varies fastest.
    fn config(&self, mut index: usize) -> (Vec<usize>, usize, usize) {
        let r2 = index % self.r2.len();
        index /= self.r2.len();
        let r1 = index % self.r1.len();
        index /= self.r1.len();
        let mut taus = vec![0; self.taus.len()];
        for (i, axis) in self.taus.iter().enumerate().rev() {
            taus[i] = index % axis.len();
            index /= axis.len();
        }
        (taus, r1, r2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub taus: Vec<f64>,
    pub r1: f64,
    pub r2: f64,
    pub metrics: Option<AreaMetrics>,
    /// Sum of the evidence-layer areas feeding this cell.
    pub selected_area: Option<f64>,
    pub error: Option<String>,
}

impl GridCell {
    pub fn f1(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub spec: GridSpec,
    pub cells: Vec<GridCell>,
    pub best_index: Option<usize>,
    pub best_f1: Option<f64>,
}

impl GridSearchResult {
    pub fn best(&self) -> Option<&GridCell> {
        self.best_index.map(|i| &self.cells[i])
    }

    /// One row per cell: tau_0..tau_n, r1, r2, precision, recall, f1, iou,
    /// error.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.spec.taus.len() {
            out.push_str(&format!("tau_{i},"));
        }
        out.push_str("r1,r2,precision,recall,f1,iou,error\n");
        for c in &self.cells {
            for t in &c.taus {
                out.push_str(&format!("{t},"));
            }
            out.push_str(&format!("{},{},", c.r1, c.r2));
            match &c.metrics {
                Some(m) => out.push_str(&format!("{},{},{},{},", m.precision, m.recall, m.f1, m.iou)),
                None => out.push_str(",,,,"),
            }
            if let Some(e) = &c.error {
                out.push('"');
                out.push_str(&e.replace('"', "\"\""));
                out.push('"');
            }
            out.push('\n');
        }
        out
    }
}

/// Higher F1 first, then smaller selected area, then the lexicographically
/// smaller configuration.
fn better(a: &GridCell, b: &GridCell) -> Ordering {
    let fa = a.f1().unwrap_or(f64::NEG_INFINITY);
    let fb = b.f1().unwrap_or(f64::NEG_INFINITY);
    fb.total_cmp(&fa)
        .then_with(|| {
            a.selected_area
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.selected_area.unwrap_or(f64::INFINITY))
        })
        .then_with(|| {
            a.taus
                .iter()
                .zip(&b.taus)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.r1.total_cmp(&b.r1))
        .then_with(|| a.r2.total_cmp(&b.r2))
}

/// Evaluate every combination of per-layer τ, r1 and r2 against `truth`.
///
/// Each cell selects evidence with [`select_top`], derives the contact the
/// same way [`crate::contact::find_contact`] does, and scores it with
/// [`area_metrics`]. Evidence layers and their r1 buffers are shared across
/// cells. A failing cell records its error and the sweep continues.
pub fn grid_search(
    dataset: &GeoDataset,
    scored_layers: &[&ScoredLayer],
    truth: LayerGeometry<'_>,
    spec: &GridSpec,
) -> Result<GridSearchResult> {
    if scored_layers.len() < 2 {
        return Err(Error::input("grid search needs at least 2 scored layers"));
    }
    if spec.taus.len() != scored_layers.len() {
        return Err(Error::input(format!(
            "{} tau lists for {} scored layers",
            spec.taus.len(),
            scored_layers.len()
        )));
    }
    if spec.taus.iter().any(Vec::is_empty) || spec.r1.is_empty() || spec.r2.is_empty() {
        return Err(Error::input("every grid axis needs at least one value"));
    }
    dataset.crs().require_projected("grid search")?;

    // Evidence per (layer, tau).
    let evidence_jobs: Vec<(usize, usize)> = spec
        .taus
        .iter()
        .enumerate()
        .flat_map(|(l, ts)| (0..ts.len()).map(move |t| (l, t)))
        .collect();
    let evidence: Vec<std::result::Result<(EvidenceLayer, f64), String>> = evidence_jobs
        .par_iter()
        .map(|&(l, t)| {
            select_top(scored_layers[l], spec.taus[l][t], dataset)
                .map(|e| {
                    let a = geometry::area(&e.geometry);
                    (e, a)
                })
                .map_err(|e| e.to_string())
        })
        .collect();
    let evidence_at = |l: usize, t: usize| {
        let offset: usize = spec.taus[..l].iter().map(Vec::len).sum();
        &evidence[offset + t]
    };

    // r1 buffers per (layer, tau, r1).
    let buffer_jobs: Vec<(usize, usize, usize)> = evidence_jobs
        .iter()
        .flat_map(|&(l, t)| (0..spec.r1.len()).map(move |r| (l, t, r)))
        .collect();
    let buffered: Vec<std::result::Result<MultiPolygon, String>> = buffer_jobs
        .par_iter()
        .map(|&(l, t, r)| match evidence_at(l, t) {
            Ok((e, _)) => geometry::buffer(&e.geometry, spec.r1[r], spec.arc_segments).map_err(|e| e.to_string()),
            Err(msg) => Err(msg.clone()),
        })
        .collect();
    let buffered_at = |l: usize, t: usize, r: usize| {
        let offset: usize = spec.taus[..l].iter().map(Vec::len).sum();
        &buffered[(offset + t) * spec.r1.len() + r]
    };

    let cells: Vec<GridCell> = (0..spec.cell_count())
        .into_par_iter()
        .map(|index| {
            let (ti, r1i, r2i) = spec.config(index);
            let taus: Vec<f64> = ti.iter().enumerate().map(|(l, &t)| spec.taus[l][t]).collect();
            let mut cell = GridCell {
                index,
                taus,
                r1: spec.r1[r1i],
                r2: spec.r2[r2i],
                metrics: None,
                selected_area: None,
                error: None,
            };
            let run = || -> std::result::Result<(AreaMetrics, f64), String> {
                let mut parts = Vec::with_capacity(ti.len());
                let mut ids = Vec::with_capacity(ti.len());
                let mut selected_area = 0.0;
                for (l, &t) in ti.iter().enumerate() {
                    let (e, a) = evidence_at(l, t).as_ref().map_err(Clone::clone)?;
                    selected_area += a;
                    ids.push(e.layer_id.as_str());
                    parts.push(buffered_at(l, t, r1i).as_ref().map_err(Clone::clone)?.clone());
                }
                let params = ContactParams {
                    r1: spec.r1[r1i],
                    r2: spec.r2[r2i],
                    arc_segments: spec.arc_segments,
                };
                params.validate().map_err(|e| e.to_string())?;
                let contact = geometry::buffer(&intersect_all(&parts), params.r2, params.arc_segments)
                    .map_err(|e| e.to_string())?;
                let id = contact_layer_id(&ids, &params);
                let pred = LayerGeometry {
                    layer_id: &id,
                    crs: dataset.crs(),
                    geometry: &contact,
                };
                let m = area_metrics(pred, truth).map_err(|e| e.to_string())?;
                Ok((m, selected_area))
            };
            match run() {
                Ok((m, a)) => {
                    cell.metrics = Some(m);
                    cell.selected_area = Some(a);
                }
                Err(e) => cell.error = Some(e),
            }
            cell
        })
        .collect();

    let best_index = cells
        .iter()
        .filter(|c| c.metrics.is_some())
        .min_by(|a, b| better(a, b))
        .map(|c| c.index);
    let best_f1 = best_index.and_then(|i| cells[i].f1());
    Ok(GridSearchResult {
        spec: spec.clone(),
        cells,
        best_index,
        best_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_decoding_is_row_major() {
        let spec = GridSpec {
            taus: vec![vec![0.1, 0.2], vec![0.3, 0.4, 0.5]],
            r1: vec![0.0, 1.0],
            r2: vec![0.0],
            arc_segments: 16,
        };
        assert_eq!(spec.cell_count(), 12);
        assert_eq!(spec.config(0), (vec![0, 0], 0, 0));
        assert_eq!(spec.config(1), (vec![0, 0], 1, 0));
        assert_eq!(spec.config(2), (vec![0, 1], 0, 0));
        assert_eq!(spec.config(11), (vec![1, 2], 1, 0));
    }
}
