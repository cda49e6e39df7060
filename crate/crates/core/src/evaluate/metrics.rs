use serde::{Deserialize, Serialize};

use crate::contact::LayerGeometry;
use crate::error::{Error, Result};
use crate::geometry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// Set when the prediction has zero area; precision is then reported
    /// as 0.
    pub empty_prediction: bool,
    pub pred_area: f64,
    pub truth_area: f64,
    pub intersection_area: f64,
    pub pred_layer_id: String,
    pub truth_layer_id: String,
}

/// Overlap of a predicted region with a reference region.
pub fn area_metrics(pred: LayerGeometry<'_>, truth: LayerGeometry<'_>) -> Result<AreaMetrics> {
    if pred.crs != truth.crs {
        return Err(Error::state(format!(
            "prediction is {} but truth is {}",
            pred.crs.label(),
            truth.crs.label()
        )));
    }
    pred.crs.require_projected("area metrics")?;
    let truth_area = geometry::area(truth.geometry);
    if truth_area <= 0.0 {
        return Err(Error::input(format!("truth layer {} is empty", truth.layer_id)));
    }
    let pred_area = geometry::area(pred.geometry);
    let inter = geometry::area(&geometry::intersection(pred.geometry, truth.geometry));
    Ok(from_areas(pred_area, truth_area, inter, pred.layer_id, truth.layer_id))
}

pub(crate) fn from_areas(
    pred_area: f64,
    truth_area: f64,
    inter: f64,
    pred_layer_id: &str,
    truth_layer_id: &str,
) -> AreaMetrics {
    // Overlay rounding can leave the intersection a hair above either
    // operand; clamp so the ratios stay in [0, 1].
    let inter = inter.min(pred_area).min(truth_area).max(0.0);
    let empty_prediction = pred_area <= 0.0;
    let precision = if empty_prediction { 0.0 } else { inter / pred_area };
    let recall = inter / truth_area;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let union = pred_area + truth_area - inter;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    AreaMetrics {
        precision,
        recall,
        f1,
        iou,
        empty_prediction,
        pred_area,
        truth_area,
        intersection_area: inter,
        pred_layer_id: pred_layer_id.to_string(),
        truth_layer_id: truth_layer_id.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rect;
    use crate::projection::{AlbersParams, Crs};

    fn lg(g: &geometry::MultiPolygon) -> LayerGeometry<'_> {
        LayerGeometry {
            layer_id: "l",
            crs: Crs::AlbersConicProjected(AlbersParams::default()),
            geometry: g,
        }
    }

    #[test]
    fn analytic_fixtures() {
        let sq = rect(0.0, 0.0, 1.0, 1.0);
        let m = area_metrics(lg(&sq), lg(&sq)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (1.0, 1.0, 1.0, 1.0));

        let far = rect(3.0, 0.0, 4.0, 1.0);
        let m = area_metrics(lg(&far), lg(&sq)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (0.0, 0.0, 0.0, 0.0));

        let half = rect(0.5, 0.0, 1.5, 1.0);
        let m = area_metrics(lg(&half), lg(&sq)).unwrap();
        assert!((m.precision - 0.5).abs() < 1e-9);
        assert!((m.recall - 0.5).abs() < 1e-9);
        assert!((m.f1 - 0.5).abs() < 1e-9);
        assert!((m.iou - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_prediction_flagged() {
        let sq = rect(0.0, 0.0, 1.0, 1.0);
        let m = area_metrics(lg(&geometry::empty()), lg(&sq)).unwrap();
        assert!(m.empty_prediction);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn empty_truth_rejected() {
        let sq = rect(0.0, 0.0, 1.0, 1.0);
        assert!(matches!(area_metrics(lg(&sq), lg(&geometry::empty())), Err(Error::Input(_))));
    }

    #[test]
    fn crs_mismatch() {
        let sq = rect(0.0, 0.0, 1.0, 1.0);
        let geo = LayerGeometry {
            layer_id: "g",
            crs: Crs::GeographicWgs84,
            geometry: &sq,
        };
        assert!(matches!(area_metrics(lg(&sq), geo), Err(Error::State(_))));
    }
}
