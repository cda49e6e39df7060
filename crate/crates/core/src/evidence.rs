//! Query scoring, percentile thresholding, and evidence layers.

use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedder};
use crate::error::{Error, Result};
use crate::geodata::{clean_description, GeoDataset, RecordId};
use crate::geometry::{self, MultiPolygon};
use crate::ids::content_id;
use crate::projection::Crs;

/// Similarity of every eligible record to one query. Scores are kept with
/// the layer so re-thresholding never needs the embedder again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLayer {
    pub layer_id: String,
    pub dataset_id: String,
    pub query: String,
    pub provider_id: String,
    pub model_name: String,
    /// Sorted by record id.
    pub scores: Vec<(RecordId, f64)>,
    /// Records whose description embedded to the empty vector.
    pub excluded: Vec<RecordId>,
    pub created_at: DateTime<Utc>,
}

impl ScoredLayer {
    pub fn eligible(&self) -> usize {
        self.scores.len()
    }

    pub fn score_of(&self, id: RecordId) -> Option<f64> {
        self.scores
            .binary_search_by_key(&id, |&(r, _)| r)
            .ok()
            .map(|i| self.scores[i].1)
    }

    /// Record ids best first: descending score, ascending id on ties.
    pub fn ranking(&self) -> Vec<RecordId> {
        rank(&self.scores).into_iter().map(|(id, _)| id).collect()
    }

    pub fn score_values(&self) -> Vec<f64> {
        self.scores.iter().map(|&(_, s)| s).collect()
    }
}

fn rank(scores: &[(RecordId, f64)]) -> Vec<(RecordId, f64)> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(rank_order);
    ranked
}

/// Top-τ selection of a scored layer with the union of its polygons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceLayer {
    pub layer_id: String,
    pub source_scored_layer_id: String,
    pub dataset_id: String,
    pub crs: Crs,
    pub tau: f64,
    /// (record id, score) in rank order.
    pub selected: Vec<(RecordId, f64)>,
    pub geometry: MultiPolygon,
}

impl EvidenceLayer {
    pub fn selected_ids(&self) -> Vec<RecordId> {
        self.selected.iter().map(|&(id, _)| id).collect()
    }
}

/// Embed the query and every record description, then score each record by
/// cosine similarity.
pub fn score_dataset(dataset: &GeoDataset, query: &str, embedder: &Embedder) -> Result<ScoredLayer> {
    if dataset.is_empty() {
        return Err(Error::input(format!("dataset {} has no records", dataset.dataset_id())));
    }
    let query = clean_description(query);
    if query.is_empty() {
        return Err(Error::input("query is empty"));
    }
    let (q, _) = embedder.embed(std::slice::from_ref(&query))?;
    let q = &q[0];
    if q.is_empty() {
        return Err(Error::input(format!("query {query:?} has no embeddable tokens")));
    }

    let descs: Vec<String> = dataset.records().iter().map(|r| r.full_desc.clone()).collect();
    let (vectors, stats) = embedder.embed(&descs)?;
    tracing::debug!(?stats, dataset = dataset.dataset_id(), "embedded descriptions");

    let mut scores = Vec::with_capacity(vectors.len());
    let mut excluded = Vec::new();
    for (record, v) in dataset.records().iter().zip(&vectors) {
        if v.is_empty() {
            excluded.push(record.record_id);
        } else {
            scores.push((record.record_id, cosine(q, v)?));
        }
    }

    let spec = embedder.spec();
    let layer_id = content_id(
        "sl",
        &[
            dataset.dataset_id().as_bytes(),
            spec.provider_id.as_bytes(),
            spec.model_name.as_bytes(),
            &(spec.dims as u64).to_le_bytes(),
            query.as_bytes(),
        ],
    );
    Ok(ScoredLayer {
        layer_id,
        dataset_id: dataset.dataset_id().to_string(),
        query,
        provider_id: spec.provider_id.clone(),
        model_name: spec.model_name.clone(),
        scores,
        excluded,
        created_at: Utc::now(),
    })
}

/// k = ⌈τ·n⌉, computed so that products that land on an integer up to
/// rounding (0.3·10) do not spill into the next record.
pub fn selection_size(tau: f64, n: usize) -> usize {
    let raw = tau * n as f64;
    let k = (raw - 1e-9 * raw.max(1.0)).ceil();
    (k.max(0.0) as usize).min(n)
}

pub fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("tau must be in (0, 1], got {tau}")))
    }
}

/// τ for a percentile cutoff p: keep everything scoring above the p-th
/// percentile.
pub fn tau_from_percentile(p: f64) -> Result<f64> {
    if !(0.0..100.0).contains(&p) {
        return Err(Error::input(format!("percentile cutoff must be in [0, 100), got {p}")));
    }
    Ok(1.0 - p / 100.0)
}

/// Keep the top ⌈τ·N⌉ eligible records and union their geometry.
pub fn select_top(scored: &ScoredLayer, tau: f64, dataset: &GeoDataset) -> Result<EvidenceLayer> {
    check_tau(tau)?;
    if scored.dataset_id != dataset.dataset_id() {
        return Err(Error::input(format!(
            "scored layer {} belongs to dataset {}, not {}",
            scored.layer_id,
            scored.dataset_id,
            dataset.dataset_id()
        )));
    }
    let k = selection_size(tau, scored.eligible());
    let mut selected = rank(&scored.scores);
    selected.truncate(k);

    let mut parts = Vec::with_capacity(k);
    for &(id, _) in &selected {
        let rec = dataset
            .record(id)
            .ok_or_else(|| Error::state(format!("record {id} missing from {}", dataset.dataset_id())))?;
        parts.push(&rec.geometry);
    }
    let geometry = geometry::union_all(parts);

    Ok(EvidenceLayer {
        layer_id: content_id("ev", &[scored.layer_id.as_bytes(), &tau.to_le_bytes()]),
        source_scored_layer_id: scored.layer_id.clone(),
        dataset_id: scored.dataset_id.clone(),
        crs: dataset.crs(),
        tau,
        selected,
        geometry,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Equal-width histogram over [min, max].
///
/// Bins are closed on the right, (low, high], and the first bin also
/// includes its left edge, so `[0, 0.5, 1]` in two bins counts 2 then 1. A
/// single distinct value produces one bin.
pub fn layer_histogram(scores: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::input("histogram needs at least one bin"));
    }
    if scores.is_empty() {
        return Err(Error::input("no scores to histogram"));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(vec![HistogramBin {
            low: min,
            high: max,
            count: scores.len(),
        }]);
    }
    let width = (max - min) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { max } else { min + i as f64 * width })
        .collect();
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let mut i = (((s - min) / width).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
        // Settle against the reported edges rather than the division.
        while i > 0 && s <= edges[i] {
            i -= 1;
        }
        while i + 1 < bins && s > edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            low: edges[i],
            high: edges[i + 1],
            count,
        })
        .collect())
}

/// Order two (id, score) pairs best first.
pub fn rank_order(a: &(RecordId, f64), b: &(RecordId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::PolygonRecord;
    use crate::geometry::rect;

    fn dataset(descs: &[&str]) -> GeoDataset {
        let records = descs
            .iter()
            .enumerate()
            .map(|(i, d)| PolygonRecord {
                record_id: i as u64,
                key: vec![i.to_string()],
                attributes: vec![("DESC".into(), d.to_string())],
                geometry: rect(i as f64 * 2.0, 0.0, i as f64 * 2.0 + 1.0, 1.0),
                full_desc: d.to_string(),
            })
            .collect();
        GeoDataset::new("ds-test", Crs::GeographicWgs84, vec!["DESC".into()], vec!["K".into()], "test", records)
            .unwrap()
    }

    fn scored(scores: &[(RecordId, f64)]) -> ScoredLayer {
        let mut scores = scores.to_vec();
        scores.sort_by_key(|s| s.0);
        ScoredLayer {
            layer_id: "sl-x".into(),
            dataset_id: "ds-test".into(),
            query: "q".into(),
            provider_id: "reference".into(),
            model_name: "m".into(),
            scores,
            excluded: vec![],
            created_at: Utc::now(),
        }
    }

    #[test]
    fn bag_of_words_scores() {
        let ds = dataset(&["granite", "limestone", "granite limestone"]);
        let emb = Embedder::new(Box::new(crate::embed::ReferenceProvider::new(256)));
        let s = score_dataset(&ds, "granite", &emb).unwrap();
        let want = [1.0, 0.0, std::f64::consts::FRAC_1_SQRT_2];
        for (&(_, got), want) in s.scores.iter().zip(want) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn identical_query_scores_one() {
        let ds = dataset(&["Biotite granite, medium grained. Cretaceous"]);
        let s = score_dataset(&ds, "Biotite granite, medium grained. Cretaceous", &Embedder::reference()).unwrap();
        assert!((s.scores[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_descriptions_excluded() {
        let ds = dataset(&["granite", "..."]);
        let s = score_dataset(&ds, "granite", &Embedder::reference()).unwrap();
        assert_eq!(s.eligible(), 1);
        assert_eq!(s.excluded, vec![1]);
    }

    #[test]
    fn empty_query_rejected() {
        let ds = dataset(&["granite"]);
        assert!(matches!(score_dataset(&ds, "  ", &Embedder::reference()), Err(Error::Input(_))));
    }

    #[test]
    fn top_two_of_five() {
        let ds = dataset(&["a", "b", "c", "d", "e"]);
        let s = scored(&[(0, 0.9), (1, 0.8), (2, 0.7), (3, 0.6), (4, 0.5)]);
        let e = select_top(&s, 0.4, &ds).unwrap();
        assert_eq!(e.selected_ids(), vec![0, 1]);
        assert!((geometry::area(&e.geometry) - 2.0).abs() < 1e-12);
        assert_eq!(select_top(&s, 1.0, &ds).unwrap().selected.len(), 5);
    }

    #[test]
    fn ties_by_record_id() {
        let ds = dataset(&["a", "b", "c"]);
        let s = scored(&[(2, 0.9), (0, 0.9), (1, 0.9)]);
        let mut ids = select_top(&s, 0.34, &ds).unwrap().selected_ids();
        ids.sort();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn tau_range() {
        let ds = dataset(&["a"]);
        let s = scored(&[(0, 0.5)]);
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(select_top(&s, bad, &ds), Err(Error::Input(_))));
        }
    }

    #[test]
    fn selection_size_rounding() {
        assert_eq!(selection_size(0.3, 10), 3);
        assert_eq!(selection_size(0.1, 30), 3);
        assert_eq!(selection_size(0.34, 3), 2);
        assert_eq!(selection_size(0.001, 10), 1);
        assert_eq!(selection_size(1.0, 7), 7);
    }

    #[test]
    fn percentile_conversion() {
        assert_eq!(tau_from_percentile(80.0).unwrap(), 1.0 - 0.8);
        assert!(tau_from_percentile(100.0).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = layer_histogram(&[0.0, 0.5, 1.0], 2).unwrap();
        assert_eq!(
            h,
            vec![
                HistogramBin { low: 0.0, high: 0.5, count: 2 },
                HistogramBin { low: 0.5, high: 1.0, count: 1 }
            ]
        );
        let h = layer_histogram(&[0.3; 4], 10).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].count, 4);
        assert!(layer_histogram(&[], 3).is_err());
        assert!(layer_histogram(&[1.0], 0).is_err());
    }

    #[test]
    fn histogram_conserves_count() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let scores: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let h = layer_histogram(&scores, 50).unwrap();
        assert_eq!(h.len(), 50);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 1000);
    }
}
