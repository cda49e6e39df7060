use geo::BoundingRect;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{GeoDataset, RecordId, SiteSet};
use crate::geometry;

/// Cutoff percentiles 1 through 100.
pub const CUTOFF_PERCENTILES: std::ops::RangeInclusive<u32> = 1..=100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveVariant {
    Method,
    RandomMean,
    RandomStd,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub cutoff_percentiles: Vec<u32>,
    pub recall: Vec<f64>,
    pub buffer_m: f64,
    pub variant: CurveVariant,
}

impl RecallCurve {
    pub fn at(&self, percentile: u32) -> Option<f64> {
        self.cutoff_percentiles
            .iter()
            .position(|&p| p == percentile)
            .map(|i| self.recall[i])
    }

    /// `cutoff,recall[,std]` with one row per percentile.
    pub fn to_csv(&self, std: Option<&RecallCurve>) -> String {
        let mut out = String::from(if std.is_some() { "cutoff,recall,std\n" } else { "cutoff,recall\n" });
        for (i, p) in self.cutoff_percentiles.iter().enumerate() {
            match std {
                Some(s) => out.push_str(&format!("{p},{},{}\n", self.recall[i], s.recall[i])),
                None => out.push_str(&format!("{p},{}\n", self.recall[i])),
            }
        }
        out
    }
}

/// Which sites each record covers, with geometry expanded by `buffer_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteCoverage {
    /// Sorted by record id; site indices ascending.
    per_record: Vec<(RecordId, Vec<usize>)>,
    n_sites: usize,
    buffer_m: f64,
}

impl SiteCoverage {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn buffer_m(&self) -> f64 {
        self.buffer_m
    }

    pub fn record_ids(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.per_record.iter().map(|(id, _)| *id)
    }

    pub fn covered_by(&self, id: RecordId) -> Option<&[usize]> {
        self.per_record
            .binary_search_by_key(&id, |(r, _)| *r)
            .ok()
            .map(|i| self.per_record[i].1.as_slice())
    }
}

/// Site coverage per record. A site counts as covered when its distance to
/// the closed polygon is at most `buffer_m`, i.e. it lies in the exact
/// round buffer.
pub fn site_coverage(dataset: &GeoDataset, sites: &SiteSet, buffer_m: f64) -> Result<SiteCoverage> {
    if sites.is_empty() {
        return Err(Error::input("no sites to evaluate against"));
    }
    if !buffer_m.is_finite() || buffer_m < 0.0 {
        return Err(Error::input(format!("buffer_m must be finite and >= 0, got {buffer_m}")));
    }
    if buffer_m > 0.0 {
        dataset.crs().require_projected("buffered recall")?;
    }
    let points = sites.coords_in(dataset.crs())?;
    let per_record = dataset
        .records()
        .par_iter()
        .map(|r| {
            let covered = match r.geometry.bounding_rect() {
                None => Vec::new(),
                Some(b) => points
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| {
                        p.x >= b.min().x - buffer_m
                            && p.x <= b.max().x + buffer_m
                            && p.y >= b.min().y - buffer_m
                            && p.y <= b.max().y + buffer_m
                    })
                    .filter(|(_, p)| geometry::distance_to_point(&r.geometry, **p) <= buffer_m)
                    .map(|(i, _)| i)
                    .collect(),
            };
            (r.record_id, covered)
        })
        .collect();
    Ok(SiteCoverage {
        per_record,
        n_sites: points.len(),
        buffer_m,
    })
}

/// Number of top records kept at cutoff percentile `p` out of `n`:
/// ⌈(100 − p)·n / 100⌉, at least one.
pub fn records_at_cutoff(p: u32, n: usize) -> usize {
    let keep = (100 - p.min(100)) as usize * n;
    keep.div_ceil(100).max(1).min(n)
}

/// Recall at every cutoff for the union of several rankings: at cutoff p
/// the top (100 − p)% of each ranking is taken and their coverage merged.
pub fn recall_curve_union(rankings: &[&[RecordId]], coverage: &SiteCoverage) -> Result<RecallCurve> {
    if coverage.n_sites == 0 {
        return Err(Error::input("no sites to evaluate against"));
    }
    // For each ranking, the earliest rank at which each site is covered.
    let mut first_rank: Vec<Vec<usize>> = Vec::with_capacity(rankings.len());
    for ranking in rankings {
        let mut first = vec![usize::MAX; coverage.n_sites];
        for (rank, &id) in ranking.iter().enumerate() {
            let covered = coverage
                .covered_by(id)
                .ok_or_else(|| Error::input(format!("ranking names unknown record {id}")))?;
            for &s in covered {
                if first[s] == usize::MAX {
                    first[s] = rank;
                }
            }
        }
        first_rank.push(first);
    }

    let mut percentiles = Vec::with_capacity(100);
    let mut recall = Vec::with_capacity(100);
    for p in CUTOFF_PERCENTILES {
        let ks: Vec<usize> = rankings.iter().map(|r| records_at_cutoff(p, r.len())).collect();
        let covered = (0..coverage.n_sites)
            .filter(|&s| first_rank.iter().zip(&ks).any(|(f, &k)| f[s] < k))
            .count();
        percentiles.push(p);
        recall.push(covered as f64 / coverage.n_sites as f64);
    }
    Ok(RecallCurve {
        cutoff_percentiles: percentiles,
        recall,
        buffer_m: coverage.buffer_m,
        variant: CurveVariant::Method,
    })
}

/// Recall of a single best-first ranking at cutoffs 1..=100.
pub fn recall_curve(
    ranking: &[RecordId],
    dataset: &GeoDataset,
    sites: &SiteSet,
    buffer_m: f64,
) -> Result<RecallCurve> {
    let coverage = site_coverage(dataset, sites, buffer_m)?;
    recall_curve_union(&[ranking], &coverage)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Rank by the number of sites each record covers on its own.
    #[default]
    Static,
    /// Repeatedly take the record covering the most not-yet-covered sites.
    GreedyMarginal,
}

/// Ranking by covered-site count, ties by ascending record id.
pub fn oracle_ranking(coverage: &SiteCoverage, mode: OracleMode) -> Vec<RecordId> {
    match mode {
        OracleMode::Static => {
            let mut ids: Vec<(RecordId, usize)> = coverage
                .per_record
                .iter()
                .map(|(id, c)| (*id, c.len()))
                .collect();
            ids.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ids.into_iter().map(|(id, _)| id).collect()
        }
        OracleMode::GreedyMarginal => {
            let mut taken = vec![false; coverage.per_record.len()];
            let mut seen = vec![false; coverage.n_sites];
            let mut out = Vec::with_capacity(taken.len());
            for _ in 0..taken.len() {
                let mut best: Option<(usize, usize)> = None;
                for (i, (_, c)) in coverage.per_record.iter().enumerate() {
                    if taken[i] {
                        continue;
                    }
                    let gain = c.iter().filter(|&&s| !seen[s]).count();
                    // per_record is id-sorted, so strict > keeps the lower id.
                    if best.is_none_or(|(_, g)| gain > g) {
                        best = Some((i, gain));
                    }
                }
                let (i, _) = best.expect("untaken record remains");
                taken[i] = true;
                for &s in &coverage.per_record[i].1 {
                    seen[s] = true;
                }
                out.push(coverage.per_record[i].0);
            }
            out
        }
    }
}

/// `trials` seeded shuffles of every record id.
pub fn random_rankings(coverage: &SiteCoverage, trials: usize, seed: u64) -> Vec<Vec<RecordId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<RecordId> = coverage.record_ids().collect();
    (0..trials)
        .map(|_| {
            let mut r = ids.clone();
            r.shuffle(&mut rng);
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub random_mean: RecallCurve,
    /// Sample standard deviation across trials (zero for one trial).
    pub random_std: RecallCurve,
    pub oracle: RecallCurve,
}

pub fn baseline_curves(
    dataset: &GeoDataset,
    sites: &SiteSet,
    trials: usize,
    seed: u64,
    buffer_m: f64,
    oracle_mode: OracleMode,
) -> Result<Baselines> {
    if trials == 0 {
        return Err(Error::input("trials must be >= 1"));
    }
    let coverage = site_coverage(dataset, sites, buffer_m)?;
    let curves: Vec<RecallCurve> = random_rankings(&coverage, trials, seed)
        .iter()
        .map(|r| recall_curve_union(&[r], &coverage))
        .collect::<Result<_>>()?;

    let n = trials as f64;
    let len = curves[0].recall.len();
    let mean: Vec<f64> = (0..len)
        .map(|i| curves.iter().map(|c| c.recall[i]).sum::<f64>() / n)
        .collect();
    let std: Vec<f64> = (0..len)
        .map(|i| {
            if trials < 2 {
                return 0.0;
            }
            let ss: f64 = curves.iter().map(|c| (c.recall[i] - mean[i]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();

    let percentiles = curves[0].cutoff_percentiles.clone();
    let oracle_rank = oracle_ranking(&coverage, oracle_mode);
    let mut oracle = recall_curve_union(&[&oracle_rank], &coverage)?;
    oracle.variant = CurveVariant::Oracle;
    Ok(Baselines {
        random_mean: RecallCurve {
            cutoff_percentiles: percentiles.clone(),
            recall: mean,
            buffer_m,
            variant: CurveVariant::RandomMean,
        },
        random_std: RecallCurve {
            cutoff_percentiles: percentiles,
            recall: std,
            buffer_m,
            variant: CurveVariant::RandomStd,
        },
        oracle,
    })
}
