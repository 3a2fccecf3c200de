//! Privacy and utility measurements comparing an original trace with an
//! obfuscated or attacked one.

use thiserror::Error;

use crate::attacks::{match_pois, Poi};
use crate::datasets::Trace;
use crate::geo::distance;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("traces differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("timestamps differ at index {0}")]
    TimestampMismatch(usize),
    #[error("cannot score an empty trace")]
    EmptyTrace,
    #[error("alpha grid must be positive and ascending")]
    InvalidAlphas,
}

/// α milestones reported separately: the use-case thresholds in meters.
pub const USE_CASE_ALPHAS: [f64; 3] = [500.0, 1_000.0, 10_000.0];

/// 100 m to 10 km in 100 m steps.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 * 100.0).collect()
}

fn displacements(orig: &Trace, other: &Trace) -> Result<Vec<f64>, MetricError> {
    if orig.len() != other.len() {
        return Err(MetricError::LengthMismatch(orig.len(), other.len()));
    }
    if orig.is_empty() {
        return Err(MetricError::EmptyTrace);
    }
    orig.points
        .iter()
        .zip(&other.points)
        .enumerate()
        .map(|(i, (a, b))| {
            if a.t != b.t {
                Err(MetricError::TimestampMismatch(i))
            } else {
                Ok(distance(&a.pos, &b.pos))
            }
        })
        .collect()
}

/// Mean distance in meters between corresponding points.
pub fn average_error(orig: &Trace, other: &Trace) -> Result<f64, MetricError> {
    let d = displacements(orig, other)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Empirical (α, δ)-usefulness: δ(α) is the share of points displaced by at
/// most α meters.
#[derive(Debug, Clone, PartialEq)]
pub struct UsefulnessCurve {
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl UsefulnessCurve {
    pub fn delta_at(&self, alpha: f64) -> Option<f64> {
        self.alphas.iter().position(|&a| a == alpha).map(|i| self.deltas[i])
    }
}

pub fn usefulness_curve(orig: &Trace, other: &Trace, alphas: &[f64]) -> Result<UsefulnessCurve, MetricError> {
    if alphas.iter().any(|a| !(*a > 0.0)) || alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricError::InvalidAlphas);
    }
    let mut d = displacements(orig, other)?;
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    let deltas = alphas
        .iter()
        .map(|&a| d.partition_point(|&x| x <= a) as f64 / n)
        .collect();
    Ok(UsefulnessCurve {
        alphas: alphas.to_vec(),
        deltas,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiReport {
    /// Share of original POIs with at least one attacked POI mapped to
    /// them; `None` when there are no original POIs.
    pub recall: Option<f64>,
    /// Mean distance between attacked POIs and the original POI each maps
    /// to; `None` when nothing was mapped.
    pub mean_matched_distance: Option<f64>,
    pub n_orig: usize,
    pub n_attacked: usize,
}

pub fn poi_report(orig: &[Poi], attacked: &[Poi]) -> PoiReport {
    let matches = match_pois(orig, attacked);
    let mut hit = vec![false; orig.len()];
    for m in &matches {
        hit[m.orig_index] = true;
    }
    let recall = (!orig.is_empty()).then(|| hit.iter().filter(|&&h| h).count() as f64 / orig.len() as f64);
    let mean_matched_distance =
        (!matches.is_empty()).then(|| matches.iter().map(|m| m.distance_m).sum::<f64>() / matches.len() as f64);
    PoiReport {
        recall,
        mean_matched_distance,
        n_orig: orig.len(),
        n_attacked: attacked.len(),
    }
}
