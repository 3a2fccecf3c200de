use super::AttackError;
use crate::datasets::{Trace, TracePoint};
use crate::geo::{distance, local_centroid, GeoPoint};

/// A stay: consecutive points within a small diameter over a long enough
/// time span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poi {
    /// Mean of the members' tangent-plane coordinates.
    pub centroid: GeoPoint,
    pub t_start: i64,
    pub t_end: i64,
    pub n_points: usize,
}

impl Poi {
    pub fn dwell(&self) -> i64 {
        self.t_end - self.t_start
    }
}

fn close_group(group: &[TracePoint], min_dwell: i64, out: &mut Vec<Poi>) {
    let (Some(first), Some(last)) = (group.first(), group.last()) else {
        return;
    };
    if last.t - first.t >= min_dwell {
        out.push(Poi {
            centroid: local_centroid(group.iter().map(|p| &p.pos), &first.pos).expect("non-empty group"),
            t_start: first.t,
            t_end: last.t,
            n_points: group.len(),
        });
    }
}

/// Greedy grouping of consecutive points: a group grows while its diameter
/// (largest pairwise distance) stays within `max_diameter` meters, and is
/// kept when it spans at least `min_dwell` seconds.
pub fn extract_pois(tr: &Trace, max_diameter: f64, min_dwell: i64) -> Result<Vec<Poi>, AttackError> {
    if !(max_diameter > 0.0) {
        return Err(AttackError::InvalidParameter("POI diameter must be positive".into()));
    }
    if min_dwell <= 0 {
        return Err(AttackError::InvalidParameter("POI dwell must be positive".into()));
    }
    let mut pois = Vec::new();
    let mut group: Vec<TracePoint> = Vec::new();
    let mut diameter = 0.0f64;
    for p in &tr.points {
        let reach = group.iter().map(|q| distance(&q.pos, &p.pos)).fold(0.0f64, f64::max);
        if group.is_empty() || diameter.max(reach) <= max_diameter {
            diameter = diameter.max(reach);
            group.push(*p);
        } else {
            close_group(&group, min_dwell, &mut pois);
            group.clear();
            group.push(*p);
            diameter = 0.0;
        }
    }
    close_group(&group, min_dwell, &mut pois);
    Ok(pois)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoiMatch {
    pub attacked_index: usize,
    pub orig_index: usize,
    pub distance_m: f64,
}

/// Seconds between the stays' start times plus between their end times.
pub fn time_gap(a: &Poi, b: &Poi) -> i64 {
    (a.t_start - b.t_start).abs() + (a.t_end - b.t_end).abs()
}

/// Maps every attacked POI to the original POI with the nearest centroid.
/// Ties go to the original closest in time, then to the lowest index, so
/// repeated visits to one place match visit by visit. Empty when there are
/// no original POIs.
pub fn match_pois(orig: &[Poi], attacked: &[Poi]) -> Vec<PoiMatch> {
    if orig.is_empty() {
        return Vec::new();
    }
    attacked
        .iter()
        .enumerate()
        .map(|(ai, a)| {
            let (orig_index, distance_m, _) = orig
                .iter()
                .enumerate()
                .map(|(oi, o)| (oi, distance(&a.centroid, &o.centroid), time_gap(a, o)))
                .min_by(|x, y| x.1.total_cmp(&y.1).then(x.2.cmp(&y.2)).then(x.0.cmp(&y.0)))
                .expect("orig is non-empty");
            PoiMatch {
                attacked_index: ai,
                orig_index,
                distance_m,
            }
        })
        .collect()
}
