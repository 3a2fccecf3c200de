use super::{Trace, TracePoint};
use crate::geo::distance;

fn greedy_keep(tr: &Trace, far_enough: impl Fn(&TracePoint, &TracePoint) -> bool) -> Trace {
    let mut kept: Vec<TracePoint> = Vec::with_capacity(tr.len());
    for p in &tr.points {
        match kept.last() {
            Some(last) if !far_enough(last, p) => {}
            _ => kept.push(*p),
        }
    }
    Trace {
        user_id: tr.user_id.clone(),
        points: kept,
    }
}

/// Keeps the first point, then every point at least `min_dt_s` seconds after
/// the last kept one.
pub fn temporal_subsample(tr: &Trace, min_dt_s: i64) -> Trace {
    greedy_keep(tr, |last, p| p.t - last.t >= min_dt_s)
}

/// Keeps the first point, then every point at least `min_m` meters from the
/// last kept one.
pub fn spatial_subsample(tr: &Trace, min_m: f64) -> Trace {
    greedy_keep(tr, |last, p| distance(&last.pos, &p.pos) >= min_m)
}
