use super::AttackError;
use crate::datasets::Trace;
use crate::geo::local_centroid;

/// Replaces each point by the centroid of the points up to `k` before and
/// `k` after it (itself included), truncated at the ends of the trace.
pub fn sliding_average(tr: &Trace, k: usize) -> Result<Trace, AttackError> {
    if k == 0 {
        return Err(AttackError::InvalidParameter(
            "sliding window radius must be at least 1".into(),
        ));
    }
    let n = tr.len();
    let positions = (0..n)
        .map(|i| {
            let window = &tr.points[i.saturating_sub(k)..(i + k + 1).min(n)];
            local_centroid(window.iter().map(|p| &p.pos), &tr.points[i].pos).expect("window contains the point itself")
        })
        .collect();
    Ok(tr.with_positions(positions))
}
