//! Static 3-d tree over unit vectors. Chord length is monotone in
//! great-circle distance, so nearest-by-chord is nearest-by-arc.

use crate::geo::GeoPoint;

pub(crate) fn unit_vector(p: &GeoPoint) -> [f64; 3] {
    let (phi, lambda) = (p.lat().to_radians(), p.lon().to_radians());
    [phi.cos() * lambda.cos(), phi.cos() * lambda.sin(), phi.sin()]
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

#[derive(Debug, Clone)]
pub(crate) struct KdTree {
    /// Implicit balanced tree: the median of each range is its node.
    items: Vec<([f64; 3], usize)>,
}

impl KdTree {
    pub fn build(points: impl IntoIterator<Item = [f64; 3]>) -> Self {
        let mut items: Vec<([f64; 3], usize)> = points.into_iter().enumerate().map(|(i, p)| (p, i)).collect();
        build_rec(&mut items, 0);
        Self { items }
    }

    /// Squared chord distance to the nearest item.
    pub fn nearest_dist2(&self, q: &[f64; 3]) -> Option<f64> {
        if self.items.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        nearest_rec(&self.items, 0, q, &mut best);
        Some(best)
    }

    /// Payloads of all items within squared chord distance `r2` of `q`.
    pub fn within(&self, q: &[f64; 3], r2: f64, out: &mut Vec<usize>) {
        within_rec(&self.items, 0, q, r2, out);
    }
}

fn build_rec(items: &mut [([f64; 3], usize)], depth: usize) {
    if items.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
    let (left, right) = items.split_at_mut(mid);
    build_rec(left, depth + 1);
    build_rec(&mut right[1..], depth + 1);
}

fn nearest_rec(items: &[([f64; 3], usize)], depth: usize, q: &[f64; 3], best: &mut f64) {
    if items.is_empty() {
        return;
    }
    let mid = items.len() / 2;
    let (p, _) = &items[mid];
    *best = best.min(dist2(p, q));
    let axis = depth % 3;
    let diff = q[axis] - p[axis];
    let (near, far) = if diff < 0.0 {
        (&items[..mid], &items[mid + 1..])
    } else {
        (&items[mid + 1..], &items[..mid])
    };
    nearest_rec(near, depth + 1, q, best);
    if diff * diff <= *best {
        nearest_rec(far, depth + 1, q, best);
    }
}

fn within_rec(items: &[([f64; 3], usize)], depth: usize, q: &[f64; 3], r2: f64, out: &mut Vec<usize>) {
    if items.is_empty() {
        return;
    }
    let mid = items.len() / 2;
    let (p, idx) = &items[mid];
    if dist2(p, q) <= r2 {
        out.push(*idx);
    }
    let axis = depth % 3;
    let diff = q[axis] - p[axis];
    if diff <= 0.0 || diff * diff <= r2 {
        within_rec(&items[..mid], depth + 1, q, r2, out);
    }
    if diff >= 0.0 || diff * diff <= r2 {
        within_rec(&items[mid + 1..], depth + 1, q, r2, out);
    }
}
