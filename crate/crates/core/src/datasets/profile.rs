use super::{Dataset, Trace};
use crate::geo::{distance, to_local_unchecked, GeoPoint};

/// Median per-user attributes of a dataset.
///
/// Each field is `None` when no user could contribute to it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetProfile {
    pub n_users: usize,
    pub n_points: usize,
    pub points_per_user: Option<f64>,
    /// Meters between consecutive points.
    pub consecutive_distance_m: Option<f64>,
    pub frequency_hz: Option<f64>,
    pub velocity_mps: Option<f64>,
    pub time_window_days: Option<f64>,
    /// Points per square kilometre of the user's convex hull.
    pub density_per_km2: Option<f64>,
    /// Convex hull area of the user's points.
    pub area_km2: Option<f64>,
    /// Per-user contributions skipped because the trace was degenerate
    /// (fewer than two points, zero duration, or a hull under 1 m²).
    pub degenerate: usize,
}

/// Median of a sample; the mean of the two central values for even sizes.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Area of the convex hull of `points`, in km², computed in the tangent
/// plane of the first point.
pub fn convex_hull_area_km2(points: &[GeoPoint]) -> f64 {
    let Some(reference) = points.first() else {
        return 0.0;
    };
    let mut xy: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let v = to_local_unchecked(p, reference);
            (v.x, v.y)
        })
        .collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.dedup();
    if xy.len() < 3 {
        return 0.0;
    }
    // Andrew's monotone chain.
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * xy.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(xy.iter())
        } else {
            Box::new(xy.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let twice: f64 = (0..hull.len())
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() / 2.0 / 1e6
}

/// Hulls under one square metre (collinear or coincident points) do not
/// yield a density.
const MIN_HULL_AREA_KM2: f64 = 1e-6;

#[derive(Default)]
struct Columns {
    points: Vec<f64>,
    gap: Vec<f64>,
    freq: Vec<f64>,
    vel: Vec<f64>,
    window: Vec<f64>,
    density: Vec<f64>,
    area: Vec<f64>,
    degenerate: usize,
}

impl Columns {
    fn add(&mut self, tr: &Trace) {
        let n = tr.len();
        self.points.push(n as f64);
        if n < 2 {
            self.degenerate += 1;
            return;
        }
        let mut gaps: Vec<f64> = tr.points.windows(2).map(|w| distance(&w[0].pos, &w[1].pos)).collect();
        let path: f64 = gaps.iter().sum();
        self.gap.extend(median(&mut gaps));

        let duration = (tr.points[n - 1].t - tr.points[0].t) as f64;
        self.window.push(duration / 86_400.0);
        if duration > 0.0 {
            let freq = (n - 1) as f64 / duration;
            debug_assert!(((freq * duration) - (n - 1) as f64).abs() < 1e-6 * n as f64);
            self.freq.push(freq);
            self.vel.push(path / duration);
        } else {
            self.degenerate += 1;
        }

        let positions: Vec<GeoPoint> = tr.positions().copied().collect();
        let area = convex_hull_area_km2(&positions);
        self.area.push(area);
        if area >= MIN_HULL_AREA_KM2 {
            self.density.push(n as f64 / area);
        } else {
            self.degenerate += 1;
        }
    }
}

/// Per-user attributes followed by the median across users.
pub fn profile(ds: &Dataset) -> DatasetProfile {
    let mut c = Columns::default();
    for tr in &ds.traces {
        c.add(tr);
    }
    DatasetProfile {
        n_users: ds.traces.len(),
        n_points: ds.n_points(),
        points_per_user: median(&mut c.points),
        consecutive_distance_m: median(&mut c.gap),
        frequency_hz: median(&mut c.freq),
        velocity_mps: median(&mut c.vel),
        time_window_days: median(&mut c.window),
        density_per_km2: median(&mut c.density),
        area_km2: median(&mut c.area),
        degenerate: c.degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::test_util::trace;
    use crate::datasets::SourceFormat;
    use crate::geo::{from_local_unchecked, LocalXY};
    use proptest::prelude::*;

    fn offset(x: f64, y: f64) -> (f64, f64) {
        let p = from_local_unchecked(&LocalXY {
            x,
            y,
            reference: GeoPoint::new(37.7, -122.4).unwrap(),
        });
        (p.lat(), p.lon())
    }

    #[test]
    fn three_points_hand_computed() {
        let pts: Vec<(i64, f64, f64)> = (0..3)
            .map(|i| {
                let (lat, lon) = offset(0.0, 100.0 * i as f64);
                (10 * i as i64, lat, lon)
            })
            .collect();
        let ds = Dataset::new("d", SourceFormat::Synthetic, vec![trace("u", &pts)]).unwrap();
        let p = profile(&ds);
        assert!((p.frequency_hz.unwrap() - 0.1).abs() < 1e-12);
        assert!((p.velocity_mps.unwrap() - 10.0).abs() < 1e-6);
        assert!((p.consecutive_distance_m.unwrap() - 100.0).abs() < 1e-6);
        assert_eq!(p.points_per_user, Some(3.0));
        assert!((p.time_window_days.unwrap() - 20.0 / 86_400.0).abs() < 1e-15);
        // Collinear points have no area.
        assert!(p.area_km2.unwrap() < 1e-9);
        assert_eq!(p.density_per_km2, None);
        assert_eq!(p.degenerate, 1);
    }

    #[test]
    fn square_hull() {
        let corners = [
            offset(0.0, 0.0),
            offset(1000.0, 0.0),
            offset(1000.0, 1000.0),
            offset(0.0, 1000.0),
            offset(500.0, 500.0),
            offset(200.0, 700.0),
        ];
        let pts: Vec<GeoPoint> = corners.iter().map(|&(a, b)| GeoPoint::new(a, b).unwrap()).collect();
        assert!((convex_hull_area_km2(&pts) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn identical_users_give_common_value() {
        let pts: Vec<(i64, f64, f64)> = [(0.0, 0.0), (300.0, 0.0), (300.0, 400.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let (lat, lon) = offset(x, y);
                (60 * i as i64, lat, lon)
            })
            .collect();
        let single = profile(&Dataset::new("d", SourceFormat::Synthetic, vec![trace("a", &pts)]).unwrap());
        let many = profile(
            &Dataset::new(
                "d",
                SourceFormat::Synthetic,
                (0..5).map(|i| trace(&format!("u{i}"), &pts)).collect(),
            )
            .unwrap(),
        );
        assert_eq!(single.velocity_mps, many.velocity_mps);
        assert_eq!(single.area_km2, many.area_km2);
        assert_eq!(single.density_per_km2, many.density_per_km2);
        assert!((single.area_km2.unwrap() - 0.06).abs() < 1e-6);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            users in prop::collection::vec(prop::collection::vec((1i64..600, -500.0..500.0f64, -500.0..500.0f64), 1..15), 1..8),
            rot in 0usize..8,
        ) {
            let traces: Vec<Trace> = users.iter().enumerate().map(|(u, steps)| {
                let mut t = 0;
                let pts: Vec<(i64, f64, f64)> = steps.iter().map(|&(dt, x, y)| {
                    t += dt;
                    let (lat, lon) = offset(x, y);
                    (t, lat, lon)
                }).collect();
                trace(&format!("u{u}"), &pts)
            }).collect();
            let mut rotated = traces.clone();
            rotated.rotate_left(rot % traces.len());
            let a = profile(&Dataset::new("d", SourceFormat::Synthetic, traces).unwrap());
            let b = profile(&Dataset::new("d", SourceFormat::Synthetic, rotated).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
