use rand::Rng;

use super::planar_laplace::planar_laplace_point;
use super::{Epsilon, MechanismError, Seed};
use crate::datasets::Trace;
use crate::geo::{distance, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Meters around the spawning real location.
    pub radius: f64,
    pub epsilon: Epsilon,
}

impl ClusterParams {
    pub fn new(radius: f64, epsilon: Epsilon) -> Result<Self, MechanismError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(MechanismError::InvalidParameter(format!(
                "cluster radius must be positive, got {radius}"
            )));
        }
        Ok(Self { radius, epsilon })
    }
}

/// Real locations that spawned a report, and the report for each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterMemory {
    real: Vec<GeoPoint>,
    obf: Vec<GeoPoint>,
}

impl ClusterMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }

    pub fn real(&self) -> &[GeoPoint] {
        &self.real
    }

    pub fn reported(&self) -> &[GeoPoint] {
        &self.obf
    }

    /// Index and distance of the stored real location nearest to `x`;
    /// the lowest index wins ties.
    pub fn nearest(&self, x: &GeoPoint) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.real.iter().enumerate() {
            let d = distance(x, p);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    fn push(&mut self, x: GeoPoint, z: GeoPoint) {
        self.real.push(x);
        self.obf.push(z);
    }
}

/// One step of memory clustering: reuse the report of the nearest stored
/// location when it lies within `radius`, otherwise draw a fresh planar
/// Laplace report and remember it.
pub fn memory_clustering_step<R: Rng + ?Sized>(
    memory: &mut ClusterMemory,
    x: &GeoPoint,
    params: &ClusterParams,
    rng: &mut R,
) -> Result<GeoPoint, MechanismError> {
    if let Some((idx, d)) = memory.nearest(x) {
        if d <= params.radius {
            return Ok(memory.obf[idx]);
        }
    }
    let z = planar_laplace_point(x, params.epsilon, rng)?;
    memory.push(*x, z);
    Ok(z)
}

/// Clustering geo-indistinguishability: a single active cluster, replaced
/// whenever the user leaves it.
pub fn obfuscate_clustering(tr: &Trace, params: &ClusterParams, seed: Seed) -> Result<Trace, MechanismError> {
    let mut rng = seed.rng();
    let mut current: Option<(GeoPoint, GeoPoint)> = None;
    let mut out = Vec::with_capacity(tr.len());
    for x in tr.positions() {
        let z = match current {
            Some((center, z)) if distance(x, &center) <= params.radius => z,
            _ => {
                let z = planar_laplace_point(x, params.epsilon, &mut rng)?;
                current = Some((*x, z));
                z
            }
        };
        out.push(z);
    }
    Ok(tr.with_positions(out))
}

/// Memory clustering geo-indistinguishability, also returning the final
/// memory.
pub fn obfuscate_memory_clustering_with_memory(
    tr: &Trace,
    params: &ClusterParams,
    seed: Seed,
) -> Result<(Trace, ClusterMemory), MechanismError> {
    let mut rng = seed.rng();
    let mut memory = ClusterMemory::new();
    let out = tr
        .positions()
        .map(|x| memory_clustering_step(&mut memory, x, params, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((tr.with_positions(out), memory))
}

pub fn obfuscate_memory_clustering(tr: &Trace, params: &ClusterParams, seed: Seed) -> Result<Trace, MechanismError> {
    obfuscate_memory_clustering_with_memory(tr, params, seed).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::test_util::trace;
    use crate::geo::{from_local_unchecked, LocalXY};

    fn params() -> ClusterParams {
        ClusterParams::new(200.0, Epsilon::new(0.00358).unwrap()).unwrap()
    }

    fn at(x: f64, y: f64) -> (f64, f64) {
        let p = from_local_unchecked(&LocalXY {
            x,
            y,
            reference: GeoPoint::new(48.85, 2.35).unwrap(),
        });
        (p.lat(), p.lon())
    }

    /// A, B, A, B ... one point per visit, A and B 2 km apart.
    fn commute(visits: usize) -> Trace {
        let pts: Vec<(i64, f64, f64)> = (0..visits)
            .map(|i| {
                let (lat, lon) = if i % 2 == 0 { at(0.0, 0.0) } else { at(2000.0, 0.0) };
                (i as i64 * 3600, lat, lon)
            })
            .collect();
        trace("u", &pts)
    }

    fn distinct(tr: &Trace) -> usize {
        let mut v: Vec<(u64, u64)> = tr.positions().map(|p| (p.lat().to_bits(), p.lon().to_bits())).collect();
        v.sort();
        v.dedup();
        v.len()
    }

    #[test]
    fn stationary_trace_single_report() {
        let pts: Vec<(i64, f64, f64)> = (0..30).map(|i| (i * 60, 48.85, 2.35)).collect();
        let tr = trace("u", &pts);
        assert_eq!(distinct(&obfuscate_clustering(&tr, &params(), Seed(1)).unwrap()), 1);
        assert_eq!(
            distinct(&obfuscate_memory_clustering(&tr, &params(), Seed(1)).unwrap()),
            1
        );
    }

    #[test]
    fn clustering_forgets() {
        let out = obfuscate_clustering(&commute(4), &params(), Seed(9)).unwrap();
        assert_eq!(distinct(&out), 4);
    }

    #[test]
    fn memory_clustering_remembers() {
        let tr = commute(40);
        let (out, mem) = obfuscate_memory_clustering_with_memory(&tr, &params(), Seed(9)).unwrap();
        assert_eq!(distinct(&out), 2);
        assert_eq!(mem.len(), 2);
        // The visit-by-visit replay: every A reports the first A report.
        for (i, p) in out.points.iter().enumerate() {
            assert_eq!(p.pos, out.points[i % 2].pos);
        }
    }

    #[test]
    fn first_point_takes_planar_laplace_branch() {
        let mut mem = ClusterMemory::new();
        let x = GeoPoint::new(48.85, 2.35).unwrap();
        let mut rng = Seed(3).rng();
        let z = memory_clustering_step(&mut mem, &x, &params(), &mut rng).unwrap();
        assert_eq!(mem.len(), 1);
        assert_eq!(mem.real()[0], x);
        assert_eq!(mem.reported()[0], z);
        let (lat, lon) = at(150.0, 0.0);
        let near = GeoPoint::new(lat, lon).unwrap();
        let again = memory_clustering_step(&mut mem, &near, &params(), &mut rng).unwrap();
        assert_eq!(again, z);
        assert_eq!(mem.len(), 1);
    }

    #[test]
    fn nearest_prefers_lowest_index_on_ties() {
        let mut mem = ClusterMemory::new();
        let a = GeoPoint::new(0.0, 0.001).unwrap();
        let b = GeoPoint::new(0.0, -0.001).unwrap();
        mem.push(a, a);
        mem.push(b, b);
        assert_eq!(mem.nearest(&GeoPoint::new(0.0, 0.0).unwrap()).unwrap().0, 0);
        assert!(ClusterMemory::new().nearest(&a).is_none());
    }

    #[test]
    fn membership_uses_spawning_real_location() {
        // Drift 150 m per step: each step stays within 200 m of the previous
        // point but leaves the spawning one every second step.
        let pts: Vec<(i64, f64, f64)> = (0..6)
            .map(|i| {
                let (lat, lon) = at(150.0 * i as f64, 0.0);
                (i as i64, lat, lon)
            })
            .collect();
        let out = obfuscate_clustering(&trace("u", &pts), &params(), Seed(4)).unwrap();
        assert_eq!(distinct(&out), 3);
        assert_eq!(out.points[0].pos, out.points[1].pos);
        assert_ne!(out.points[1].pos, out.points[2].pos);
    }

    #[test]
    fn radius_validation() {
        let e = Epsilon::new(0.01).unwrap();
        assert!(ClusterParams::new(0.0, e).is_err());
        assert!(ClusterParams::new(f64::NAN, e).is_err());
    }
}
