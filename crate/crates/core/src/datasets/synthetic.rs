//! Generated traces for tests, demos and desk-scale experiments.

use std::f64::consts::TAU;

use rand::Rng;
use serde::Deserialize;

use super::{Dataset, DatasetError, SourceFormat, Trace, TracePoint};
use crate::geo::{from_local_unchecked, GeoPoint, LocalXY};
use crate::mechanisms::{fnv1a64, Seed};

/// A user alternating between two places A and B.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommuteParams {
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Distance from A to B; B lies due east of A.
    pub distance_m: f64,
    pub round_trips: usize,
    pub dwell_s: i64,
    pub sample_dt_s: i64,
    /// Time between leaving one place and arriving at the other. No points
    /// are recorded in transit.
    pub travel_s: i64,
    /// Points scatter uniformly in a disc of this radius around the place.
    pub jitter_m: f64,
    pub start_time: i64,
}

impl Default for CommuteParams {
    fn default() -> Self {
        Self {
            origin_lat: 37.7749,
            origin_lon: -122.4194,
            distance_m: 2000.0,
            round_trips: 20,
            dwell_s: 90 * 60,
            sample_dt_s: 300,
            travel_s: 20 * 60,
            jitter_m: 20.0,
            start_time: 1_214_870_400,
        }
    }
}

impl CommuteParams {
    /// Number of stays: two per round trip.
    pub fn visits(&self) -> usize {
        2 * self.round_trips
    }
}

fn jittered<R: Rng + ?Sized>(center: &GeoPoint, radius: f64, rng: &mut R) -> GeoPoint {
    if radius <= 0.0 {
        return *center;
    }
    let theta = rng.gen::<f64>() * TAU;
    let r = radius * rng.gen::<f64>().sqrt();
    from_local_unchecked(&LocalXY {
        x: r * theta.cos(),
        y: r * theta.sin(),
        reference: *center,
    })
}

fn invalid(message: String) -> DatasetError {
    DatasetError::Parse {
        file: "<synthetic>".into(),
        line: 0,
        message,
    }
}

pub fn commute_trace(user_id: &str, p: &CommuteParams, seed: Seed) -> Result<Trace, DatasetError> {
    if p.sample_dt_s <= 0 || p.dwell_s < 0 || p.travel_s < 0 || !(p.jitter_m >= 0.0) || !(p.distance_m >= 0.0) {
        return Err(invalid(format!("invalid commute parameters {p:?}")));
    }
    let a = GeoPoint::new(p.origin_lat, p.origin_lon).map_err(|e| invalid(e.to_string()))?;
    let b = from_local_unchecked(&LocalXY {
        x: p.distance_m,
        y: 0.0,
        reference: a,
    });
    let mut rng = seed.rng();
    let mut points = Vec::new();
    let mut t = p.start_time;
    for visit in 0..p.visits() {
        let place = if visit % 2 == 0 { a } else { b };
        let end = t + p.dwell_s;
        while t <= end {
            points.push(TracePoint::new(t, jittered(&place, p.jitter_m, &mut rng)));
            t += p.sample_dt_s;
        }
        t = end + p.travel_s;
    }
    Ok(Trace::new(user_id, points))
}

/// A correlated random walk: each step turns by a small random angle.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkParams {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub n_points: usize,
    pub step_m: f64,
    pub dt_s: i64,
    /// Maximum absolute heading change per step, in radians.
    pub max_turn: f64,
    pub start_time: i64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            origin_lat: 37.7749,
            origin_lon: -122.4194,
            n_points: 200,
            step_m: 150.0,
            dt_s: 60,
            max_turn: 0.5,
            start_time: 1_214_870_400,
        }
    }
}

pub fn random_walk_trace(user_id: &str, p: &WalkParams, seed: Seed) -> Result<Trace, DatasetError> {
    if p.dt_s <= 0 || !(p.step_m >= 0.0) || !(p.max_turn >= 0.0) {
        return Err(invalid(format!("invalid walk parameters {p:?}")));
    }
    let mut pos = GeoPoint::new(p.origin_lat, p.origin_lon).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seed.rng();
    let mut heading = rng.gen::<f64>() * TAU;
    let mut points = Vec::with_capacity(p.n_points);
    for i in 0..p.n_points {
        points.push(TracePoint::new(p.start_time + i as i64 * p.dt_s, pos));
        heading += (rng.gen::<f64>() * 2.0 - 1.0) * p.max_turn;
        pos = from_local_unchecked(&LocalXY {
            x: p.step_m * heading.sin(),
            y: p.step_m * heading.cos(),
            reference: pos,
        });
    }
    Ok(Trace::new(user_id, points))
}

/// Generator settings for a whole synthetic dataset, as written in
/// experiment configs.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSpec {
    Commute(CommuteParams),
    RandomWalk(WalkParams),
}

/// Users are named `u000`, `u001`, …; each draws from its own stream.
pub fn generate(name: &str, spec: &SyntheticSpec, users: usize, seed: Seed) -> Result<Dataset, DatasetError> {
    let kind = match spec {
        SyntheticSpec::Commute(_) => "commute",
        SyntheticSpec::RandomWalk(_) => "random_walk",
    };
    let traces = (0..users)
        .map(|i| {
            let user = format!("u{i:03}");
            let s = seed.derive(&[fnv1a64(kind.as_bytes()), fnv1a64(user.as_bytes())]);
            match spec {
                SyntheticSpec::Commute(params) => commute_trace(&user, params, s),
                SyntheticSpec::RandomWalk(params) => random_walk_trace(&user, params, s),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(name, SourceFormat::Synthetic, traces)
}
