//! Geodetic primitives.
//!
//! Distances are great-circle (haversine) on a sphere of radius
//! [`EARTH_RADIUS_M`]. Meter-space work (noise, centroids, regressions) goes
//! through an azimuthal equidistant tangent-plane projection centred on a
//! reference point: the projected norm of a point is exactly its great-circle
//! distance from the reference, and the inverse is closed-form.

use std::f64::consts::PI;

use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest displacement accepted by the checked projection functions.
pub const MAX_PROJECTION_RANGE_M: f64 = 100_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    InvalidLatitude(f64),
    #[error("non-finite coordinate ({lat}, {lon})")]
    NonFinite { lat: f64, lon: f64 },
    #[error("{distance_m:.1} m exceeds the {MAX_PROJECTION_RANGE_M} m projection range")]
    OutOfProjectionRange { distance_m: f64 },
}

/// A position in decimal degrees.
///
/// Latitude is validated; longitude is normalized into (-180, 180].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeoError::NonFinite { lat, lon });
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidLatitude(lat));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
        })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }
}

fn normalize_lon(lon: f64) -> f64 {
    let mut l = lon % 360.0;
    if l > 180.0 {
        l -= 360.0;
    } else if l <= -180.0 {
        l += 360.0;
    }
    l
}

/// Meters east (`x`) and north (`y`) of `reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalXY {
    pub x: f64,
    pub y: f64,
    pub reference: GeoPoint,
}

impl LocalXY {
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Central angle between two points, in radians.
fn central_angle(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (phi2 - phi1).abs();
    let dlambda = (b.lon - a.lon).abs().to_radians();
    let s_phi = (dphi / 2.0).sin();
    let s_lambda = (dlambda / 2.0).sin();
    let h = (s_phi * s_phi + phi1.cos() * phi2.cos() * s_lambda * s_lambda).clamp(0.0, 1.0);
    2.0 * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Great-circle distance in meters.
#[inline]
pub fn distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    EARTH_RADIUS_M * central_angle(a, b)
}

/// Projects `p` onto the tangent plane at `reference` without a range check.
///
/// Valid everywhere except at the antipode of `reference`.
pub fn to_local_unchecked(p: &GeoPoint, reference: &GeoPoint) -> LocalXY {
    let c = central_angle(reference, p);
    if c == 0.0 {
        return LocalXY {
            x: 0.0,
            y: 0.0,
            reference: *reference,
        };
    }
    let (phi1, phi2) = (reference.lat.to_radians(), p.lat.to_radians());
    let dlambda = (p.lon - reference.lon).to_radians();
    let bearing = (dlambda.sin() * phi2.cos()).atan2(phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos());
    let r = EARTH_RADIUS_M * c;
    LocalXY {
        x: r * bearing.sin(),
        y: r * bearing.cos(),
        reference: *reference,
    }
}

/// Inverse of [`to_local_unchecked`].
pub fn from_local_unchecked(v: &LocalXY) -> GeoPoint {
    let r = v.norm();
    if r == 0.0 {
        return v.reference;
    }
    let c = r / EARTH_RADIUS_M;
    let bearing = v.x.atan2(v.y);
    let phi1 = v.reference.lat.to_radians();
    let lambda1 = v.reference.lon.to_radians();
    let sin_phi2 = (phi1.sin() * c.cos() + phi1.cos() * c.sin() * bearing.cos()).clamp(-1.0, 1.0);
    let phi2 = sin_phi2.asin();
    let lambda2 = lambda1 + (bearing.sin() * c.sin() * phi1.cos()).atan2(c.cos() - phi1.sin() * sin_phi2);
    GeoPoint {
        lat: phi2.to_degrees().clamp(-90.0, 90.0),
        lon: normalize_lon(lambda2.to_degrees()),
    }
}

pub fn to_local(p: &GeoPoint, reference: &GeoPoint) -> Result<LocalXY, GeoError> {
    let d = distance(p, reference);
    if d >= MAX_PROJECTION_RANGE_M {
        return Err(GeoError::OutOfProjectionRange { distance_m: d });
    }
    Ok(to_local_unchecked(p, reference))
}

pub fn from_local(v: &LocalXY) -> Result<GeoPoint, GeoError> {
    let r = v.norm();
    if !(r < MAX_PROJECTION_RANGE_M) {
        return Err(GeoError::OutOfProjectionRange { distance_m: r });
    }
    Ok(from_local_unchecked(v))
}

/// Arithmetic mean of the points' local coordinates around `reference`.
///
/// Returns `None` for an empty input.
pub fn local_centroid<'a, I>(points: I, reference: &GeoPoint) -> Option<GeoPoint>
where
    I: IntoIterator<Item = &'a GeoPoint>,
{
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        let v = to_local_unchecked(p, reference);
        sx += v.x;
        sy += v.y;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    Some(from_local_unchecked(&LocalXY {
        x: sx / n as f64,
        y: sy / n as f64,
        reference: *reference,
    }))
}

/// Meters spanned by one degree of latitude.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * PI / 180.0;
