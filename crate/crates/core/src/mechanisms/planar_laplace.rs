use std::f64::consts::{E, TAU};

use rand::Rng;

use super::lambert::lambert_w_m1;
use super::{Epsilon, MechanismError, Seed};
use crate::datasets::Trace;
use crate::geo::{from_local_unchecked, GeoPoint, LocalXY};

/// Probability that planar Laplace noise at level `eps` has radius ≤ `r`:
/// `1 - (1 + εr)·e^(-εr)`.
pub fn radial_cdf(r: f64, eps: Epsilon) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let er = eps.value() * r;
    1.0 - (1.0 + er) * (-er).exp()
}

/// Inverse of [`radial_cdf`]: `-(W₋₁((p - 1)/e) + 1) / ε`.
pub fn inverse_cdf_radius(p: f64, eps: Epsilon) -> Result<f64, MechanismError> {
    if !(0.0..1.0).contains(&p) {
        return Err(MechanismError::Domain(format!("probability {p} outside [0, 1)")));
    }
    let w = lambert_w_m1((p - 1.0) / E).ok_or_else(|| MechanismError::Domain(format!("W₋₁ undefined for p = {p}")))?;
    Ok((-(w + 1.0) / eps.value()).max(0.0))
}

/// Draws one planar Laplace report for `x`: a uniform bearing and a radius
/// from the inverse radial CDF, applied in the tangent plane at `x`.
///
/// The azimuthal projection keeps the drawn radius as the true distance at
/// any range, so small ε never fails here.
pub fn planar_laplace_point<R: Rng + ?Sized>(
    x: &GeoPoint,
    eps: Epsilon,
    rng: &mut R,
) -> Result<GeoPoint, MechanismError> {
    let theta = rng.gen::<f64>() * TAU;
    let r = inverse_cdf_radius(rng.gen::<f64>(), eps)?;
    Ok(from_local_unchecked(&LocalXY {
        x: r * theta.cos(),
        y: r * theta.sin(),
        reference: *x,
    }))
}

/// Independent planar Laplace noise on every point.
pub fn obfuscate_pl(tr: &Trace, eps: Epsilon, seed: Seed) -> Result<Trace, MechanismError> {
    let mut rng = seed.rng();
    let positions = tr
        .positions()
        .map(|p| planar_laplace_point(p, eps, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(tr.with_positions(positions))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRow {
    pub epsilon: f64,
    pub avg_noise_m: f64,
    pub max_noise_m: f64,
}

/// Monte-Carlo mean and maximum noise radius for each ε.
///
/// Each row draws from its own stream derived from `seed` and ε, so a row
/// does not depend on the rest of the list.
pub fn epsilon_noise_table(
    epsilons: &[Epsilon],
    n_samples: usize,
    seed: Seed,
) -> Result<Vec<NoiseRow>, MechanismError> {
    if n_samples == 0 {
        return Err(MechanismError::InvalidParameter("n_samples must be at least 1".into()));
    }
    epsilons
        .iter()
        .map(|&eps| {
            let mut rng = seed.derive(&[eps.value().to_bits()]).rng();
            let (mut sum, mut max) = (0.0f64, 0.0f64);
            for _ in 0..n_samples {
                let r = inverse_cdf_radius(rng.gen::<f64>(), eps)?;
                sum += r;
                max = max.max(r);
            }
            Ok(NoiseRow {
                epsilon: eps.value(),
                avg_noise_m: sum / n_samples as f64,
                max_noise_m: max,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::test_util::trace;
    use crate::geo::distance;

    fn eps(v: f64) -> Epsilon {
        Epsilon::new(v).unwrap()
    }

    /// Solves C_ε(r) = p by bisection.
    fn bisect_radius(p: f64, e: Epsilon) -> f64 {
        let (mut lo, mut hi) = (0.0, 1e4 / e.value());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if radial_cdf(mid, e) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// E[r] by trapezoidal quadrature of the radial density ε²·r·e^(-εr).
    fn mean_radius_quadrature(e: Epsilon) -> f64 {
        let upper = 60.0 / e.value();
        let n = 200_000;
        let h = upper / n as f64;
        let f = |r: f64| r * e.value() * e.value() * r * (-e.value() * r).exp();
        let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
        h * (inner + 0.5 * (f(0.0) + f(upper)))
    }

    #[test]
    fn inverse_cdf_examples() {
        assert_eq!(inverse_cdf_radius(0.0, eps(0.01)).unwrap(), 0.0);
        let r = inverse_cdf_radius(0.5, eps(0.01)).unwrap();
        let oracle = bisect_radius(0.5, eps(0.01));
        assert!((r - oracle).abs() < 1e-6);
        assert!((r - 167.8).abs() < 0.05);
        assert!(inverse_cdf_radius(1.0, eps(0.01)).is_err());
        assert!(inverse_cdf_radius(-0.1, eps(0.01)).is_err());
    }

    #[test]
    fn inverse_cdf_is_increasing_and_inverts() {
        let e = eps(0.00358);
        let mut prev = -1.0;
        for i in 0..1000 {
            let p = i as f64 / 1000.0;
            let r = inverse_cdf_radius(p, e).unwrap();
            assert!(r > prev);
            assert!((radial_cdf(r, e) - p).abs() < 1e-9);
            prev = r;
        }
    }

    #[test]
    fn quadrature_mean_is_two_over_epsilon() {
        for v in [0.0005, 0.01, 5.0] {
            let m = mean_radius_quadrature(eps(v));
            assert!((m - 2.0 / v).abs() < 1e-6 * (2.0 / v), "{v}: {m}");
        }
    }

    #[test]
    fn noise_table_converges_to_mean() {
        let rows = epsilon_noise_table(&[eps(0.01), eps(5.0)], 200_000, Seed(7)).unwrap();
        for row in rows {
            let oracle = mean_radius_quadrature(eps(row.epsilon));
            assert!((row.avg_noise_m - oracle).abs() < 0.01 * oracle);
            assert!(row.max_noise_m > row.avg_noise_m);
        }
        assert!(epsilon_noise_table(&[eps(1.0)], 0, Seed(0)).is_err());
    }

    #[test]
    fn point_is_deterministic() {
        let x = GeoPoint::new(37.77, -122.42).unwrap();
        let a = planar_laplace_point(&x, eps(0.01), &mut Seed(3).rng()).unwrap();
        let b = planar_laplace_point(&x, eps(0.01), &mut Seed(3).rng()).unwrap();
        assert_eq!(a.lat().to_bits(), b.lat().to_bits());
        assert_eq!(a.lon().to_bits(), b.lon().to_bits());
    }

    #[test]
    fn obfuscate_preserves_structure() {
        let empty = trace("u", &[]);
        assert!(obfuscate_pl(&empty, eps(0.01), Seed(1)).unwrap().is_empty());
        let pts: Vec<(i64, f64, f64)> = (0..50).map(|i| (i * 10, 37.7, -122.4)).collect();
        let tr = trace("u", &pts);
        let out = obfuscate_pl(&tr, eps(0.01), Seed(1)).unwrap();
        assert_eq!(out.len(), tr.len());
        assert_eq!(out.user_id, tr.user_id);
        assert!(out.points.iter().zip(&tr.points).all(|(a, b)| a.t == b.t));
        assert_eq!(out, obfuscate_pl(&tr, eps(0.01), Seed(1)).unwrap());
        assert_ne!(out, obfuscate_pl(&tr, eps(0.01), Seed(2)).unwrap());
    }

    #[test]
    fn average_displacement_is_two_over_epsilon() {
        let pts: Vec<(i64, f64, f64)> = (0..50_000).map(|i| (i, 48.85, 2.35)).collect();
        let tr = trace("u", &pts);
        let e = eps(0.005);
        let out = obfuscate_pl(&tr, e, Seed(11)).unwrap();
        let mean: f64 = tr
            .positions()
            .zip(out.positions())
            .map(|(a, b)| distance(a, b))
            .sum::<f64>()
            / tr.len() as f64;
        let oracle = mean_radius_quadrature(e);
        assert!((mean - oracle).abs() < 0.02 * oracle, "{mean} vs {oracle}");
    }

    #[test]
    fn large_radii_are_exact_distances() {
        let x = GeoPoint::new(48.85, 2.35).unwrap();
        let e = eps(1e-6);
        let mut rng = Seed(5).rng();
        let mut probe = Seed(5).rng();
        for _ in 0..200 {
            let _theta: f64 = probe.gen();
            let r = inverse_cdf_radius(probe.gen(), e).unwrap();
            let z = planar_laplace_point(&x, e, &mut rng).unwrap();
            if r < 1.5e7 {
                assert!((distance(&x, &z) - r).abs() <= 1e-6 * r + 1e-6);
            }
        }
    }
}
