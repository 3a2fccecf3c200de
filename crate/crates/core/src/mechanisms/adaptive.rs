use super::planar_laplace::planar_laplace_point;
use super::{Epsilon, MechanismError, Seed};
use crate::datasets::Trace;
use crate::geo::{distance, from_local_unchecked, to_local_unchecked, GeoPoint, LocalXY};

/// Effective ε never leaves `[base / CLAMP, base · CLAMP]`.
const CLAMP: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams {
    /// Below this estimation error (m) the noise is increased.
    pub delta1: f64,
    /// At or above this estimation error (m) the noise is decreased.
    pub delta2: f64,
    /// Number of previous reports the adversary's regression uses.
    pub ws: usize,
    pub alpha: f64,
    pub beta: f64,
    pub base_epsilon: Epsilon,
}

impl AdaptiveParams {
    pub fn new(
        delta1: f64,
        delta2: f64,
        ws: usize,
        alpha: f64,
        beta: f64,
        base_epsilon: Epsilon,
    ) -> Result<Self, MechanismError> {
        let bad = |m: &str| Err(MechanismError::InvalidParameter(m.to_string()));
        if !(delta1 > 0.0 && delta1 < delta2 && delta2.is_finite()) {
            return bad("adaptive bounds need 0 < delta1 < delta2");
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return bad("adaptive alpha must lie in (0, 1)");
        }
        if !(beta > 1.0 && beta.is_finite()) {
            return bad("adaptive beta must exceed 1");
        }
        if ws < 2 {
            return bad("adaptive window needs at least 2 points");
        }
        Ok(Self {
            delta1,
            delta2,
            ws,
            alpha,
            beta,
            base_epsilon,
        })
    }

    /// Δ1 = 693 m, Δ2 = 1948 m, ws = 5, α = 0.1, β = 5.
    pub fn with_defaults(base_epsilon: Epsilon) -> Self {
        Self {
            delta1: 693.0,
            delta2: 1948.0,
            ws: 5,
            alpha: 0.1,
            beta: 5.0,
            base_epsilon,
        }
    }
}

/// Next effective ε given the current one and the adversary's estimation
/// error `error_m`.
pub fn adjust_epsilon(current: f64, error_m: f64, params: &AdaptiveParams) -> f64 {
    let next = if error_m < params.delta1 {
        params.alpha * current
    } else if error_m < params.delta2 {
        current
    } else {
        params.beta * current
    };
    let base = params.base_epsilon.value();
    next.clamp(base / CLAMP, base * CLAMP)
}

/// Least-squares linear extrapolation of position over time.
///
/// Latitude and longitude motion are fitted independently in the tangent
/// plane of the last point, then evaluated at `t_query`.
pub fn linreg_predict(pts: &[(i64, GeoPoint)], t_query: i64) -> Result<GeoPoint, MechanismError> {
    let Some(&(t_ref, reference)) = pts.last() else {
        return Err(MechanismError::DegenerateFit);
    };
    if pts.len() < 2 {
        return Err(MechanismError::DegenerateFit);
    }
    let n = pts.len() as f64;
    let samples: Vec<(f64, f64, f64)> = pts
        .iter()
        .map(|(t, p)| {
            let v = to_local_unchecked(p, &reference);
            ((t - t_ref) as f64, v.x, v.y)
        })
        .collect();
    let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let x_mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let y_mean = samples.iter().map(|s| s.2).sum::<f64>() / n;
    let (mut stt, mut stx, mut sty) = (0.0, 0.0, 0.0);
    for &(t, x, y) in &samples {
        let dt = t - t_mean;
        stt += dt * dt;
        stx += dt * (x - x_mean);
        sty += dt * (y - y_mean);
    }
    if stt == 0.0 {
        return Err(MechanismError::DegenerateFit);
    }
    let dq = (t_query - t_ref) as f64 - t_mean;
    Ok(from_local_unchecked(&LocalXY {
        x: x_mean + stx / stt * dq,
        y: y_mean + sty / stt * dq,
        reference,
    }))
}

/// Adaptive geo-indistinguishability. Also returns the effective ε used
/// for each point.
pub fn obfuscate_adaptive_detailed(
    tr: &Trace,
    params: &AdaptiveParams,
    seed: Seed,
) -> Result<(Trace, Vec<f64>), MechanismError> {
    let mut rng = seed.rng();
    let mut reports: Vec<(i64, GeoPoint)> = Vec::with_capacity(tr.len());
    let mut used = Vec::with_capacity(tr.len());
    let mut eps = params.base_epsilon.value();
    for p in &tr.points {
        if reports.len() >= params.ws {
            let window = &reports[reports.len() - params.ws..];
            let guess = match linreg_predict(window, p.t) {
                Ok(g) => g,
                // All timestamps equal: the adversary repeats the last report.
                Err(MechanismError::DegenerateFit) => window[window.len() - 1].1,
                Err(e) => return Err(e),
            };
            eps = adjust_epsilon(eps, distance(&p.pos, &guess), params);
        }
        let z = planar_laplace_point(&p.pos, Epsilon(eps), &mut rng)?;
        reports.push((p.t, z));
        used.push(eps);
    }
    let out = tr.with_positions(reports.into_iter().map(|(_, z)| z).collect());
    Ok((out, used))
}

pub fn obfuscate_adaptive(tr: &Trace, params: &AdaptiveParams, seed: Seed) -> Result<Trace, MechanismError> {
    obfuscate_adaptive_detailed(tr, params, seed).map(|(t, _)| t)
}
