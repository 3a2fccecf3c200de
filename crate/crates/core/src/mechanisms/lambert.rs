//! Lower branch of the Lambert W function.

use std::f64::consts::E;

/// Branch point of W: `W(-1/e) = -1`.
pub const BRANCH_POINT: f64 = -1.0 / E;

const TOLERANCE: f64 = 1e-12;
const MAX_ITER: usize = 64;

/// `W₋₁(x)` for `x` in `[-1/e, 0)`, the solution `w ≤ -1` of `w·eʷ = x`.
///
/// Returns `None` outside the domain. Arguments a few ulps below `-1/e`
/// are treated as the branch point.
pub fn lambert_w_m1(x: f64) -> Option<f64> {
    if !(x < 0.0) || x < BRANCH_POINT - 1e-15 {
        return None;
    }
    let x = x.max(BRANCH_POINT);
    let q = 1.0 + E * x;
    if q <= 0.0 {
        return Some(-1.0);
    }

    let mut w = if x < -0.25 {
        // Series around the branch point in p = -sqrt(2(1 + e·x)).
        let p = -(2.0 * q).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        // Asymptotic expansion as x → 0⁻.
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 || f == 0.0 {
            break;
        }
        // Halley step.
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = (w - step).min(-1.0);
        let delta = (next - w).abs();
        w = next;
        if delta < TOLERANCE {
            break;
        }
    }
    Some(w)
}
