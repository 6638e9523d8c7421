//! Complete elliptic integral of the first kind.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

const AGM_MAX_ITER: usize = 64;
const AGM_REL_TOL: f64 = 1e-15;

/// Complete elliptic integral of the first kind in the *modulus* convention,
///
/// ```text
/// K(k) = ∫₀^{π/2} dθ / √(1 − k² sin²θ),   0 ≤ k ≤ 1,
/// ```
///
/// so that `K(0) = π/2` and `K(1) = +∞`. Evaluated as `π / (2·AGM(1, √(1−k²)))`.
pub fn elliptic_k(modulus: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&modulus) {
        return Err(Error::Domain {
            name: "modulus",
            value: modulus,
            reason: "the complete elliptic integral needs 0 <= k <= 1",
        });
    }
    Ok(elliptic_k_unchecked(modulus))
}

/// `elliptic_k` for callers that already guarantee `0 <= modulus <= 1`.
pub(crate) fn elliptic_k_unchecked(modulus: f64) -> f64 {
    if modulus >= 1.0 {
        return f64::INFINITY;
    }
    // (1-k)(1+k) keeps the complementary modulus accurate near k = 1
    let mut a = 1.0_f64;
    let mut b = ((1.0 - modulus) * (1.0 + modulus)).sqrt();
    for _ in 0..AGM_MAX_ITER {
        if (a - b).abs() <= AGM_REL_TOL * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    FRAC_PI_2 / a
}
