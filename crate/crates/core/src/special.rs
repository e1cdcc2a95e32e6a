//! Log-Gamma and Barnes' G function.

use crate::error::{Error, Result};

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// `ζ'(−1) = 1/12 − ln A`, with `A` Glaisher's constant.
const ZETA_PRIME_MINUS_ONE: f64 = -0.165_421_143_700_450_929_213_919_660_24;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_741_780_329_736_4;

/// Below this argument the asymptotic series is not used directly.
const ASYMPTOTIC_MIN: f64 = 12.0;

/// Coefficients `B_{2k+2} / (4k(k+1))` of the large-argument series of
/// `ln G(z+1)`, for k = 1..7.
const ASYMPTOTIC_COEFFS: [f64; 7] = [
    -1.0 / 240.0,
    1.0 / 1008.0,
    -1.0 / 1440.0,
    1.0 / 1056.0,
    -691.0 / 2730.0 / 120.0,
    7.0 / 6.0 / 168.0,
    -3617.0 / 510.0 / 224.0,
];

/// `ln G(z + 1)` for large `z`.
fn ln_barnes_g_shifted_asymptotic(z: f64) -> f64 {
    let ln_z = z.ln();
    let inv2 = 1.0 / (z * z);
    let mut power = inv2;
    let mut series = 0.0;
    for c in ASYMPTOTIC_COEFFS {
        series += c * power;
        power *= inv2;
    }
    0.5 * z * z * (ln_z - 1.5) + z * HALF_LN_TWO_PI - ln_z / 12.0 + ZETA_PRIME_MINUS_ONE + series
}

/// `ln G(z)` for `z > 0`.
///
/// The argument is moved up with `G(z + 1) = Γ(z) G(z)` until the
/// large-argument expansion converges to full precision.
pub fn log_barnes_g(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("Barnes G needs a positive argument, got {z}")));
    }
    let shift = (ASYMPTOTIC_MIN + 1.0 - z).max(0.0).ceil() as usize;
    let mut log_gammas = 0.0;
    for i in 0..shift {
        log_gammas += ln_gamma(z + i as f64);
    }
    Ok(ln_barnes_g_shifted_asymptotic(z + shift as f64 - 1.0) - log_gammas)
}
