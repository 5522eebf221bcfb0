//! Special functions: error-function family and the digamma function.

use std::f64::consts::PI;

pub use statrs::function::erf::{erfc, erfc_inv};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Scaled complementary error function `exp(x²) erfc(x)`.
///
/// Stays finite for large positive `x`, where `erfc` underflows.
pub fn erfcx(x: f64) -> f64 {
    if x < 5.0 {
        return (x * x).exp() * erfc(x);
    }
    // Continued fraction erfc(x) = exp(-x²)/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))).
    let mut tail = 0.0;
    for k in (1..=60).rev() {
        tail = (k as f64 / 2.0) / (x + tail);
    }
    1.0 / (PI.sqrt() * (x + tail))
}

/// Digamma function ψ(x) for `x > 0`.
///
/// Shifts the argument up with ψ(x) = ψ(x + 1) − 1/x until it exceeds 10, then applies the
/// asymptotic series. Accurate to about 1e−13 relative for `x >= 1`.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma is only implemented for positive arguments");
    let mut shift = 0.0;
    let mut z = x;
    while z < 10.0 {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_{2k}/(2k).
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + z.ln() - 0.5 * inv - series
}
