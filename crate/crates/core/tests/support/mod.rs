//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use num_bigint::BigInt;

const FRAC_BITS: u32 = 480;

/// `J0(a / 2^s)` from the power series in exact fixed-point arithmetic
/// with `FRAC_BITS` fractional bits.
pub fn j0_series_exact(a: u64, s: u32) -> f64 {
    let one = BigInt::from(1) << FRAC_BITS;
    let a2 = BigInt::from(a) * BigInt::from(a);
    let denom_shift = 2 * s + 2;
    let mut term = one.clone();
    let mut sum = one;
    let mut k: u64 = 1;
    loop {
        term = -(term * &a2) >> denom_shift;
        term /= BigInt::from(k * k);
        if term == BigInt::from(0) {
            break;
        }
        sum += &term;
        k += 1;
    }
    // keep 100 fractional bits for the conversion
    let top: BigInt = sum >> (FRAC_BITS - 100);
    let v = i128::try_from(&top).expect("J0 is bounded by 1");
    v as f64 / 2f64.powi(100)
}

/// `J0(x) = (1/pi) int_0^pi cos(x sin t) dt` by the trapezoid rule, which
/// converges geometrically for this periodic integrand.
pub fn j0_quadrature(x: f64, n: usize) -> f64 {
    let h = std::f64::consts::PI / n as f64;
    let mut s = 0.5 * (1.0 + (x * std::f64::consts::PI.sin()).cos());
    for i in 1..n {
        s += (x * (i as f64 * h).sin()).cos();
    }
    s * h / std::f64::consts::PI
}
