//! Zeroth-order Bessel function of the first kind and its main-lobe inverse.
//!
//! `J0` sets every sampling interval of the ring codebook, so it is
//! evaluated to near machine precision over the whole real line:
//!
//! * `|x| < 8`: the defining power series,
//! * `8 <= |x| < 1000`: Miller's backward recurrence normalised with
//!   `J0 + 2 (J2 + J4 + ...) = 1`,
//! * `|x| >= 1000`: the Hankel asymptotic expansion.

use crate::error::{Error, Result};

/// First positive zero of `J0`.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_77;

const SERIES_LIMIT: f64 = 8.0;
const ASYMPTOTIC_LIMIT: f64 = 1000.0;

/// `J0(x)`. Fails on non-finite input.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j0 argument {x} is not finite")));
    }
    Ok(j0(x))
}

/// Infallible `J0` for internal use; NaN in, NaN out.
pub(crate) fn j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax.is_nan() {
        f64::NAN
    } else if ax < SERIES_LIMIT {
        j0_series(ax)
    } else if ax < ASYMPTOTIC_LIMIT {
        j0_miller(ax)
    } else {
        j0_asymptotic(ax)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn j0_miller(x: f64) -> f64 {
    // Start far enough above x that J_n(x) is negligible; even start index so
    // the normalisation sum picks up every even order.
    let mut n = (x + 40.0 + 12.0 * x.sqrt()) as usize;
    n += n % 2;
    let two_over_x = 2.0 / x;
    let mut j_next = 0.0; // J_{k+1}
    let mut j_cur = 1e-30; // J_k
    let mut norm = 0.0;
    let mut j0 = 0.0;
    for k in (1..=n).rev() {
        let j_prev = k as f64 * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j_cur;
        }
        if k == 1 {
            j0 = j_cur;
        }
        if j_cur.abs() > 1e200 {
            j_cur *= 1e-200;
            j_next *= 1e-200;
            norm *= 1e-200;
        }
    }
    norm += j0;
    j0 / norm
}

fn j0_asymptotic(x: f64) -> f64 {
    // a_k(0) = prod_{i=1..k} (-(2i-1)^2) / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    for k in 0..40 {
        let term = a / x.powi(k);
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        let odd = (2 * k + 1) as f64;
        let next = a * -(odd * odd) / ((k + 1) as f64 * 8.0);
        if (next / x.powi(k + 1)).abs() < 1e-18 {
            break;
        }
        a = next;
    }
    let chi = x - std::f64::consts::FRAC_PI_4;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// The unique `x` in `[0, J0_FIRST_ZERO]` with `J0(x) = delta`, for
/// `delta` in `(0, 1]`, by bisection.
pub fn inv_j0_mainlobe(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!(
            "inv_j0_mainlobe needs delta in (0, 1], got {delta}"
        )));
    }
    if delta == 1.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, J0_FIRST_ZERO);
    // J0 is strictly decreasing on the main lobe: J0(lo) > delta > J0(hi).
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if j0(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn first_j0_zero() -> f64 {
    J0_FIRST_ZERO
}
