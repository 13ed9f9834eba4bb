//! Array layouts and steering vectors.
//!
//! The base station is a uniform circular array (UCA) whose element `n`
//! (zero-based) sits at azimuth `psi = 2 pi (n + 1) / N`. The user is a
//! uniform linear array (ULA). Ranges are in meters; `f64::INFINITY` is the
//! far-field sentinel accepted wherever a range is expected.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, CVec};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn wavelength_for(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// How the element-to-source distance enters the near-field phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceModel {
    /// Second-order expansion in `R / r`.
    #[default]
    Taylor,
    /// Exact Euclidean distance.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcaGeometry {
    n_elements: usize,
    radius: f64,
    wavelength: f64,
}

impl UcaGeometry {
    /// A zero radius is accepted and collapses every phase to zero.
    pub fn new(n_elements: usize, radius: f64, wavelength: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::Geometry("UCA needs at least one element".into()));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::Geometry(format!("invalid UCA radius {radius}")));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::Geometry(format!("invalid wavelength {wavelength}")));
        }
        Ok(Self {
            n_elements,
            radius,
            wavelength,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Azimuth of element `n` (zero-based).
    pub fn element_angle(&self, n: usize) -> f64 {
        2.0 * PI * (n + 1) as f64 / self.n_elements as f64
    }

    pub fn element_angles(&self) -> Vec<f64> {
        (0..self.n_elements).map(|n| self.element_angle(n)).collect()
    }

    /// Conventional 0.62 sqrt(D^3 / lambda) Fresnel boundary with aperture
    /// D = 2R.
    pub fn fresnel_distance(&self) -> f64 {
        let d = 2.0 * self.radius;
        0.62 * (d.powi(3) / self.wavelength).sqrt()
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n >= self.n_elements {
            return Err(Error::Domain(format!(
                "element index {n} out of range for {} elements",
                self.n_elements
            )));
        }
        Ok(())
    }

    /// Exact distance from a source at `(r, theta)` to element `n`.
    pub fn exact_distance(&self, r: f64, theta: f64, n: usize) -> Result<f64> {
        check_finite_range(r)?;
        self.check_index(n)?;
        let big_r = self.radius;
        let c = (theta - self.element_angle(n)).cos();
        Ok((r * r + big_r * big_r - 2.0 * r * big_r * c).max(0.0).sqrt())
    }

    /// Second-order Taylor approximation of [`Self::exact_distance`]:
    /// `r - R cos + R^2 (1 - cos^2) / (2r)`.
    pub fn taylor_distance(&self, r: f64, theta: f64, n: usize) -> Result<f64> {
        check_finite_range(r)?;
        self.check_index(n)?;
        let big_r = self.radius;
        let c = (theta - self.element_angle(n)).cos();
        Ok(r - big_r * c + big_r * big_r / (2.0 * r) * (1.0 - c * c))
    }

    /// `r^(n) - r`, evaluated without cancellation for large `r`.
    fn path_difference(&self, r: f64, theta: f64, n: usize, model: DistanceModel) -> f64 {
        let big_r = self.radius;
        let c = (theta - self.element_angle(n)).cos();
        if r.is_infinite() {
            return -big_r * c;
        }
        match model {
            DistanceModel::Taylor => -big_r * c + big_r * big_r / (2.0 * r) * (1.0 - c * c),
            DistanceModel::Exact => {
                let rn = (r * r + big_r * big_r - 2.0 * r * big_r * c).max(0.0).sqrt();
                (big_r * big_r - 2.0 * r * big_r * c) / (rn + r)
            }
        }
    }

    /// Conventional far-field steering vector, entry
    /// `exp(-j k R cos(theta - psi_n)) / sqrt(N)`.
    ///
    /// Its phase sign is opposite to the `r -> inf` limit of
    /// [`Self::near_steering`]; the codebook uses the latter so the
    /// far-field ring is the true limit of the near-field rings.
    pub fn far_steering(&self, theta: f64) -> CVec {
        let k = self.wavenumber();
        let scale = 1.0 / (self.n_elements as f64).sqrt();
        CVec::from_fn(self.n_elements, |n, _| {
            cis(-k * self.radius * (theta - self.element_angle(n)).cos()) * scale
        })
    }

    /// Spherical-wavefront steering vector, entry
    /// `exp(-j k (r^(n) - r)) / sqrt(N)`. `r = inf` gives the far-field
    /// limit `exp(+j k R cos(theta - psi_n)) / sqrt(N)`.
    pub fn near_steering(&self, r: f64, theta: f64, model: DistanceModel) -> Result<CVec> {
        check_range(r)?;
        Ok(self.near_steering_unchecked(r, theta, model))
    }

    pub(crate) fn near_steering_unchecked(&self, r: f64, theta: f64, model: DistanceModel) -> CVec {
        let k = self.wavenumber();
        let scale = 1.0 / (self.n_elements as f64).sqrt();
        CVec::from_fn(self.n_elements, |n, _| {
            cis(-k * self.path_difference(r, theta, n, model)) * scale
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    n_elements: usize,
    spacing: f64,
    wavelength: f64,
}

impl UlaGeometry {
    pub fn new(n_elements: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::Geometry("ULA needs at least one element".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Geometry(format!("invalid ULA spacing {spacing}")));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::Geometry(format!("invalid wavelength {wavelength}")));
        }
        Ok(Self {
            n_elements,
            spacing,
            wavelength,
        })
    }

    /// Half-wavelength spacing.
    pub fn half_wavelength(n_elements: usize, wavelength: f64) -> Result<Self> {
        Self::new(n_elements, 0.5 * wavelength, wavelength)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Entry `k`: `exp(-j 2 pi / lambda * k d cos(phi)) / sqrt(N_T)`.
    pub fn steering(&self, phi: f64) -> CVec {
        self.steering_cos(phi.cos())
    }

    /// Steering vector parameterised by the direction cosine `cos(phi)`.
    pub fn steering_cos(&self, direction_cosine: f64) -> CVec {
        let step = 2.0 * PI / self.wavelength * self.spacing * direction_cosine;
        let scale = 1.0 / (self.n_elements as f64).sqrt();
        CVec::from_fn(self.n_elements, |k, _| cis(-step * k as f64) * scale)
    }
}

fn check_finite_range(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("range must be positive and finite, got {r}")));
    }
    Ok(())
}

fn check_range(r: f64) -> Result<()> {
    if r == f64::INFINITY || (r > 0.0 && r.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("range must be positive or +inf, got {r}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sq;
    use proptest::prelude::*;

    fn uca() -> UcaGeometry {
        UcaGeometry::new(64, 0.077, 0.01).unwrap()
    }

    // k R = pi / 2: phase gaps between distance models scale with k R
    fn small_uca() -> UcaGeometry {
        UcaGeometry::new(16, 0.0025, 0.01).unwrap()
    }

    #[test]
    fn element_angles_cover_the_circle() {
        let g = UcaGeometry::new(4, 1.0, 1.0).unwrap();
        let a = g.element_angles();
        assert_eq!(a.len(), 4);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!((a[3] - 2.0 * PI).abs() < 1e-15);
        assert!(a.iter().all(|&x| x > 0.0 && x <= 2.0 * PI));
    }

    #[test]
    fn constructor_validation() {
        assert!(UcaGeometry::new(0, 1.0, 1.0).is_err());
        assert!(UcaGeometry::new(4, -1.0, 1.0).is_err());
        assert!(UcaGeometry::new(4, 1.0, 0.0).is_err());
        assert!(UlaGeometry::new(0, 0.5, 1.0).is_err());
        assert!(UlaGeometry::new(2, 0.0, 1.0).is_err());
    }

    #[test]
    fn far_steering_examples() {
        let g = uca();
        assert!((norm_sq(&g.far_steering(0.7)) - 1.0).abs() < 1e-12);

        let flat = UcaGeometry::new(5, 0.0, 1.0).unwrap();
        let v = flat.far_steering(1.1);
        let expect = 1.0 / 5f64.sqrt();
        assert!(v.iter().all(|z| (z.re - expect).abs() < 1e-15 && z.im.abs() < 1e-15));

        // N = 4, R = lambda/2, theta = psi_1: phase of entry 1 is -pi
        let g4 = UcaGeometry::new(4, 0.5, 1.0).unwrap();
        let v = g4.far_steering(g4.element_angle(0));
        assert!((v[0].re + 0.5).abs() < 1e-15 && v[0].im.abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let g = UcaGeometry::new(8, 0.1, 0.01).unwrap();
        let psi = g.element_angle(2);
        assert!((g.exact_distance(10.0, psi, 2).unwrap() - 9.9).abs() < 1e-12);
        assert!((g.exact_distance(10.0, psi + PI, 2).unwrap() - 10.1).abs() < 1e-12);
        let pyth = g.exact_distance(10.0, psi + PI / 2.0, 2).unwrap();
        assert!((pyth - 100.01f64.sqrt()).abs() < 1e-12);

        assert!((g.taylor_distance(10.0, psi, 2).unwrap() - 9.9).abs() < 1e-12);
        let flat = UcaGeometry::new(8, 0.0, 0.01).unwrap();
        assert_eq!(flat.taylor_distance(3.0, 0.4, 1).unwrap(), 3.0);

        assert!(g.exact_distance(0.0, 0.0, 0).is_err());
        assert!(g.taylor_distance(-1.0, 0.0, 0).is_err());
        assert!(g.exact_distance(1.0, 0.0, 8).is_err());
    }

    #[test]
    fn taylor_is_accurate_far_out() {
        // |taylor - exact| / exact < 1e-5 at r = 100 R over a 1000-point grid
        let g = UcaGeometry::new(16, 0.1, 0.01).unwrap();
        let r = 100.0 * g.radius();
        for i in 0..1000 {
            let theta = 2.0 * PI * i as f64 / 1000.0;
            let n = i % 16;
            let exact = g.exact_distance(r, theta, n).unwrap();
            let approx = g.taylor_distance(r, theta, n).unwrap();
            assert!(((approx - exact) / exact).abs() < 1e-5);
        }
    }

    #[test]
    fn taylor_error_decreases_with_range() {
        let g = UcaGeometry::new(16, 0.1, 0.01).unwrap();
        for &theta in &[0.1, 0.9, 2.0, 4.4] {
            let mut last = f64::INFINITY;
            for s in 1..40 {
                let r = g.radius() * (1.5 + s as f64);
                let err = (0..16)
                    .map(|n| {
                        (g.taylor_distance(r, theta, n).unwrap()
                            - g.exact_distance(r, theta, n).unwrap())
                        .abs()
                    })
                    .fold(0.0, f64::max);
                assert!(err <= last, "theta {theta} r {r}");
                last = err;
            }
        }
    }

    #[test]
    fn near_steering_far_limit() {
        let g = uca();
        let inf = g.near_steering(f64::INFINITY, 1.3, DistanceModel::Taylor).unwrap();
        let conj_far = g.far_steering(1.3).map(|z| z.conj());
        assert!(norm_sq(&(inf.clone() - conj_far)).sqrt() < 1e-12);

        let g = small_uca();
        let inf = g.near_steering(f64::INFINITY, 1.3, DistanceModel::Taylor).unwrap();
        let close = g
            .near_steering(1000.0 * g.radius(), 1.3, DistanceModel::Exact)
            .unwrap();
        for (a, b) in close.iter().zip(inf.iter()) {
            assert!((a / b).arg().abs() < 1e-3);
        }
        assert!(g.near_steering(0.0, 0.0, DistanceModel::Taylor).is_err());
        assert!(g.near_steering(f64::NEG_INFINITY, 0.0, DistanceModel::Taylor).is_err());
    }

    #[test]
    fn exact_and_taylor_steering_agree_beyond_ten_radii() {
        let g = small_uca();
        for s in 0..20 {
            let r = g.radius() * (10.0 + 5.0 * s as f64);
            for t in 0..16 {
                let theta = 2.0 * PI * t as f64 / 16.0 + 0.05;
                let a = g.near_steering(r, theta, DistanceModel::Exact).unwrap();
                let b = g.near_steering(r, theta, DistanceModel::Taylor).unwrap();
                for (x, y) in a.iter().zip(b.iter()) {
                    assert!((x / y).arg().abs() < 1e-2);
                }
            }
        }
    }

    #[test]
    fn ula_examples() {
        let u = UlaGeometry::half_wavelength(8, 0.01).unwrap();
        let broadside = u.steering(PI / 2.0);
        let expect = 1.0 / 8f64.sqrt();
        assert!(broadside.iter().all(|z| (z.re - expect).abs() < 1e-12 && z.im.abs() < 1e-12));

        let single = UlaGeometry::half_wavelength(1, 0.01).unwrap().steering(0.3);
        assert_eq!(single.len(), 1);
        assert!((single[0].re - 1.0).abs() < 1e-15);

        let endfire = u.steering(0.0);
        for (k, z) in endfire.iter().enumerate() {
            let expect = cis(-(k as f64) * PI) * (1.0 / 8f64.sqrt());
            assert!((z - expect).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn steering_vectors_have_unit_norm(
            r in 0.01f64..100.0,
            theta in 0.0f64..(2.0 * PI),
            phi in 0.0f64..PI,
            exact in any::<bool>(),
        ) {
            let g = uca();
            let model = if exact { DistanceModel::Exact } else { DistanceModel::Taylor };
            let a = g.near_steering(r, theta, model).unwrap();
            prop_assert!((norm_sq(&a) - 1.0).abs() < 1e-12);
            prop_assert!((norm_sq(&g.far_steering(theta)) - 1.0).abs() < 1e-12);
            let u = UlaGeometry::half_wavelength(8, 0.01).unwrap();
            prop_assert!((norm_sq(&u.steering(phi)) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn exact_distance_obeys_triangle_bounds(r in 0.001f64..50.0, theta in -7.0f64..7.0) {
            let g = UcaGeometry::new(12, 0.3, 0.01).unwrap();
            for n in 0..12 {
                let d = g.exact_distance(r, theta, n).unwrap();
                prop_assert!(d >= (r - 0.3).abs() - 1e-12);
                prop_assert!(d <= r + 0.3 + 1e-12);
            }
        }
    }
}
