//! Multipath near-field channel realizations.
//!
//! `H = sqrt(N_T N_R / L) * sum_l alpha_l a_R(r_l, theta_l) a_T(phi_l)^H`,
//! with `a_R` the UCA spherical-wavefront steering vector and `a_T` the ULA
//! far-field steering vector.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codebook::{RingCodebook, UlaGrid};
use crate::error::{Error, Result};
use crate::geometry::{DistanceModel, UcaGeometry, UlaGeometry};
use crate::linalg::{serde_complex, vectorize, CMat, CVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    #[serde(with = "serde_complex::scalar")]
    pub gain: Complex64,
    /// Meters; `inf` (serialized as `null`) for a far-field scatterer.
    #[serde(with = "range_or_null")]
    pub distance: f64,
    pub aoa: f64,
    pub aod: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    #[serde(with = "serde_complex::matrix")]
    pub matrix: CMat,
    pub path_set: PathSet,
    #[serde(with = "serde_complex::vector")]
    pub vectorized: CVec,
}

impl ChannelRealization {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Random-draw settings for [`draw_paths`].
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub n_paths: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub on_grid: bool,
    pub codebook: Option<&'a RingCodebook>,
    pub ue_grid: Option<&'a UlaGrid>,
}

/// `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws `L` scatterers: `CN(0, 1)` gains, ranges uniform in
/// `[r_min, r_max]`, azimuths uniform in `[0, 2 pi)`, and departure
/// direction cosines uniform in `[-1, 1]`. With `on_grid` every parameter
/// snaps to the nearest codebook / user-grid sample.
pub fn draw_paths<R: Rng + ?Sized>(rng: &mut R, scenario: &Scenario<'_>) -> Result<PathSet> {
    if scenario.n_paths == 0 {
        return Err(Error::Config("at least one path is required".into()));
    }
    if !(scenario.r_min > 0.0 && scenario.r_max > scenario.r_min && scenario.r_max.is_finite()) {
        return Err(Error::Config(format!(
            "need 0 < r_min < r_max, got [{}, {}]",
            scenario.r_min, scenario.r_max
        )));
    }
    let grid = if scenario.on_grid {
        match (scenario.codebook, scenario.ue_grid) {
            (Some(cb), Some(ug)) => Some((cb, ug)),
            _ => {
                return Err(Error::Config(
                    "on-grid draws need both a codebook and a user grid".into(),
                ))
            }
        }
    } else {
        None
    };

    let mut paths = Vec::with_capacity(scenario.n_paths);
    for _ in 0..scenario.n_paths {
        let gain = complex_normal(rng);
        let mut distance = rng.random_range(scenario.r_min..=scenario.r_max);
        let mut aoa = rng.random_range(0.0..2.0 * PI);
        let mut cos_aod: f64 = rng.random_range(-1.0..=1.0);
        if let Some((cb, ug)) = grid {
            distance = cb.ring_grid()[cb.nearest_ring(distance)];
            aoa = cb.angle_grid()[cb.nearest_angle(aoa)];
            cos_aod = ug.direction_cosines()[ug.nearest(cos_aod)];
        }
        paths.push(Path {
            gain,
            distance,
            aoa,
            aod: cos_aod.acos(),
        });
    }
    Ok(PathSet { paths })
}

pub fn synthesize_channel(
    bs: &UcaGeometry,
    ue: &UlaGeometry,
    paths: &PathSet,
    model: DistanceModel,
) -> Result<ChannelRealization> {
    if paths.is_empty() {
        return Err(Error::Config("empty path set".into()));
    }
    let scale = ((ue.n_elements() * bs.n_elements()) as f64 / paths.len() as f64).sqrt();
    let mut matrix = CMat::zeros(bs.n_elements(), ue.n_elements());
    for p in &paths.paths {
        let a_r = bs.near_steering(p.distance, p.aoa, model)?;
        let a_t = ue.steering(p.aod);
        matrix += (a_r * a_t.adjoint()) * (p.gain * scale);
    }
    let vectorized = vectorize(&matrix);
    Ok(ChannelRealization {
        matrix,
        path_set: paths.clone(),
        vectorized,
    })
}

/// Codebook column and user-grid index of every path; fails unless each
/// path sits exactly on the grid.
pub fn grid_indices(
    paths: &PathSet,
    codebook: &RingCodebook,
    ue_grid: &UlaGrid,
) -> Result<Vec<(usize, usize)>> {
    paths
        .paths
        .iter()
        .map(|p| {
            let ring = codebook.nearest_ring(p.distance);
            let angle = codebook.nearest_angle(p.aoa);
            let c = p.aod.cos();
            let t = ue_grid.nearest(c);
            let on_ring = codebook.ring_grid()[ring] == p.distance;
            let on_angle = codebook.angle_grid()[angle] == p.aoa;
            let on_ue = (ue_grid.direction_cosines()[t] - c).abs() < 1e-9;
            if on_ring && on_angle && on_ue {
                Ok((codebook.column_index(ring, angle), t))
            } else {
                Err(Error::Unsupported(format!(
                    "path (r={}, theta={}, phi={}) is not on the codebook grid",
                    p.distance, p.aoa, p.aod
                )))
            }
        })
        .collect()
}

/// Sparse beamspace matrix `H_b` (`codebook columns x G_T`) with
/// `H ≈ A_R H_b A_T^H`. Exact only for on-grid realizations.
pub fn beamspace_ground_truth(
    realization: &ChannelRealization,
    codebook: &RingCodebook,
    ue_grid: &UlaGrid,
) -> Result<CMat> {
    let paths = &realization.path_set;
    let idx = grid_indices(paths, codebook, ue_grid)?;
    let n_r = realization.matrix.nrows();
    let n_t = realization.matrix.ncols();
    let scale = ((n_r * n_t) as f64 / paths.len() as f64).sqrt();
    let mut hb = CMat::zeros(codebook.n_columns(), ue_grid.len());
    for (p, (k, t)) in paths.paths.iter().zip(idx) {
        hb[(k, t)] += p.gain * scale;
    }
    Ok(hb)
}

mod range_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_finite() {
            s.serialize_some(r)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{build_ring_codebook, build_ula_grid, r_min_for_ring_count, radius_for_angle_count, ring_constant};
    use crate::linalg::{frobenius_sq, kron, norm_sq, unvectorize};
    use crate::specfun::J0_FIRST_ZERO;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        bs: UcaGeometry,
        ue: UlaGeometry,
        cb: RingCodebook,
        ug: UlaGrid,
    }

    fn fixture() -> Fixture {
        let lambda = 0.01;
        let bs = UcaGeometry::new(16, radius_for_angle_count(20, lambda, J0_FIRST_ZERO).unwrap(), lambda)
            .unwrap();
        let r_min = r_min_for_ring_count(3, ring_constant(&bs, J0_FIRST_ZERO)).unwrap();
        let cb = build_ring_codebook(&bs, r_min, J0_FIRST_ZERO, DistanceModel::Taylor).unwrap();
        let ue = UlaGeometry::half_wavelength(4, lambda).unwrap();
        let ug = build_ula_grid(&ue, 8).unwrap();
        Fixture { bs, ue, cb, ug }
    }

    fn scenario<'a>(f: &'a Fixture, n: usize, on_grid: bool) -> Scenario<'a> {
        Scenario {
            n_paths: n,
            r_min: f.cb.r_min(),
            r_max: 10.0 * f.bs.fresnel_distance().max(f.cb.r_min()),
            on_grid,
            codebook: Some(&f.cb),
            ue_grid: Some(&f.ug),
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let f = fixture();
        let s = scenario(&f, 5, false);
        let a = draw_paths(&mut ChaCha8Rng::seed_from_u64(11), &s).unwrap();
        let b = draw_paths(&mut ChaCha8Rng::seed_from_u64(11), &s).unwrap();
        assert_eq!(a, b);
        for p in &a.paths {
            assert!(p.distance >= s.r_min && p.distance <= s.r_max);
            assert!((0.0..2.0 * PI).contains(&p.aoa));
            assert!((0.0..=PI).contains(&p.aod));
        }
    }

    #[test]
    fn on_grid_needs_a_codebook() {
        let f = fixture();
        let mut s = scenario(&f, 2, true);
        s.codebook = None;
        assert!(matches!(
            draw_paths(&mut ChaCha8Rng::seed_from_u64(1), &s),
            Err(Error::Config(_))
        ));
        let mut s = scenario(&f, 2, false);
        s.r_max = s.r_min;
        assert!(draw_paths(&mut ChaCha8Rng::seed_from_u64(1), &s).is_err());
    }

    #[test]
    fn on_grid_paths_snap_exactly() {
        let f = fixture();
        let s = scenario(&f, 5, true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let ps = draw_paths(&mut rng, &s).unwrap();
            for p in &ps.paths {
                assert!(f.cb.ring_grid().contains(&p.distance));
                assert!(f.cb.angle_grid().contains(&p.aoa));
            }
            assert!(grid_indices(&ps, &f.cb, &f.ug).is_ok());
        }
    }

    #[test]
    fn gains_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| complex_normal(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean |alpha|^2 = {mean}");
    }

    #[test]
    fn single_unit_path_norm() {
        let f = fixture();
        let ps = PathSet {
            paths: vec![Path {
                gain: Complex64::new(1.0, 0.0),
                distance: 1.0,
                aoa: 0.3,
                aod: 1.0,
            }],
        };
        let h = synthesize_channel(&f.bs, &f.ue, &ps, DistanceModel::Taylor).unwrap();
        let expect = ((f.bs.n_elements() * f.ue.n_elements()) as f64).sqrt();
        assert!((frobenius_sq(&h.matrix).sqrt() - expect).abs() < 1e-12);

        let mut two = ps.clone();
        two.paths.push(Path {
            gain: Complex64::new(0.0, 0.0),
            distance: 2.0,
            aoa: 1.3,
            aod: 0.4,
        });
        let h2 = synthesize_channel(&f.bs, &f.ue, &two, DistanceModel::Taylor).unwrap();
        let diff = &h2.matrix - &h.matrix * Complex64::new(0.5f64.sqrt(), 0.0);
        assert!(frobenius_sq(&diff).sqrt() < 1e-12);
    }

    #[test]
    fn rank_is_bounded_by_path_count() {
        let f = fixture();
        let s = scenario(&f, 3, false);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let ps = draw_paths(&mut rng, &s).unwrap();
            let h = synthesize_channel(&f.bs, &f.ue, &ps, DistanceModel::Taylor).unwrap();
            let sv = h.matrix.clone().singular_values();
            let mut sv: Vec<f64> = sv.iter().copied().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(sv[3..].iter().all(|&s| s < 1e-10), "{sv:?}");
            let round = unvectorize(&h.vectorized, h.matrix.nrows(), h.matrix.ncols()).unwrap();
            assert_eq!(round, h.matrix);
        }
    }

    #[test]
    fn average_channel_power() {
        let f = fixture();
        let s = scenario(&f, 5, false);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let trials = 1000;
        let mean = (0..trials)
            .map(|_| {
                let ps = draw_paths(&mut rng, &s).unwrap();
                frobenius_sq(&synthesize_channel(&f.bs, &f.ue, &ps, DistanceModel::Taylor).unwrap().matrix)
            })
            .sum::<f64>()
            / trials as f64;
        let target = (f.bs.n_elements() * f.ue.n_elements()) as f64;
        assert!((mean / target - 1.0).abs() < 0.1, "mean power {mean} vs {target}");
    }

    #[test]
    fn beamspace_reconstructs_on_grid_channels() {
        let f = fixture();
        let s = scenario(&f, 4, true);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let ps = draw_paths(&mut rng, &s).unwrap();
            let h = synthesize_channel(&f.bs, &f.ue, &ps, DistanceModel::Taylor).unwrap();
            let hb = beamspace_ground_truth(&h, &f.cb, &f.ug).unwrap();
            let nnz = hb.iter().filter(|z| z.norm() > 0.0).count();
            assert!(nnz <= 4 && nnz >= 1);
            let recon = f.cb.matrix() * &hb * f.ug.matrix().adjoint();
            let rel = (frobenius_sq(&(recon - &h.matrix)) / frobenius_sq(&h.matrix)).sqrt();
            assert!(rel < 1e-10);
            let lambda = kron(&f.ug.matrix().map(|z| z.conj()), f.cb.matrix());
            let via_vec = lambda * vectorize(&hb);
            assert!(norm_sq(&(via_vec - &h.vectorized)).sqrt() < 1e-10);
        }
    }

    #[test]
    fn single_on_grid_path_has_one_nonzero() {
        let f = fixture();
        let s = scenario(&f, 1, true);
        let ps = draw_paths(&mut ChaCha8Rng::seed_from_u64(2), &s).unwrap();
        let h = synthesize_channel(&f.bs, &f.ue, &ps, DistanceModel::Taylor).unwrap();
        let hb = beamspace_ground_truth(&h, &f.cb, &f.ug).unwrap();
        assert_eq!(hb.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn off_grid_beamspace_is_unsupported() {
        let f = fixture();
        let s = scenario(&f, 2, false);
        let ps = draw_paths(&mut ChaCha8Rng::seed_from_u64(4), &s).unwrap();
        let h = synthesize_channel(&f.bs, &f.ue, &ps, DistanceModel::Taylor).unwrap();
        assert!(matches!(
            beamspace_ground_truth(&h, &f.cb, &f.ug),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn json_round_trip_keeps_far_field_paths() {
        let f = fixture();
        let ps = PathSet {
            paths: vec![Path {
                gain: Complex64::new(0.5, -1.5),
                distance: f64::INFINITY,
                aoa: 0.1,
                aod: 2.0,
            }],
        };
        let h = synthesize_channel(&f.bs, &f.ue, &ps, DistanceModel::Taylor).unwrap();
        let json = h.to_json().unwrap();
        assert!(json.contains("\"distance\":null"));
        assert_eq!(ChannelRealization::from_json(&json).unwrap(), h);
    }
}
