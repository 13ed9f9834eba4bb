//! Frame-wise pilot sensing.
//!
//! In frame `m` the user sends pilots `x_m` through the analog precoder
//! `F_m` and the base station combines with `W_m`:
//! `y_m = ((F_m x_m)^T ⊗ W_m^H) vec(H) + W_m^H n_m`. Stacking `M` frames gives
//! `y_p = Omega_p h + n_p` with block-diagonal noise covariance
//! `S = blkdiag(sigma^2 W_m^H W_m)`, and in beamspace `y_p = Omega h_b + n_p`
//! with `Omega = Omega_p Lambda`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, ChannelRealization};
use crate::codebook::SparsifyingDictionary;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, cis, kron, matmul, norm_sq, serde_complex, vstack, CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDims {
    pub n_t: usize,
    pub n_r: usize,
    pub n_rf_t: usize,
    pub n_rf_r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotFrame {
    /// `N_T x N_RF^T`, entries of modulus `1/sqrt(N_T)`.
    #[serde(with = "serde_complex::matrix")]
    pub f_rf: CMat,
    /// `N_R x N_RF^R`, entries of modulus `1/sqrt(N_R)`.
    #[serde(with = "serde_complex::matrix")]
    pub w_rf: CMat,
    #[serde(with = "serde_complex::vector")]
    pub x: CVec,
}

/// Unit-modulus QPSK symbol from two bits.
pub fn qpsk(b0: bool, b1: bool) -> Complex64 {
    let re = if b0 { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    let im = if b1 { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

fn random_phase_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let amp = 1.0 / (rows as f64).sqrt();
    CMat::from_fn(rows, cols, |_, _| cis(rng.random_range(0.0..2.0 * PI)) * amp)
}

/// Random analog beams (uniform phases at the mandated modulus) and random
/// QPSK pilots.
pub fn draw_pilot_frame<R: Rng + ?Sized>(rng: &mut R, dims: FrameDims) -> Result<PilotFrame> {
    if dims.n_t == 0 || dims.n_r == 0 || dims.n_rf_t == 0 || dims.n_rf_r == 0 {
        return Err(Error::Config(format!("frame dimensions must be positive: {dims:?}")));
    }
    let f_rf = random_phase_matrix(rng, dims.n_t, dims.n_rf_t);
    let w_rf = random_phase_matrix(rng, dims.n_r, dims.n_rf_r);
    let x = CVec::from_fn(dims.n_rf_t, |_, _| qpsk(rng.random(), rng.random()));
    Ok(PilotFrame { f_rf, w_rf, x })
}

impl PilotFrame {
    /// `F_RF x`, the per-antenna transmit vector.
    pub fn transmit_vector(&self) -> CVec {
        &self.f_rf * &self.x
    }
}

/// `(x^T F^T) ⊗ W^H`, so that `Omega_m vec(H) = W^H H F x`.
pub fn frame_sensing_matrix(frame: &PilotFrame) -> CMat {
    let s = frame.transmit_vector();
    let row = CMat::from_row_slice(1, s.len(), s.as_slice());
    kron(&row, &frame.w_rf.adjoint())
}

#[derive(Debug, Clone)]
pub struct SensingModel {
    frames: Vec<PilotFrame>,
    omega_frames: Vec<CMat>,
    omega_stacked: CMat,
    omega_beamspace: CMat,
    noise_shape: CMat,
    noise_cov: CMat,
    sigma2: f64,
    dictionary: Arc<SparsifyingDictionary>,
}

/// Stacks the frames and forms the beamspace sensing matrix. The beamspace
/// product uses the mixed-product rule frame by frame:
/// `((F x)^T ⊗ W^H)(conj(A_T) ⊗ A_R) = ((F x)^T conj(A_T)) ⊗ (W^H A_R)`.
pub fn assemble_sensing(
    frames: Vec<PilotFrame>,
    dictionary: Arc<SparsifyingDictionary>,
    sigma2: f64,
) -> Result<SensingModel> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Config("at least one pilot frame is required".into()))?;
    let n_t = first.f_rf.nrows();
    let n_r = first.w_rf.nrows();
    let shape = (first.f_rf.shape(), first.w_rf.shape(), first.x.len());
    if frames
        .iter()
        .any(|f| (f.f_rf.shape(), f.w_rf.shape(), f.x.len()) != shape || f.x.len() != f.f_rf.ncols())
    {
        return Err(Error::Dimension("pilot frames have inconsistent shapes".into()));
    }
    if dictionary.n_rows() != n_r * n_t
        || dictionary.bs_factor().nrows() != n_r
        || dictionary.ue_factor_conj().nrows() != n_t
    {
        return Err(Error::Dimension(format!(
            "dictionary has {} rows, frames expect {}",
            dictionary.n_rows(),
            n_r * n_t
        )));
    }
    check_sigma2(sigma2)?;

    let omega_frames: Vec<CMat> = frames.iter().map(frame_sensing_matrix).collect();
    let omega_stacked = vstack(&omega_frames)?;

    let beam_blocks: Vec<CMat> = frames
        .iter()
        .map(|f| {
            let x = f.transmit_vector();
            let ue_row = CMat::from_row_slice(1, x.len(), x.as_slice()) * dictionary.ue_factor_conj();
            let bs_block = matmul(&f.w_rf.adjoint(), dictionary.bs_factor());
            kron(&ue_row, &bs_block)
        })
        .collect();
    let omega_beamspace = vstack(&beam_blocks)?;

    let shapes: Vec<CMat> = frames.iter().map(|f| f.w_rf.adjoint() * &f.w_rf).collect();
    let noise_shape = block_diag(&shapes);
    let noise_cov = &noise_shape * Complex64::new(sigma2, 0.0);

    Ok(SensingModel {
        frames,
        omega_frames,
        omega_stacked,
        omega_beamspace,
        noise_shape,
        noise_cov,
        sigma2,
        dictionary,
    })
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("noise variance must be finite and >= 0, got {sigma2}")));
    }
    Ok(())
}

impl SensingModel {
    pub fn frames(&self) -> &[PilotFrame] {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn omega_frames(&self) -> &[CMat] {
        &self.omega_frames
    }

    /// Element-domain stacked sensing matrix `Omega_p`.
    pub fn omega_stacked(&self) -> &CMat {
        &self.omega_stacked
    }

    /// Beamspace sensing matrix `Omega = Omega_p Lambda`.
    pub fn omega_beamspace(&self) -> &CMat {
        &self.omega_beamspace
    }

    /// `S = sigma^2 blkdiag(W_m^H W_m)`.
    pub fn noise_cov(&self) -> &CMat {
        &self.noise_cov
    }

    /// `blkdiag(W_m^H W_m)`, the noise covariance per unit `sigma^2`.
    pub fn noise_shape(&self) -> &CMat {
        &self.noise_shape
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dictionary(&self) -> &SparsifyingDictionary {
        &self.dictionary
    }

    pub fn dictionary_arc(&self) -> Arc<SparsifyingDictionary> {
        Arc::clone(&self.dictionary)
    }

    pub fn n_measurements(&self) -> usize {
        self.omega_stacked.nrows()
    }

    pub fn n_r(&self) -> usize {
        self.frames[0].w_rf.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.frames[0].f_rf.nrows()
    }

    pub fn set_sigma2(&mut self, sigma2: f64) -> Result<()> {
        check_sigma2(sigma2)?;
        self.sigma2 = sigma2;
        self.noise_cov = &self.noise_shape * Complex64::new(sigma2, 0.0);
        Ok(())
    }

    /// Noiseless pilot energy `||Omega_p h||^2`.
    pub fn pilot_energy(&self, channel: &ChannelRealization) -> f64 {
        norm_sq(&(&self.omega_stacked * &channel.vectorized))
    }
}

/// `y_p = Omega_p h + n_p`, where frame `m` noise is `W_m^H` applied to
/// i.i.d. `CN(0, sigma^2)` element noise.
pub fn observe<R: Rng + ?Sized>(
    model: &SensingModel,
    channel: &ChannelRealization,
    rng: &mut R,
) -> Result<CVec> {
    if channel.vectorized.len() != model.omega_stacked.ncols() {
        return Err(Error::Dimension(format!(
            "channel has {} entries, sensing expects {}",
            channel.vectorized.len(),
            model.omega_stacked.ncols()
        )));
    }
    let mut y = &model.omega_stacked * &channel.vectorized;
    if model.sigma2 > 0.0 {
        let sd = model.sigma2.sqrt();
        let mut row = 0;
        for f in &model.frames {
            let element_noise = CVec::from_fn(f.w_rf.nrows(), |_, _| complex_normal(rng) * sd);
            let combined = f.w_rf.adjoint() * element_noise;
            y.rows_mut(row, combined.len()).zip_apply(&combined, |a, b| *a += b);
            row += combined.len();
        }
    }
    Ok(y)
}

/// Noise variance for a target SNR, where SNR is the mean received pilot
/// power per measurement over `sigma^2`. `channel_power` is the noiseless
/// pilot energy `||Omega_p h||^2` of the realization.
pub fn snr_to_sigma2(snr_db: f64, model: &SensingModel, channel_power: f64) -> Result<f64> {
    if !(channel_power > 0.0 && channel_power.is_finite()) {
        return Err(Error::Domain(format!("channel power must be positive, got {channel_power}")));
    }
    let per_measurement = channel_power / model.n_measurements() as f64;
    Ok(per_measurement / 10f64.powf(snr_db / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{beamspace_ground_truth, draw_paths, synthesize_channel, Scenario};
    use crate::codebook::{
        build_dictionary, build_ring_codebook, build_ula_grid, r_min_for_ring_count,
        radius_for_angle_count, ring_constant, RingCodebook, UlaGrid,
    };
    use crate::geometry::{DistanceModel, UcaGeometry, UlaGeometry};
    use crate::linalg::{frobenius_sq, vectorize};
    use crate::specfun::J0_FIRST_ZERO;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        bs: UcaGeometry,
        ue: UlaGeometry,
        cb: RingCodebook,
        ug: UlaGrid,
        dict: Arc<SparsifyingDictionary>,
        dims: FrameDims,
    }

    fn fixture() -> Fixture {
        let lambda = 0.01;
        let bs = UcaGeometry::new(16, radius_for_angle_count(12, lambda, J0_FIRST_ZERO).unwrap(), lambda)
            .unwrap();
        let r_min = r_min_for_ring_count(2, ring_constant(&bs, J0_FIRST_ZERO)).unwrap();
        let cb = build_ring_codebook(&bs, r_min, J0_FIRST_ZERO, DistanceModel::Taylor).unwrap();
        let ue = UlaGeometry::half_wavelength(4, lambda).unwrap();
        let ug = build_ula_grid(&ue, 6).unwrap();
        let dict = Arc::new(build_dictionary(&cb, &ug));
        let dims = FrameDims { n_t: 4, n_r: 16, n_rf_t: 2, n_rf_r: 4 };
        Fixture { bs, ue, cb, ug, dict, dims }
    }

    fn frames(f: &Fixture, m: usize, seed: u64) -> Vec<PilotFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| draw_pilot_frame(&mut rng, f.dims).unwrap()).collect()
    }

    fn channel(f: &Fixture, on_grid: bool, seed: u64) -> ChannelRealization {
        let s = Scenario {
            n_paths: 3,
            r_min: f.cb.r_min(),
            r_max: 5.0,
            on_grid,
            codebook: Some(&f.cb),
            ue_grid: Some(&f.ug),
        };
        let ps = draw_paths(&mut ChaCha8Rng::seed_from_u64(seed), &s).unwrap();
        synthesize_channel(&f.bs, &f.ue, &ps, DistanceModel::Taylor).unwrap()
    }

    #[test]
    fn frame_constraints_and_determinism() {
        let f = fixture();
        let a = frames(&f, 3, 9);
        assert_eq!(a, frames(&f, 3, 9));
        for fr in &a {
            assert!(fr.f_rf.iter().all(|z| (z.norm() - 0.5).abs() < 1e-15));
            assert!(fr.w_rf.iter().all(|z| (z.norm() - 0.25).abs() < 1e-15));
            assert!(fr.x.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        }
        let bad = FrameDims { n_rf_r: 0, ..f.dims };
        assert!(draw_pilot_frame(&mut ChaCha8Rng::seed_from_u64(0), bad).is_err());
    }

    #[test]
    fn combiner_gram_averages_to_identity() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut acc = CMat::zeros(4, 4);
        let n = 1000;
        for _ in 0..n {
            let fr = draw_pilot_frame(&mut rng, f.dims).unwrap();
            acc += fr.w_rf.adjoint() * &fr.w_rf;
        }
        acc /= Complex64::new(n as f64, 0.0);
        for i in 0..4 {
            assert!((acc[(i, i)].re - 1.0).abs() < 1e-12);
            for j in 0..4 {
                if i != j {
                    assert!(acc[(i, j)].norm() < 0.05);
                }
            }
        }
    }

    #[test]
    fn frame_matrix_matches_direct_product() {
        let f = fixture();
        let fr = &frames(&f, 1, 3)[0];
        let h = channel(&f, false, 5);
        let om = frame_sensing_matrix(fr);
        assert_eq!(om.shape(), (4, 64));
        let direct = fr.w_rf.adjoint() * &h.matrix * &fr.f_rf * &fr.x;
        assert!((om * &h.vectorized - direct).norm() < 1e-10);

        // single RF chain on both sides, x = 1: f^T ⊗ w^H
        let dims = FrameDims { n_t: 4, n_r: 16, n_rf_t: 1, n_rf_r: 1 };
        let mut single = draw_pilot_frame(&mut ChaCha8Rng::seed_from_u64(1), dims).unwrap();
        single.x = CVec::from_element(1, Complex64::new(1.0, 0.0));
        let om = frame_sensing_matrix(&single);
        let expect = kron(&single.f_rf.transpose(), &single.w_rf.adjoint());
        assert_eq!(om.nrows(), 1);
        assert!(frobenius_sq(&(om - expect)) < 1e-28);
    }

    #[test]
    fn assembly_shapes_and_blocks() {
        let f = fixture();
        let fr = frames(&f, 3, 4);
        let model = assemble_sensing(fr.clone(), Arc::clone(&f.dict), 0.3).unwrap();
        assert_eq!(model.omega_stacked().shape(), (12, 64));
        assert_eq!(model.omega_beamspace().shape(), (12, f.dict.n_columns()));
        for (m, frame) in fr.iter().enumerate() {
            let block = model.omega_stacked().rows(4 * m, 4).into_owned();
            assert_eq!(block, frame_sensing_matrix(frame));
        }
        // mixed-product route equals the explicit product
        let explicit = matmul(model.omega_stacked(), f.dict.matrix());
        assert!(frobenius_sq(&(explicit - model.omega_beamspace())).sqrt() < 1e-10);

        let s = model.noise_cov();
        for i in 0..12 {
            assert!((s[(i, i)].re - 0.3).abs() < 1e-14);
        }
        assert!(frobenius_sq(&(s - s.adjoint())) < 1e-28);
        let eig = s.clone().symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > 0.0));
        assert!(s[(0, 5)].norm() == 0.0);

        let single = assemble_sensing(fr[..1].to_vec(), Arc::clone(&f.dict), 0.3).unwrap();
        assert_eq!(single.omega_stacked(), &single.omega_frames()[0]);
    }

    #[test]
    fn assembly_rejects_bad_input() {
        let f = fixture();
        assert!(assemble_sensing(vec![], Arc::clone(&f.dict), 0.1).is_err());
        let mut fr = frames(&f, 2, 4);
        fr[1].w_rf = CMat::zeros(16, 3);
        assert!(matches!(
            assemble_sensing(fr, Arc::clone(&f.dict), 0.1),
            Err(Error::Dimension(_))
        ));
        assert!(assemble_sensing(frames(&f, 1, 4), Arc::clone(&f.dict), -1.0).is_err());
    }

    #[test]
    fn noiseless_observation_consistency() {
        let f = fixture();
        let model = assemble_sensing(frames(&f, 4, 7), Arc::clone(&f.dict), 0.0).unwrap();
        let h = channel(&f, true, 8);
        let y = observe(&model, &h, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(y, model.omega_stacked() * &h.vectorized);
        let hb = beamspace_ground_truth(&h, &f.cb, &f.ug).unwrap();
        let via_beam = model.omega_beamspace() * vectorize(&hb);
        assert!((via_beam - &y).norm() / y.norm() < 1e-10);
    }

    #[test]
    fn noise_covariance_matches_model() {
        let f = fixture();
        let model = assemble_sensing(frames(&f, 2, 3), Arc::clone(&f.dict), 0.7).unwrap();
        let h = channel(&f, false, 2);
        let clean = model.omega_stacked() * &h.vectorized;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let mut acc = CMat::zeros(8, 8);
        for _ in 0..n {
            let e = observe(&model, &h, &mut rng).unwrap() - &clean;
            acc += &e * e.adjoint();
        }
        acc /= Complex64::new(n as f64, 0.0);
        let rel = (frobenius_sq(&(acc - model.noise_cov())) / frobenius_sq(model.noise_cov())).sqrt();
        assert!(rel < 0.05, "relative covariance error {rel}");
    }

    #[test]
    fn snr_definition() {
        let f = fixture();
        let model = assemble_sensing(frames(&f, 2, 3), Arc::clone(&f.dict), 0.0).unwrap();
        let h = channel(&f, false, 2);
        let p = model.pilot_energy(&h);
        let s0 = snr_to_sigma2(0.0, &model, p).unwrap();
        assert!((s0 - p / 8.0).abs() < 1e-12 * s0);
        let s10 = snr_to_sigma2(10.0, &model, p).unwrap();
        assert!((s0 / s10 - 10.0).abs() < 1e-12);
        assert!(snr_to_sigma2(400.0, &model, p).unwrap() < 1e-30);
        assert!(snr_to_sigma2(0.0, &model, 0.0).is_err());

        let mut m2 = model.clone();
        m2.set_sigma2(s10).unwrap();
        assert!((m2.noise_cov()[(0, 0)].re - s10).abs() < 1e-15);
    }
}
