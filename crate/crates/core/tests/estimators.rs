//! End-to-end estimator behavior on simulated pilot observations.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ringbayes::channel::beamspace_ground_truth;
use ringbayes::estimators::{
    design_data_link, mfocuss_estimate, mmse_detect, omp_estimate, ring_bayes, run_estimator, EstimatorKind,
    FocussOptions, OmpOptions, SblOptions, Whitener,
};
use ringbayes::harness::sweep::nmse;
use ringbayes::harness::{
    child_seed, draw_trial, run_frames_sweep, run_nmse_sweep, Execution, ExperimentConfig, Setup, TrialDraw,
};
use ringbayes::linalg::{unvectorize, vectorize, CMat, CVec};
use ringbayes::sensing::{assemble_sensing, draw_pilot_frame, SensingModel};

fn draw(cfg: &ExperimentConfig, setup: &Setup, snr_db: f64, trial: usize) -> TrialDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, 0, trial));
    draw_trial(cfg, setup, snr_db, &mut rng).unwrap()
}

fn noiseless_model(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> SensingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..cfg.frames)
        .map(|_| draw_pilot_frame(&mut rng, cfg.frame_dims()).unwrap())
        .collect();
    assemble_sensing(frames, setup.dictionary.clone(), 0.0).unwrap()
}

fn argmax_abs(v: &CVec) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())).unwrap()
}

fn true_atom(d: &TrialDraw, setup: &Setup) -> usize {
    let truth = vectorize(&beamspace_ground_truth(&d.channel, &setup.codebook, &setup.ue_grid).unwrap());
    let support: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].norm() > 0.0).collect();
    assert_eq!(support.len(), 1);
    support[0]
}

#[test]
fn ring_bayes_finds_a_single_on_grid_path() {
    let cfg = ExperimentConfig { paths: 1, on_grid: true, ..ExperimentConfig::desk() };
    let setup = cfg.build_setup().unwrap();
    let opts = SblOptions { epsilon: 1e-6, k_max: 500, ..SblOptions::default() };
    for trial in 0..3 {
        let d = draw(&cfg, &setup, 40.0, trial);
        let est = ring_bayes(&d.y, &d.model, &opts).unwrap();
        assert_eq!(argmax_abs(est.h_b_hat.as_ref().unwrap()), true_atom(&d, &setup));
        let ratio = nmse(&est.h_matrix, &d.channel.matrix);
        assert!(ratio < 1e-3, "trial {trial}: nmse {ratio:e}");
    }
}

#[test]
fn omp_picks_the_brute_force_atom_over_the_full_dictionary() {
    let cfg = ExperimentConfig::full();
    let setup = cfg.build_setup().unwrap();
    let model = noiseless_model(&cfg, &setup, 3);
    let omega = model.omega_beamspace();
    assert_eq!(omega.shape(), (320, 8000));
    let whitened = Whitener::new(model.noise_shape()).unwrap().matrix(omega).unwrap();
    let coef = Complex64::new(0.7, -1.3);
    for atom in [0, 4321, 7999] {
        let y: CVec = omega.column(atom) * coef;
        let yw = Whitener::new(model.noise_shape()).unwrap().vector(&y).unwrap();
        let oracle = (0..whitened.ncols())
            .max_by(|&a, &b| {
                let score = |j: usize| whitened.column(j).dotc(&yw).norm() / whitened.column(j).norm();
                score(a).total_cmp(&score(b))
            })
            .unwrap();
        assert_eq!(oracle, atom);
        let est = omp_estimate(&y, &model, &OmpOptions { max_atoms: 1, residual_tol: 1e-3 }).unwrap();
        assert_eq!(est.diagnostics.support, vec![atom]);
        let h_b = est.h_b_hat.unwrap();
        assert!((h_b[atom] - coef).norm() < 1e-8);
        assert_eq!(h_b.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }
}

#[test]
fn omp_on_zero_observation_selects_nothing() {
    let cfg = ExperimentConfig::desk();
    let setup = cfg.build_setup().unwrap();
    let model = noiseless_model(&cfg, &setup, 4);
    let y = CVec::zeros(model.n_measurements());
    let est = omp_estimate(&y, &model, &OmpOptions::for_paths(5)).unwrap();
    assert!(est.diagnostics.support.is_empty());
    assert_eq!(est.h_hat.norm(), 0.0);
}

#[test]
fn mfocuss_dominant_entry_is_the_true_atom() {
    let cfg = ExperimentConfig::desk();
    let setup = cfg.build_setup().unwrap();
    let model = noiseless_model(&cfg, &setup, 5);
    for atom in [17, 2000, 4031] {
        let y: CVec = model.omega_beamspace().column(atom) * Complex64::new(-0.4, 0.9);
        let est = mfocuss_estimate(&y, &model, &FocussOptions { reg_lambda: Some(0.0), ..Default::default() })
            .unwrap();
        assert_eq!(argmax_abs(est.h_b_hat.as_ref().unwrap()), atom);
    }
}

#[test]
fn ls_recovers_the_channel_from_a_square_system() {
    // 4 frames x 4 RF chains = 16 measurements for an 8 x 2 channel
    let cfg = ExperimentConfig {
        n_r: 8,
        n_t: 2,
        n_rf_r: 4,
        n_rf_t: 2,
        n_s: 1,
        frames: 4,
        n_angles: 15,
        n_rings: 2,
        g_t: 2,
        ..ExperimentConfig::desk()
    };
    let setup = cfg.build_setup().unwrap();
    let d = draw(&cfg, &setup, 0.0, 0);
    let model = noiseless_model(&cfg, &setup, 6);
    assert_eq!(model.omega_stacked().shape(), (16, 16));
    let y = model.omega_stacked() * &d.channel.vectorized;
    let est = run_estimator(EstimatorKind::Ls, &y, &model, &cfg.estimator_settings()).unwrap();
    assert!((&est.h_hat - &d.channel.vectorized).norm() < 1e-10 * d.channel.vectorized.norm());
    let zero = run_estimator(EstimatorKind::Ls, &CVec::zeros(16), &model, &cfg.estimator_settings()).unwrap();
    assert_eq!(zero.h_hat.norm(), 0.0);
}

#[test]
fn outputs_are_consistent_with_the_dictionary() {
    let cfg = ExperimentConfig { estimators: EstimatorKind::ALL.iter().map(|k| k.name().into()).collect(), ..ExperimentConfig::desk() };
    let setup = cfg.build_setup().unwrap();
    let d = draw(&cfg, &setup, 10.0, 0);
    let settings = cfg.estimator_settings();
    for kind in EstimatorKind::ALL {
        let est = run_estimator(kind, &d.y, &d.model, &settings).unwrap();
        if let Some(h_b) = &est.h_b_hat {
            let via_dictionary = setup.dictionary.matrix() * h_b;
            assert!((&via_dictionary - &est.h_hat).norm() <= 1e-12 * est.h_hat.norm().max(1.0), "{kind}");
        }
        assert_eq!(unvectorize(&est.h_hat, cfg.n_r, cfg.n_t).unwrap(), est.h_matrix, "{kind}");
    }
}

#[test]
fn sparse_estimation_beats_least_squares_at_10_db() {
    let cfg = ExperimentConfig {
        snr_grid_db: vec![10.0],
        trials: 12,
        estimators: vec!["ring_bayes".into(), "ls".into()],
        ..ExperimentConfig::desk()
    };
    let r = run_nmse_sweep(&cfg, Execution::Parallel).unwrap();
    let rb = r.row(10.0, cfg.frames, "ring_bayes").unwrap().nmse_db;
    let ls = r.row(10.0, cfg.frames, "ls").unwrap().nmse_db;
    assert!(rb < ls, "ring_bayes {rb} dB, ls {ls} dB");
}

#[test]
fn frame_counts_are_validated() {
    let cfg = ExperimentConfig { trials: 1, ..ExperimentConfig::desk() };
    assert!(run_frames_sweep(&cfg, &[], Execution::Serial).is_err());
    assert!(run_frames_sweep(&cfg, &[5, 0], Execution::Serial).is_err());
}

#[test]
fn repeated_sweeps_are_identical() {
    let cfg = ExperimentConfig {
        trials: 2,
        snr_grid_db: vec![5.0],
        estimators: vec!["omp".into(), "ls".into()],
        ..ExperimentConfig::desk()
    };
    let a = run_nmse_sweep(&cfg, Execution::Parallel).unwrap();
    let b = run_nmse_sweep(&cfg, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mmse_vanishes_under_overwhelming_noise() {
    let h = CMat::from_fn(4, 2, |i, j| Complex64::new(i as f64 - 1.0, j as f64 + 0.5));
    let y = CVec::from_fn(4, |i, _| Complex64::new(1.0, -(i as f64)));
    let x = mmse_detect(&y, &h, 1e12).unwrap();
    assert!(x.norm() < 1e-10);
}

#[test]
fn perfect_csi_link_diagonalizes_the_channel() {
    let cfg = ExperimentConfig::desk();
    let setup = cfg.build_setup().unwrap();
    let d = draw(&cfg, &setup, 10.0, 1);
    let h = &d.channel.matrix;
    let link = design_data_link(h, 2).unwrap();
    let eff = link.effective(h).unwrap();
    let sv = h.clone().svd(false, false).singular_values;
    for i in 0..2 {
        for j in 0..2 {
            let expect = if i == j { sv[i] } else { 0.0 };
            assert!((eff[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-10 * sv[0]);
        }
    }

    // rank one
    let a = CVec::from_fn(6, |i, _| Complex64::new(1.0, i as f64));
    let b = CVec::from_fn(3, |i, _| Complex64::new(2.0 - i as f64, 0.5));
    let rank_one = &a * b.adjoint();
    let link = design_data_link(&rank_one, 1).unwrap();
    let eff = link.effective(&rank_one).unwrap();
    assert!((eff[(0, 0)].norm() - a.norm() * b.norm()).abs() < 1e-10);
    assert!(eff[(0, 0)].im.abs() < 1e-10 && eff[(0, 0)].re > 0.0);
}
