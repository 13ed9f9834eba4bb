//! Seeded Monte-Carlo sweeps.
//!
//! Every trial owns a generator seeded from `(seed, snr_index, trial)`, so
//! results do not depend on execution order and the serial and parallel
//! drivers produce identical output.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, draw_paths, synthesize_channel, ChannelRealization, Scenario};
use crate::error::{Error, Result};
use crate::estimators::{design_data_link, mmse_detect, run_estimator, EstimatorKind, EstimatorSettings};
use crate::linalg::{frobenius_sq, CMat, CVec};
use crate::sensing::{assemble_sensing, draw_pilot_frame, observe, qpsk, snr_to_sigma2, SensingModel};

use super::config::{ExperimentConfig, Setup};

/// Label of the perfect-CSI reference row in BER sweeps.
pub const GENIE: &str = "genie";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nmse,
    Ber,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmse" => Ok(Metric::Nmse),
            "ber" => Ok(Metric::Ber),
            other => Err(Error::Config(format!("unknown metric {other:?}; expected nmse or ber"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Nmse => "nmse",
            Metric::Ber => "ber",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// One aggregated line: an x-value (SNR and frame count) and an estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub frames: usize,
    pub estimator: String,
    /// `10 log10` of the mean of `||H_hat - H||_F^2 / ||H||_F^2`.
    pub nmse_db: f64,
    /// 95% half-width from the per-trial dB values.
    pub nmse_ci: f64,
    pub ber: Option<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub frames: usize,
    pub trial: usize,
    pub estimator: String,
    pub nmse: f64,
    pub iterations: usize,
    pub bit_errors: Option<u64>,
    pub bits: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub metric: Metric,
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn row(&self, snr_db: f64, frames: usize, estimator: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.frames == frames && r.estimator == estimator)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at sweep point `point`.
pub fn child_seed(seed: u64, point: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ point as u64) ^ trial as u64)
}

/// Channel, sensing model and observation of one trial.
pub struct TrialDraw {
    pub channel: ChannelRealization,
    pub model: SensingModel,
    pub y: CVec,
}

/// Draws the scatterers, the `M` pilot frames and the noisy observation
/// at the requested SNR.
pub fn draw_trial<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    setup: &Setup,
    snr_db: f64,
    rng: &mut R,
) -> Result<TrialDraw> {
    let scenario = Scenario {
        n_paths: cfg.paths,
        r_min: setup.path_range.0,
        r_max: setup.path_range.1,
        on_grid: cfg.on_grid,
        codebook: Some(&setup.codebook),
        ue_grid: Some(&setup.ue_grid),
    };
    let paths = draw_paths(rng, &scenario)?;
    let channel = synthesize_channel(&setup.bs, &setup.ue, &paths, cfg.distance_model)?;
    let dims = cfg.frame_dims();
    let frames = (0..cfg.frames)
        .map(|_| draw_pilot_frame(rng, dims))
        .collect::<Result<Vec<_>>>()?;
    let mut model = assemble_sensing(frames, setup.dictionary.clone(), 0.0)?;
    let sigma2 = snr_to_sigma2(snr_db, &model, model.pilot_energy(&channel))?;
    model.set_sigma2(sigma2)?;
    let y = observe(&model, &channel, rng)?;
    Ok(TrialDraw { channel, model, y })
}

pub fn nmse(estimate: &CMat, truth: &CMat) -> f64 {
    frobenius_sq(&(estimate - truth)) / frobenius_sq(truth)
}

/// Gray-mapped QPSK hard decision, inverse of [`qpsk`].
fn slice_bits(z: Complex64) -> (bool, bool) {
    (z.re < 0.0, z.im < 0.0)
}

/// Sends `symbols` random QPSK vectors through the true channel with the
/// link designed from `h_design`; returns `(bit errors, bits)`.
fn count_bit_errors<R: Rng + ?Sized>(
    h_design: &CMat,
    h_true: &CMat,
    n_s: usize,
    sigma2: f64,
    symbols: usize,
    rng: &mut R,
) -> Result<(u64, u64)> {
    let link = design_data_link(h_design, n_s)?;
    let h_eff = link.effective(h_true)?;
    let hp = h_true * &link.precoder;
    let sd = sigma2.sqrt();
    let mut errors = 0u64;
    for _ in 0..symbols {
        let bits: Vec<(bool, bool)> = (0..n_s).map(|_| (rng.random(), rng.random())).collect();
        let x = CVec::from_iterator(n_s, bits.iter().map(|&(a, b)| qpsk(a, b)));
        let noise = CVec::from_fn(h_true.nrows(), |_, _| complex_normal(rng) * sd);
        let received = link.combiner.ad_mul(&(&hp * &x + noise));
        let x_hat = mmse_detect(&received, &h_eff, sigma2)?;
        for (z, &(b0, b1)) in x_hat.iter().zip(&bits) {
            let (c0, c1) = slice_bits(*z);
            errors += u64::from(c0 != b0) + u64::from(c1 != b1);
        }
    }
    Ok((errors, (2 * n_s * symbols) as u64))
}

/// All estimator records of one trial.
fn run_trial(
    cfg: &ExperimentConfig,
    setup: &Setup,
    kinds: &[EstimatorKind],
    settings: &EstimatorSettings,
    metric: Metric,
    point: usize,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let snr_db = cfg.snr_grid_db[point];
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, point, trial));
    let draw = draw_trial(cfg, setup, snr_db, &mut rng)?;
    let h_true = &draw.channel.matrix;
    let sigma2 = draw.model.sigma2();
    let mut out = Vec::with_capacity(kinds.len() + 1);

    let record = |name: &str, nmse: f64, iterations: usize, ber: Option<(u64, u64)>| TrialRecord {
        snr_db,
        frames: cfg.frames,
        trial,
        estimator: name.to_string(),
        nmse,
        iterations,
        bit_errors: ber.map(|b| b.0),
        bits: ber.map(|b| b.1),
    };

    if metric == Metric::Ber {
        // every row sees the same data-phase randomness
        let data_seed: u64 = rng.random();
        let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
        let counts = count_bit_errors(h_true, h_true, cfg.n_s, sigma2, cfg.ber_symbols, &mut data_rng)?;
        out.push(record(GENIE, 0.0, 0, Some(counts)));
        for &kind in kinds {
            let est = run_estimator(kind, &draw.y, &draw.model, settings)?;
            let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
            let counts =
                count_bit_errors(&est.h_matrix, h_true, cfg.n_s, sigma2, cfg.ber_symbols, &mut data_rng)?;
            out.push(record(kind.name(), nmse(&est.h_matrix, h_true), est.diagnostics.iterations, Some(counts)));
        }
    } else {
        for &kind in kinds {
            let est = run_estimator(kind, &draw.y, &draw.model, settings)?;
            out.push(record(kind.name(), nmse(&est.h_matrix, h_true), est.diagnostics.iterations, None));
        }
    }
    Ok(out)
}

/// `(10 log10(mean ratio), 1.96 * sd(dB values) / sqrt(n))`.
pub fn summarize_nmse(ratios: &[f64]) -> (f64, f64) {
    let n = ratios.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = ratios.iter().sum::<f64>() / n as f64;
    let nmse_db = 10.0 * mean.log10();
    if n < 2 || ratios.iter().any(|&r| r <= 0.0) {
        return (nmse_db, 0.0);
    }
    let db: Vec<f64> = ratios.iter().map(|r| 10.0 * r.log10()).collect();
    let m = db.iter().sum::<f64>() / n as f64;
    let var = db.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (nmse_db, 1.96 * var.sqrt() / (n as f64).sqrt())
}

/// Aggregates per-trial records into rows, ordered by SNR index then by
/// the configured estimator order (genie first in BER sweeps).
pub fn aggregate(cfg: &ExperimentConfig, metric: Metric, records: &[TrialRecord]) -> Vec<SweepRow> {
    let mut names: Vec<String> = Vec::new();
    if metric == Metric::Ber {
        names.push(GENIE.to_string());
    }
    names.extend(cfg.estimators.iter().cloned());
    let mut rows = Vec::new();
    for &snr_db in &cfg.snr_grid_db {
        for name in &names {
            let subset: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.snr_db == snr_db && r.frames == cfg.frames && &r.estimator == name)
                .collect();
            if subset.is_empty() {
                continue;
            }
            let ratios: Vec<f64> = subset.iter().map(|r| r.nmse).collect();
            let (nmse_db, nmse_ci) = summarize_nmse(&ratios);
            let ber = if metric == Metric::Ber {
                let errors: u64 = subset.iter().filter_map(|r| r.bit_errors).sum();
                let bits: u64 = subset.iter().filter_map(|r| r.bits).sum();
                Some(errors as f64 / bits as f64)
            } else {
                None
            };
            rows.push(SweepRow {
                snr_db,
                frames: cfg.frames,
                estimator: name.clone(),
                nmse_db,
                nmse_ci,
                ber,
                trials: subset.len(),
            });
        }
    }
    rows
}

fn run_sweep(cfg: &ExperimentConfig, setup: &Setup, metric: Metric, exec: Execution) -> Result<SweepResult> {
    cfg.validate()?;
    let kinds = cfg.estimator_kinds()?;
    let settings = cfg.estimator_settings();
    let jobs: Vec<(usize, usize)> = (0..cfg.snr_grid_db.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let job = |&(p, t): &(usize, usize)| run_trial(cfg, setup, &kinds, &settings, metric, p, t);
    let per_job: Vec<Result<Vec<TrialRecord>>> = match exec {
        Execution::Serial => jobs.iter().map(job).collect(),
        Execution::Parallel => jobs.par_iter().map(job).collect(),
    };
    let mut records = Vec::new();
    for r in per_job {
        records.extend(r?);
    }
    Ok(SweepResult {
        metric,
        rows: aggregate(cfg, metric, &records),
        trials: records,
    })
}

pub fn run_nmse_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<SweepResult> {
    let setup = cfg.build_setup()?;
    run_sweep(cfg, &setup, Metric::Nmse, exec)
}

pub fn run_ber_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<SweepResult> {
    let setup = cfg.build_setup()?;
    run_sweep(cfg, &setup, Metric::Ber, exec)
}

/// The NMSE sweep repeated for each frame count; trial seeds do not depend
/// on `M`, so each block equals a plain NMSE sweep at that `M`.
pub fn run_frames_sweep(cfg: &ExperimentConfig, m_values: &[usize], exec: Execution) -> Result<SweepResult> {
    if m_values.is_empty() {
        return Err(Error::Config("frames sweep needs at least one M".into()));
    }
    if m_values.contains(&0) {
        return Err(Error::Config("frame counts must be positive".into()));
    }
    let setup = cfg.build_setup()?;
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for &m in m_values {
        let c = ExperimentConfig {
            frames: m,
            ..cfg.clone()
        };
        let r = run_sweep(&c, &setup, Metric::Nmse, exec)?;
        rows.extend(r.rows);
        trials.extend(r.trials);
    }
    Ok(SweepResult {
        metric: Metric::Nmse,
        rows,
        trials,
    })
}
