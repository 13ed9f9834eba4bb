//! Channel estimators operating on a [`SensingModel`].
//!
//! Ring Bayes and the sparse baselines recover the beamspace vector `h_b`
//! and map it back through the dictionary; least squares works directly on
//! the element-domain channel.

pub mod baselines;
pub mod link;
pub mod sbl;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{unvectorize, CMat, CVec};
use crate::sensing::SensingModel;

pub use baselines::{FocussOptions, OmpOptions, Whitener};
pub use link::{design_data_link, mmse_detect, DataLink};
pub use sbl::{SblOptions, SblState};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// `||y - Omega_p h_hat||` in the unwhitened measurement domain.
    pub residual_norm: f64,
    pub log_likelihood_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Selected beamspace atoms, where the estimator has a support notion.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// Beamspace estimate; `None` for element-domain estimators.
    pub h_b_hat: Option<CVec>,
    /// `vec(H_hat)`.
    pub h_hat: CVec,
    /// `N_R x N_T`.
    pub h_matrix: CMat,
    pub diagnostics: Diagnostics,
    pub sbl: Option<SblState>,
}

fn from_element(model: &SensingModel, y: &CVec, h_hat: CVec, diagnostics: Diagnostics) -> Result<EstimateResult> {
    let h_matrix = unvectorize(&h_hat, model.n_r(), model.n_t())?;
    let residual_norm = (y - model.omega_stacked() * &h_hat).norm();
    Ok(EstimateResult {
        h_b_hat: None,
        h_hat,
        h_matrix,
        diagnostics: Diagnostics {
            residual_norm,
            ..diagnostics
        },
        sbl: None,
    })
}

fn from_beamspace(
    model: &SensingModel,
    y: &CVec,
    h_b: CVec,
    diagnostics: Diagnostics,
) -> Result<EstimateResult> {
    let h_hat = model.dictionary().matrix() * &h_b;
    let mut out = from_element(model, y, h_hat, diagnostics)?;
    out.h_b_hat = Some(h_b);
    Ok(out)
}

fn check_measurements(y: &CVec, model: &SensingModel) -> Result<()> {
    if y.len() != model.n_measurements() {
        return Err(Error::Dimension(format!(
            "observation has {} entries, model expects {}",
            y.len(),
            model.n_measurements()
        )));
    }
    Ok(())
}

pub fn ring_bayes(y: &CVec, model: &SensingModel, opts: &SblOptions) -> Result<EstimateResult> {
    check_measurements(y, model)?;
    let fit = sbl::sparse_bayes(y, model.omega_beamspace(), model.noise_cov(), opts)?;
    let diagnostics = Diagnostics {
        iterations: fit.state.iteration,
        log_likelihood_trace: fit.log_likelihood_trace,
        converged: fit.state.converged,
        support: (0..fit.state.gamma.len()).filter(|&i| fit.state.gamma[i] > 0.0).collect(),
        ..Default::default()
    };
    let mut out = from_beamspace(model, y, fit.state.mu.clone(), diagnostics)?;
    out.sbl = Some(fit.state);
    Ok(out)
}

pub fn ls_estimate(y: &CVec, model: &SensingModel) -> Result<EstimateResult> {
    check_measurements(y, model)?;
    let whitener = Whitener::new(model.noise_shape())?;
    let h = baselines::least_squares(model.omega_stacked(), y, &whitener)?;
    from_element(
        model,
        y,
        h,
        Diagnostics {
            iterations: 1,
            converged: true,
            ..Default::default()
        },
    )
}

pub fn omp_estimate(y: &CVec, model: &SensingModel, opts: &OmpOptions) -> Result<EstimateResult> {
    check_measurements(y, model)?;
    if opts.max_atoms == 0 {
        return Err(Error::Config("OMP needs max_atoms >= 1".into()));
    }
    let whitener = Whitener::new(model.noise_shape())?;
    let a = whitener.matrix(model.omega_beamspace())?;
    let fit = baselines::omp(&a, &whitener.vector(y)?, opts)?;
    let diagnostics = Diagnostics {
        iterations: fit.support.len(),
        objective_trace: fit.residual_trace,
        converged: true,
        support: fit.support,
        ..Default::default()
    };
    from_beamspace(model, y, fit.coefficients, diagnostics)
}

pub fn mfocuss_estimate(y: &CVec, model: &SensingModel, opts: &FocussOptions) -> Result<EstimateResult> {
    check_measurements(y, model)?;
    let whitener = Whitener::new(model.noise_shape())?;
    let a = whitener.matrix(model.omega_beamspace())?;
    let lambda = opts.reg_lambda.unwrap_or(model.sigma2());
    let fit = baselines::mfocuss(&a, &whitener.vector(y)?, lambda, opts)?;
    let diagnostics = Diagnostics {
        iterations: fit.iterations,
        objective_trace: fit.objective_trace,
        converged: fit.converged,
        ..Default::default()
    };
    from_beamspace(model, y, fit.coefficients, diagnostics)
}

/// `H_hat = 0`; the NMSE reference point.
pub fn zero_estimate(y: &CVec, model: &SensingModel) -> Result<EstimateResult> {
    check_measurements(y, model)?;
    let n = model.n_r() * model.n_t();
    from_element(model, y, CVec::zeros(n), Diagnostics { converged: true, ..Default::default() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    RingBayes,
    Omp,
    Mfocuss,
    Ls,
    Zero,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::RingBayes,
        EstimatorKind::Omp,
        EstimatorKind::Mfocuss,
        EstimatorKind::Ls,
        EstimatorKind::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::RingBayes => "ring_bayes",
            EstimatorKind::Omp => "omp",
            EstimatorKind::Mfocuss => "mfocuss",
            EstimatorKind::Ls => "ls",
            EstimatorKind::Zero => "zero",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown estimator {s:?}; expected one of ring_bayes, omp, mfocuss, ls, zero"
                ))
            })
    }
}

/// Options for every estimator, so callers can dispatch by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub sbl: SblOptions,
    pub omp: OmpOptions,
    pub focuss: FocussOptions,
}

impl EstimatorSettings {
    pub fn for_paths(n_paths: usize) -> Self {
        Self {
            sbl: SblOptions::default(),
            omp: OmpOptions::for_paths(n_paths),
            focuss: FocussOptions::default(),
        }
    }
}

pub fn run_estimator(
    kind: EstimatorKind,
    y: &CVec,
    model: &SensingModel,
    settings: &EstimatorSettings,
) -> Result<EstimateResult> {
    match kind {
        EstimatorKind::RingBayes => ring_bayes(y, model, &settings.sbl),
        EstimatorKind::Omp => omp_estimate(y, model, &settings.omp),
        EstimatorKind::Mfocuss => mfocuss_estimate(y, model, &settings.focuss),
        EstimatorKind::Ls => ls_estimate(y, model),
        EstimatorKind::Zero => zero_estimate(y, model),
    }
}
