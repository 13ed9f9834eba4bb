//! Expectation-maximization sparse Bayesian learning.
//!
//! Prior `h_b(i) ~ CN(0, gamma_i)`, observation `y = Omega h_b + n` with
//! `n ~ CN(0, S)`. The E-step computes the Gaussian posterior under the
//! current `Gamma`; the M-step sets `gamma_i = Sigma(i, i) + |mu(i)|^2`.
//!
//! Two equivalent E-step routes are provided. The direct route inverts
//! `Omega^H S^-1 Omega + Gamma^-1` (size = number of atoms). The Woodbury
//! route only factors `R_y = S + Omega Gamma Omega^H` (size = number of
//! measurements):
//!
//! ```text
//! mu       = Gamma Omega^H R_y^-1 y
//! Sigma_ii = gamma_i - gamma_i^2 omega_i^H R_y^-1 omega_i
//! ```
//!
//! Only the diagonal of `Sigma` is ever materialized.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_lower, gemm_into, hpd_cholesky, logdet_from_cholesky, lower_inverse, matmul, CMat, CVec, ONE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SblOptions {
    /// Stop once `||gamma^(j) - gamma^(j-1)||_2 <= epsilon`.
    pub epsilon: f64,
    pub k_max: usize,
    pub woodbury: bool,
    /// Relative pruning level: `gamma_i < prune_threshold * max(gamma)` is
    /// clamped to zero and dropped from later E-steps.
    pub prune_threshold: f64,
}

impl Default for SblOptions {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            k_max: 30,
            woodbury: true,
            prune_threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SblState {
    pub gamma: Vec<f64>,
    #[serde(with = "crate::linalg::serde_complex::vector")]
    pub mu: CVec,
    pub sigma_diag: Vec<f64>,
    pub iteration: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SblFit {
    pub state: SblState,
    /// `log p(y; Gamma)` for `Gamma^(0), Gamma^(1), ..., Gamma^(final)`.
    pub log_likelihood_trace: Vec<f64>,
}

/// Posterior moments restricted to the active atoms.
pub(crate) struct Posterior {
    pub mu: Vec<Complex64>,
    pub sigma_diag: Vec<f64>,
    pub log_likelihood: f64,
}

fn gather_columns(omega: &CMat, active: &[usize]) -> CMat {
    let m = omega.nrows();
    let mut out = CMat::zeros(m, active.len());
    for (c, &i) in active.iter().enumerate() {
        out.column_mut(c).copy_from(&omega.column(i));
    }
    out
}

/// `(log p(y), R_y^-1 y, L^-1)` for `R_y = S + Omega_a Gamma_a Omega_a^H`.
fn evidence(
    y: &CVec,
    omega_a: &CMat,
    gamma_a: &[f64],
    noise_cov: &CMat,
) -> Result<(f64, CVec, CMat)> {
    let m = y.len();
    let mut scaled = omega_a.clone();
    for (mut col, &g) in scaled.column_iter_mut().zip(gamma_a) {
        col *= Complex64::new(g, 0.0);
    }
    let mut r_y = noise_cov.clone();
    gemm_into(ONE, &scaled, &omega_a.adjoint(), ONE, &mut r_y);
    // enforce exact Hermitian symmetry before factoring
    let r_y = (&r_y + r_y.adjoint()) * Complex64::new(0.5, 0.0);
    let l = cholesky_lower(&r_y)
        .map_err(|_| Error::Decomposition("S + Omega Gamma Omega^H is not positive definite".into()))?;
    let linv = lower_inverse(&l)?;
    let w = &linv * y;
    let z = linv.adjoint() * &w;
    let quad = w.norm_squared();
    let log_likelihood = -(m as f64) * std::f64::consts::PI.ln() - logdet_from_cholesky(&l) - quad;
    Ok((log_likelihood, z, linv))
}

fn estep_woodbury(y: &CVec, omega_a: &CMat, gamma_a: &[f64], noise_cov: &CMat) -> Result<Posterior> {
    let (log_likelihood, z, linv) = evidence(y, omega_a, gamma_a, noise_cov)?;
    let u = omega_a.ad_mul(&z);
    let v = matmul(&linv, omega_a);
    let mu = u.iter().zip(gamma_a).map(|(ui, &g)| ui * g).collect();
    let sigma_diag = v
        .column_iter()
        .zip(gamma_a)
        .map(|(col, &g)| (g - g * g * col.norm_squared()).max(0.0))
        .collect();
    Ok(Posterior {
        mu,
        sigma_diag,
        log_likelihood,
    })
}

fn estep_direct(y: &CVec, omega_a: &CMat, gamma_a: &[f64], noise_cov: &CMat) -> Result<Posterior> {
    let (log_likelihood, _, _) = evidence(y, omega_a, gamma_a, noise_cov)?;
    let ls = cholesky_lower(noise_cov)
        .map_err(|_| Error::Decomposition("noise covariance S is singular".into()))?;
    let ls_inv = lower_inverse(&ls)?;
    let white = matmul(&ls_inv, omega_a);
    let white_y = &ls_inv * y;
    let mut precision = matmul(&white.adjoint(), &white);
    for (i, &g) in gamma_a.iter().enumerate() {
        precision[(i, i)] += Complex64::new(1.0 / g, 0.0);
    }
    let precision = (&precision + precision.adjoint()) * Complex64::new(0.5, 0.0);
    let chol = hpd_cholesky(&precision)
        .map_err(|_| Error::Decomposition("posterior precision is not positive definite".into()))?;
    let sigma = chol.inverse();
    let mu = &sigma * white.ad_mul(&white_y);
    Ok(Posterior {
        mu: mu.iter().copied().collect(),
        sigma_diag: (0..gamma_a.len()).map(|i| sigma[(i, i)].re.max(0.0)).collect(),
        log_likelihood,
    })
}

/// One E-step over the atoms with `gamma > 0`; returns full-length
/// `(mu, sigma_diag, log p(y; Gamma))` with zeros on inactive atoms.
pub fn posterior(
    y: &CVec,
    omega: &CMat,
    noise_cov: &CMat,
    gamma: &[f64],
    woodbury: bool,
) -> Result<(CVec, Vec<f64>, f64)> {
    check_dims(y, omega, noise_cov)?;
    if gamma.len() != omega.ncols() {
        return Err(Error::Dimension("gamma length differs from atom count".into()));
    }
    let active: Vec<usize> = (0..gamma.len()).filter(|&i| gamma[i] > 0.0).collect();
    let (mu, sd, ll) = estep(y, omega, noise_cov, gamma, &active, woodbury)?;
    Ok((mu, sd, ll))
}

fn estep(
    y: &CVec,
    omega: &CMat,
    noise_cov: &CMat,
    gamma: &[f64],
    active: &[usize],
    woodbury: bool,
) -> Result<(CVec, Vec<f64>, f64)> {
    let n = omega.ncols();
    let omega_a = gather_columns(omega, active);
    let gamma_a: Vec<f64> = active.iter().map(|&i| gamma[i]).collect();
    let post = if woodbury {
        estep_woodbury(y, &omega_a, &gamma_a, noise_cov)?
    } else {
        estep_direct(y, &omega_a, &gamma_a, noise_cov)?
    };
    let mut mu = CVec::zeros(n);
    let mut sigma_diag = vec![0.0; n];
    for (k, &i) in active.iter().enumerate() {
        mu[i] = post.mu[k];
        sigma_diag[i] = post.sigma_diag[k];
    }
    Ok((mu, sigma_diag, post.log_likelihood))
}

/// `log p(y; Gamma) = -m log(pi) - log det R_y - y^H R_y^-1 y`.
pub fn log_likelihood(y: &CVec, omega: &CMat, noise_cov: &CMat, gamma: &[f64]) -> Result<f64> {
    check_dims(y, omega, noise_cov)?;
    let active: Vec<usize> = (0..gamma.len()).filter(|&i| gamma[i] > 0.0).collect();
    let omega_a = gather_columns(omega, &active);
    let gamma_a: Vec<f64> = active.iter().map(|&i| gamma[i]).collect();
    Ok(evidence(y, &omega_a, &gamma_a, noise_cov)?.0)
}

fn check_dims(y: &CVec, omega: &CMat, noise_cov: &CMat) -> Result<()> {
    let m = y.len();
    if omega.nrows() != m || noise_cov.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "y has {m} entries, Omega is {:?}, S is {:?}",
            omega.shape(),
            noise_cov.shape()
        )));
    }
    Ok(())
}

/// Runs EM from `gamma = 1` until the hyperparameters settle or `k_max`
/// iterations have run, returning the last posterior mean as the estimate.
pub fn sparse_bayes(y: &CVec, omega: &CMat, noise_cov: &CMat, opts: &SblOptions) -> Result<SblFit> {
    check_dims(y, omega, noise_cov)?;
    if !(opts.epsilon > 0.0) || opts.k_max == 0 {
        return Err(Error::Config(format!(
            "need epsilon > 0 and k_max >= 1, got {} and {}",
            opts.epsilon, opts.k_max
        )));
    }
    let n = omega.ncols();
    let mut gamma = vec![1.0; n];
    let mut gamma_prev = gamma.clone();
    let mut active: Vec<usize> = (0..n).collect();
    let mut mu = CVec::zeros(n);
    let mut sigma_diag = vec![0.0; n];
    let mut trace = Vec::with_capacity(opts.k_max + 1);
    let mut iteration = 0;

    while iteration == 0 || (change(&gamma, &gamma_prev) > opts.epsilon && iteration < opts.k_max) {
        iteration += 1;
        let (m_j, s_j, ll) = estep(y, omega, noise_cov, &gamma, &active, opts.woodbury)?;
        trace.push(ll);
        mu = m_j;
        sigma_diag = s_j;

        gamma_prev.copy_from_slice(&gamma);
        for &i in &active {
            gamma[i] = sigma_diag[i] + mu[i].norm_sqr();
        }
        let floor = opts.prune_threshold * gamma.iter().copied().fold(0.0, f64::max);
        active.retain(|&i| {
            if gamma[i] < floor || gamma[i] == 0.0 {
                gamma[i] = 0.0;
                false
            } else {
                true
            }
        });
        if active.is_empty() {
            break;
        }
    }
    if !active.is_empty() {
        trace.push(log_likelihood(y, omega, noise_cov, &gamma)?);
    }
    let converged = change(&gamma, &gamma_prev) <= opts.epsilon;
    Ok(SblFit {
        state: SblState {
            gamma,
            mu,
            sigma_diag,
            iteration,
            converged,
        },
        log_likelihood_trace: trace,
    })
}

fn change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
