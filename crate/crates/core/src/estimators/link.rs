//! Data-phase processing with an estimated channel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hpd_cholesky, CMat, CVec};

use super::baselines::min_norm_solve;

/// Linear MMSE symbol estimate `(H^H H + sigma^2 I)^-1 H^H y`.
pub fn mmse_detect(y: &CVec, h_eff: &CMat, sigma2: f64) -> Result<CVec> {
    if h_eff.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "effective channel is {:?}, y has {} entries",
            h_eff.shape(),
            y.len()
        )));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("noise variance must be >= 0, got {sigma2}")));
    }
    let n = h_eff.ncols();
    let gram = h_eff.adjoint() * h_eff + CMat::identity(n, n) * Complex64::new(sigma2, 0.0);
    let rhs = h_eff.ad_mul(y);
    match hpd_cholesky(&gram) {
        Ok(c) => Ok(c.solve(&rhs)),
        Err(_) => min_norm_solve(&gram, &rhs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataLink {
    /// `N_T x n_s`, orthonormal columns.
    #[serde(with = "crate::linalg::serde_complex::matrix")]
    pub precoder: CMat,
    /// `N_R x n_s`, orthonormal columns.
    #[serde(with = "crate::linalg::serde_complex::matrix")]
    pub combiner: CMat,
}

impl DataLink {
    /// `combiner^H H precoder`.
    pub fn effective(&self, h: &CMat) -> Result<CMat> {
        if h.nrows() != self.combiner.nrows() || h.ncols() != self.precoder.nrows() {
            return Err(Error::Dimension(format!(
                "channel is {:?}, link expects {}x{}",
                h.shape(),
                self.combiner.nrows(),
                self.precoder.nrows()
            )));
        }
        Ok(self.combiner.adjoint() * h * &self.precoder)
    }
}

/// Fully digital SVD beamforming: the top `n_s` right and left singular
/// vectors of the channel estimate.
pub fn design_data_link(h_hat: &CMat, n_s: usize) -> Result<DataLink> {
    let (n_r, n_t) = h_hat.shape();
    if n_s == 0 || n_s > n_r.min(n_t) {
        return Err(Error::Dimension(format!(
            "stream count {n_s} must be in 1..={}",
            n_r.min(n_t)
        )));
    }
    let svd = nalgebra::SVD::new(h_hat.clone(), true, true);
    let u = svd.u.ok_or_else(|| Error::Decomposition("SVD did not return U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Decomposition("SVD did not return V^H".into()))?;
    Ok(DataLink {
        precoder: v_t.rows(0, n_s).adjoint(),
        combiner: u.columns(0, n_s).into_owned(),
    })
}
