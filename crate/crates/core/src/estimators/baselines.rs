//! Reference estimators: least squares, OMP and M-FOCUSS.
//!
//! All three work on a whitened system. The whitening factor comes from the
//! noise *shape* `blkdiag(W^H W)` (noise covariance divided by sigma^2) so
//! that the whitened noise is white with variance sigma^2 and the solvers
//! stay defined when sigma^2 = 0.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, gemm_into, hpd_cholesky, lower_inverse, matmul, CMat, CVec, ZERO};

/// `L^-1` where `L L^H = C`.
#[derive(Debug, Clone)]
pub struct Whitener {
    linv: CMat,
}

impl Whitener {
    pub fn new(shape: &CMat) -> Result<Self> {
        let l = cholesky_lower(shape)
            .map_err(|_| Error::Decomposition("noise shape is not positive definite".into()))?;
        Ok(Self {
            linv: lower_inverse(&l)?,
        })
    }

    pub fn vector(&self, y: &CVec) -> Result<CVec> {
        if y.len() != self.linv.ncols() {
            return Err(Error::Dimension(format!(
                "whitener expects {} rows, got {}",
                self.linv.ncols(),
                y.len()
            )));
        }
        Ok(&self.linv * y)
    }

    pub fn matrix(&self, a: &CMat) -> Result<CMat> {
        if a.nrows() != self.linv.ncols() {
            return Err(Error::Dimension(format!(
                "whitener expects {} rows, got {}",
                self.linv.ncols(),
                a.nrows()
            )));
        }
        Ok(matmul(&self.linv, a))
    }
}

/// Minimum-norm least-squares solution through the SVD.
pub fn min_norm_solve(a: &CMat, b: &CVec) -> Result<CVec> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "system is {:?} but rhs has {} rows",
            a.shape(),
            b.len()
        )));
    }
    if a.ncols() == 0 {
        return Ok(CVec::zeros(0));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(CVec::zeros(a.ncols()));
    }
    let eps = smax * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    svd.solve(b, eps).map_err(|e| Error::Decomposition(e.to_string()))
}

pub fn least_squares(a: &CMat, y: &CVec, whitener: &Whitener) -> Result<CVec> {
    min_norm_solve(&whitener.matrix(a)?, &whitener.vector(y)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpOptions {
    pub max_atoms: usize,
    /// Stop when `||r|| <= residual_tol * ||y||` (whitened norms).
    pub residual_tol: f64,
}

impl OmpOptions {
    /// Defaults for a scene with `n_paths` propagation paths.
    pub fn for_paths(n_paths: usize) -> Self {
        Self {
            max_atoms: 2 * n_paths.max(1),
            residual_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpFit {
    pub coefficients: CVec,
    /// Atoms in selection order.
    pub support: Vec<usize>,
    /// Residual norm after 0, 1, ... selected atoms.
    pub residual_trace: Vec<f64>,
}

/// Orthogonal matching pursuit on an already-whitened system.
pub fn omp(a: &CMat, y: &CVec, opts: &OmpOptions) -> Result<OmpFit> {
    if a.nrows() != y.len() {
        return Err(Error::Dimension(format!("A is {:?}, y has {}", a.shape(), y.len())));
    }
    let n = a.ncols();
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let y_norm = y.norm();
    let mut support: Vec<usize> = Vec::new();
    let mut coef_s = CVec::zeros(0);
    let mut r = y.clone();
    let mut trace = vec![r.norm()];
    let limit = opts.max_atoms.min(n);

    while support.len() < limit && r.norm() > opts.residual_tol * y_norm {
        let corr = a.ad_mul(&r);
        let mut best = None;
        let mut best_score = 0.0;
        for i in 0..n {
            if norms[i] == 0.0 || support.contains(&i) {
                continue;
            }
            let score = corr[i].norm() / norms[i];
            if score > best_score {
                best_score = score;
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        support.push(i);
        let mut a_s = CMat::zeros(a.nrows(), support.len());
        for (c, &j) in support.iter().enumerate() {
            a_s.column_mut(c).copy_from(&a.column(j));
        }
        coef_s = min_norm_solve(&a_s, y)?;
        r = y - &a_s * &coef_s;
        trace.push(r.norm());
    }
    let mut coefficients = CVec::zeros(n);
    for (c, &j) in support.iter().enumerate() {
        coefficients[j] = coef_s[c];
    }
    Ok(OmpFit {
        coefficients,
        support,
        residual_trace: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocussOptions {
    /// Diversity exponent in (0, 1].
    pub p: f64,
    /// Regularization; `None` uses the noise variance.
    pub reg_lambda: Option<f64>,
    pub max_iter: usize,
    /// Relative change `||h_k+1 - h_k|| / ||h_k||` that ends the iteration.
    pub tol: f64,
    /// Entries below `weight_floor * max|h|` get zero weight and stay zero.
    pub weight_floor: f64,
}

impl Default for FocussOptions {
    fn default() -> Self {
        Self {
            p: 0.8,
            reg_lambda: None,
            max_iter: 100,
            tol: 1e-4,
            weight_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocussFit {
    pub coefficients: CVec,
    pub iterations: usize,
    pub converged: bool,
    /// `||y - A h||^2 + (2 lambda / p) sum |h_i|^p` after each update,
    /// starting with the initial point.
    pub objective_trace: Vec<f64>,
}

pub fn focuss_objective(a: &CMat, y: &CVec, h: &CVec, lambda: f64, p: f64) -> f64 {
    let r = y - a * h;
    r.norm_squared() + 2.0 * lambda / p * h.iter().map(|z| z.norm().powf(p)).sum::<f64>()
}

/// Regularized FOCUSS on an already-whitened system.
///
/// Each update minimizes a quadratic majorizer of the objective, so the
/// objective trace is non-increasing.
pub fn mfocuss(a: &CMat, y: &CVec, lambda: f64, opts: &FocussOptions) -> Result<FocussFit> {
    if a.nrows() != y.len() {
        return Err(Error::Dimension(format!("A is {:?}, y has {}", a.shape(), y.len())));
    }
    if !(opts.p > 0.0 && opts.p <= 1.0) || !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!(
            "need 0 < p <= 1 and lambda >= 0, got p = {} and lambda = {lambda}",
            opts.p
        )));
    }
    let m = a.nrows();
    let n = a.ncols();
    let mut h = CVec::from_element(n, Complex64::new(1.0, 0.0));
    let mut trace = vec![focuss_objective(a, y, &h, lambda, opts.p)];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let hmax = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if hmax == 0.0 {
            converged = true;
            break;
        }
        let floor = opts.weight_floor * hmax;
        let active: Vec<usize> = (0..n).filter(|&i| h[i].norm() > floor).collect();
        let w: Vec<f64> = active.iter().map(|&i| h[i].norm().powf(1.0 - opts.p / 2.0)).collect();
        let mut aw = CMat::zeros(m, active.len());
        for (c, &i) in active.iter().enumerate() {
            let mut col = aw.column_mut(c);
            col.copy_from(&a.column(i));
            col *= Complex64::new(w[c], 0.0);
        }
        let mut g = CMat::identity(m, m) * Complex64::new(lambda, 0.0);
        gemm_into(Complex64::new(1.0, 0.0), &aw, &aw.adjoint(), Complex64::new(1.0, 0.0), &mut g);
        let g = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
        let t = match hpd_cholesky(&g) {
            Ok(c) => c.solve(y),
            Err(_) => min_norm_solve(&g, y)?,
        };
        let q = aw.ad_mul(&t);
        let mut next = CVec::from_element(n, ZERO);
        for (c, &i) in active.iter().enumerate() {
            next[i] = q[c] * w[c];
        }
        let rel = (&next - &h).norm() / h.norm();
        h = next;
        trace.push(focuss_objective(a, y, &h, lambda, opts.p));
        if rel <= opts.tol {
            converged = true;
            break;
        }
    }
    Ok(FocussFit {
        coefficients: h,
        iterations,
        converged,
        objective_trace: trace,
    })
}
