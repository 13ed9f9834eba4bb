//! Dense complex linear-algebra helpers shared by every module.
//!
//! Matrices are `nalgebra` column-major, so `vec(A)` is simply the backing
//! slice. Large products go through `matrixmultiply::zgemm`, which is several
//! times faster than the generic complex kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `exp(j * phase)`.
#[inline]
pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// `C = A B` through the blocked zgemm kernel.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    let mut c = CMat::zeros(a.nrows(), b.ncols());
    gemm_into(ONE, a, b, ZERO, &mut c);
    c
}

/// `C <- alpha A B + beta C`.
pub fn gemm_into(alpha: Complex64, a: &CMat, b: &CMat, beta: Complex64, c: &mut CMat) {
    let (m, k) = a.shape();
    let n = b.ncols();
    assert_eq!(b.nrows(), k);
    assert_eq!(c.shape(), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        *c *= beta;
        return;
    }
    // SAFETY: all three matrices are contiguous column-major buffers whose
    // shapes were checked above; Complex64 is repr(C) {re, im}.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            let mut block = out.view_mut((i * br, j * bc), (br, bc));
            block.zip_apply(b, |o, v| *o = s * v);
        }
    }
    out
}

/// Column-major vectorization.
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMat::from_column_slice(rows, cols, v.as_slice()))
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Cholesky factorization that rejects matrices which are not Hermitian
/// positive definite. The complex square root never fails, so the pivots
/// have to be checked after the fact.
pub fn hpd_cholesky(m: &CMat) -> Result<Cholesky<Complex64, Dyn>> {
    let not_hpd = || Error::Decomposition("matrix is not Hermitian positive definite".into());
    let c = m.clone().cholesky().ok_or_else(not_hpd)?;
    let ok = c
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-10 * d.re);
    if ok {
        Ok(c)
    } else {
        Err(not_hpd())
    }
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky_lower(m: &CMat) -> Result<CMat> {
    Ok(hpd_cholesky(m)?.unpack())
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &CMat) -> Result<CMat> {
    let n = l.nrows();
    let mut inv = CMat::identity(n, n);
    if !l.solve_lower_triangular_mut(&mut inv) {
        return Err(Error::Decomposition("singular triangular factor".into()));
    }
    Ok(inv)
}

/// `log det` of a Hermitian positive-definite matrix from its lower
/// Cholesky factor.
pub fn logdet_from_cholesky(l: &CMat) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Row-stack matrices with equal column counts.
pub fn vstack(blocks: &[CMat]) -> Result<CMat> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(Error::Dimension("vstack: column counts differ".into()));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(b);
        r += b.nrows();
    }
    Ok(out)
}

/// Serde adapters. Complex numbers are `[re, im]` pairs and matrices are
/// `{rows, cols, data}` with `data` in column-major order.
pub mod serde_complex {
    use super::{CMat, CVec};
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct MatDoc {
        rows: usize,
        cols: usize,
        data: Vec<[f64; 2]>,
    }

    fn pairs(data: &[Complex64]) -> Vec<[f64; 2]> {
        data.iter().map(|z| [z.re, z.im]).collect()
    }

    pub mod scalar {
        use super::*;

        pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
            [z.re, z.im].serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
            let [re, im] = <[f64; 2]>::deserialize(d)?;
            Ok(Complex64::new(re, im))
        }
    }

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(v: &CVec, s: S) -> Result<S::Ok, S::Error> {
            pairs(v.as_slice()).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVec, D::Error> {
            let data = Vec::<[f64; 2]>::deserialize(d)?;
            Ok(CVec::from_iterator(
                data.len(),
                data.into_iter().map(|[re, im]| Complex64::new(re, im)),
            ))
        }
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
            MatDoc {
                rows: m.nrows(),
                cols: m.ncols(),
                data: pairs(m.as_slice()),
            }
            .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
            let doc = MatDoc::deserialize(d)?;
            if doc.data.len() != doc.rows * doc.cols {
                return Err(serde::de::Error::custom(format!(
                    "matrix data has {} entries, expected {}x{}",
                    doc.data.len(),
                    doc.rows,
                    doc.cols
                )));
            }
            Ok(CMat::from_iterator(
                doc.rows,
                doc.cols,
                doc.data.into_iter().map(|[re, im]| Complex64::new(re, im)),
            ))
        }
    }
}
