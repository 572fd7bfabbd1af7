//! Thin wrappers over LAPACK routines used throughout the crate.

use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Eig, EigValsh, Eigh, Inverse, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Column-major copy of `m`. The LAPACK bindings hand row-major storage to
/// Fortran as the transpose, which conjugates Hermitian eigenvectors.
fn fortran(m: &Array2<C64>) -> Array2<C64> {
    let mut f = Array2::zeros(m.raw_dim().f());
    f.assign(m);
    f
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    fortran(m)
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Linalg(format!("Hermitian eigensolver did not converge: {e}")))
}

/// Eigenvalues only of a Hermitian matrix, ascending. Narrow-band matrices
/// (lattices with row-major site ids) go through the band solver.
pub fn eigvalsh(m: &Array2<C64>) -> Result<Array1<f64>> {
    let kd = bandwidth(m);
    if 4 * kd < m.nrows() {
        return eigvalsh_band(m, kd);
    }
    fortran(m)
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::Linalg(format!("Hermitian eigensolver did not converge: {e}")))
}

/// Largest `i - j` over nonzero lower-triangle entries.
pub fn bandwidth(m: &Array2<C64>) -> usize {
    band_limits(m).0
}

/// Lower and upper bandwidths `(kl, ku)` of the nonzero pattern.
pub fn band_limits(m: &Array2<C64>) -> (usize, usize) {
    m.indexed_iter()
        .filter(|(_, z)| **z != C64::new(0.0, 0.0))
        .fold((0, 0), |(kl, ku), ((i, j), _)| {
            if i > j {
                (kl.max(i - j), ku)
            } else {
                (kl, ku.max(j - i))
            }
        })
}

/// Solves `m x = b` for each right-hand side through a banded LU
/// factorization (partial pivoting).
pub fn solve_band(
    m: &Array2<C64>,
    kl: usize,
    ku: usize,
    rhs: &[Array1<C64>],
) -> Result<Vec<Array1<C64>>> {
    let n = m.nrows();
    let ldab = 2 * kl + ku + 1;
    // Rows kl.. hold the band: AB[kl + ku + i - j, j] = m[i, j].
    let mut ab = vec![C64::new(0.0, 0.0); ldab * n];
    for j in 0..n {
        for i in j.saturating_sub(ku)..n.min(j + kl + 1) {
            ab[kl + ku + i - j + j * ldab] = m[[i, j]];
        }
    }
    let mut b: Vec<C64> = rhs.iter().flat_map(|r| r.iter().cloned()).collect();
    let mut ipiv = vec![0i32; n];
    let (nn, ll, uu, nrhs, ld) = (
        n as i32,
        kl as i32,
        ku as i32,
        rhs.len() as i32,
        ldab as i32,
    );
    let mut info = 0i32;
    // SAFETY: ab is ldab x n and b is n x nrhs, both column-major, as zgbsv requires.
    unsafe {
        lapack_sys::zgbsv_(
            &nn,
            &ll,
            &uu,
            &nrhs,
            ab.as_mut_ptr().cast(),
            &ld,
            ipiv.as_mut_ptr(),
            b.as_mut_ptr().cast(),
            &nn,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("band LU failed, info = {info}")));
    }
    Ok(b.chunks(n.max(1))
        .take(rhs.len())
        .map(|c| Array1::from(c.to_vec()))
        .collect())
}

fn eigvalsh_band(m: &Array2<C64>, kd: usize) -> Result<Array1<f64>> {
    let n = m.nrows();
    let ldab = kd + 1;
    // Lower band storage, column-major: AB[i - j, j] = m[i, j].
    let mut ab = vec![C64::new(0.0, 0.0); ldab * n];
    for j in 0..n {
        for i in j..n.min(j + ldab) {
            ab[(i - j) + j * ldab] = m[[i, j]];
        }
    }
    let mut w = vec![0.0; n];
    let mut z = [C64::new(0.0, 0.0)];
    let mut work = vec![C64::new(0.0, 0.0); n];
    let mut rwork = vec![0.0; (3 * n).saturating_sub(2).max(1)];
    let (nn, kk, ll, one) = (n as i32, kd as i32, ldab as i32, 1i32);
    let mut info = 0i32;
    // SAFETY: buffer sizes follow the zhbev contract for jobz = 'N';
    // Complex64 and the bindgen complex type are both repr(C) {re, im}.
    unsafe {
        lapack_sys::zhbev_(
            &(b'N' as std::os::raw::c_char),
            &(b'L' as std::os::raw::c_char),
            &nn,
            &kk,
            ab.as_mut_ptr().cast(),
            &ll,
            w.as_mut_ptr(),
            z.as_mut_ptr().cast(),
            &one,
            work.as_mut_ptr().cast(),
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!(
            "band eigensolver failed, info = {info}"
        )));
    }
    Ok(Array1::from(w))
}

/// Right eigenpairs of a general complex matrix, plus the inverse of the
/// eigenvector matrix.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub values: Array1<C64>,
    pub vectors: Array2<C64>,
    pub inverse: Array2<C64>,
}

impl EigenSystem {
    pub fn new(m: &Array2<C64>) -> Result<Self> {
        let (values, vectors) = fortran(m)
            .eig()
            .map_err(|e| Error::Linalg(format!("general eigensolver did not converge: {e}")))?;
        let inverse = vectors
            .inv()
            .map_err(|e| Error::Linalg(format!("eigenvector matrix is singular: {e}")))?;
        Ok(EigenSystem {
            values,
            vectors,
            inverse,
        })
    }

    /// `max |V V^-1 - I|`, a cheap conditioning check.
    pub fn inversion_error(&self) -> f64 {
        let p = self.vectors.dot(&self.inverse);
        let n = p.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[[i, j]] - target).norm());
            }
        }
        worst
    }
}

pub fn norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
