//! Dense complex linear algebra helpers.
//!
//! Matrices are stored as nalgebra `DMatrix`; the SVD and eigen solvers are
//! delegated to faer. Every solve goes through a pivoted factorization and
//! nothing in this crate forms an explicit inverse.

use faer::Mat;
use num_complex::Complex;

use crate::error::{NhssaError, Result};
use crate::scalar::{cabs, czero, CMatrix, Real};

/// Thin SVD `A = U diag(s) V*` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct ThinSvd<T: Real> {
    /// rows x p
    pub u: CMatrix<T>,
    pub s: Vec<T>,
    /// cols x p (not adjointed)
    pub v: CMatrix<T>,
}

impl<T: Real> ThinSvd<T> {
    pub fn rank_cutoff(&self, rel: T) -> usize {
        let smax = self.s.first().copied().unwrap_or_else(T::zero);
        self.s.iter().filter(|&&x| x > rel * smax).count()
    }

    /// `sigma_max / sigma_min`, `+inf` when `sigma_min <= rel * sigma_max`.
    pub fn condition(&self, rel: T) -> T {
        let smax = self.s.first().copied().unwrap_or_else(T::zero);
        let smin = self.s.last().copied().unwrap_or_else(T::zero);
        if smax <= T::zero() || smin <= rel * smax {
            T::max_value().unwrap_or_else(T::one)
        } else {
            smax / smin
        }
    }
}

fn to_faer<T: Real>(a: &CMatrix<T>) -> Mat<Complex<T>> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer<T: Real>(m: faer::MatRef<'_, Complex<T>>) -> CMatrix<T> {
    CMatrix::<T>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn check_finite<T: Real>(a: &CMatrix<T>) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(NhssaError::InvalidInput("non-finite matrix entry".into()))
    }
}

pub fn thin_svd<T: Real>(a: &CMatrix<T>) -> Result<ThinSvd<T>> {
    check_finite(a)?;
    if a.is_empty() {
        return Ok(ThinSvd {
            u: CMatrix::<T>::zeros(a.nrows(), 0),
            s: Vec::new(),
            v: CMatrix::<T>::zeros(a.ncols(), 0),
        });
    }
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|_| NhssaError::NoConvergence)?;
    Ok(ThinSvd {
        u: from_faer(svd.U()),
        s: svd.S().column_vector().iter().map(|z| z.re).collect(),
        v: from_faer(svd.V()),
    })
}

pub fn singular_values<T: Real>(a: &CMatrix<T>) -> Result<Vec<T>> {
    check_finite(a)?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let s = to_faer(a)
        .singular_values()
        .map_err(|_| NhssaError::NoConvergence)?;
    Ok(s)
}

pub fn spectral_norm<T: Real>(a: &CMatrix<T>) -> Result<T> {
    Ok(singular_values(a)?.first().copied().unwrap_or_else(T::zero))
}

/// Solves `A X = B` with a fully pivoted LU factorization.
pub fn solve<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Option<CMatrix<T>> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return None;
    }
    let lu = a.clone().full_piv_lu();
    let x = lu.solve(b)?;
    x.iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
        .then_some(x)
}

/// Minimum-norm least-squares solution of `A X = B` via the SVD, discarding
/// singular values below `rcond * sigma_max`.
pub fn lstsq_min_norm<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>, rcond: T) -> Result<CMatrix<T>> {
    let svd = thin_svd(a)?;
    let r = svd.rank_cutoff(rcond);
    let mut x = CMatrix::<T>::zeros(a.ncols(), b.ncols());
    for i in 0..r {
        let ui = svd.u.column(i);
        let vi = svd.v.column(i);
        let inv = T::one() / svd.s[i];
        // coefficient row: (u_i^* B) / s_i
        let coef = ui.adjoint() * b;
        for c in 0..b.ncols() {
            let w = coef[(0, c)] * Complex::new(inv, T::zero());
            for row in 0..a.ncols() {
                x[(row, c)] += vi[row] * w;
            }
        }
    }
    Ok(x)
}

/// Eigenvalues (descending) and unitary eigenvectors of a Hermitian matrix.
pub fn hermitian_eig<T: Real>(a: &CMatrix<T>) -> Result<(Vec<T>, CMatrix<T>)> {
    check_finite(a)?;
    let n = a.nrows();
    // symmetrize to wash out rounding in the strictly lower triangle
    let h = (a + a.adjoint()).map(|z| z * Complex::new(T::lit(0.5), T::zero()));
    let eig = to_faer(&h)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| NhssaError::NoConvergence)?;
    // faer returns ascending order
    let s = eig.S().column_vector();
    let u = eig.U();
    let vals = (0..n).rev().map(|i| s[i].re).collect();
    let vecs = CMatrix::<T>::from_fn(n, n, |r, c| u[(r, n - 1 - c)]);
    Ok((vals, vecs))
}

/// Eigen-decomposition of a general complex square matrix.
///
/// Returned eigenvectors are normalized with [`normalize_columns`].
pub fn eig<T: Real>(a: &CMatrix<T>) -> Result<(Vec<Complex<T>>, CMatrix<T>)> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(NhssaError::InvalidInput(
            "eig of a non-square matrix".into(),
        ));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::<T>::zeros(0, 0)));
    }
    check_finite(a)?;
    let e = to_faer(a).eigen().map_err(|_| NhssaError::NoConvergence)?;
    let vals = e.S().column_vector().iter().copied().collect();
    let mut vecs = from_faer(e.U());
    normalize_columns(&mut vecs);
    Ok((vals, vecs))
}

/// Generalized eigen-decomposition `A V = B V diag(alpha / beta)`.
///
/// Returns the `(alpha, beta)` pairs so that infinite eigenvalues stay
/// representable, with normalized eigenvectors.
pub fn generalized_eig<T: Real>(
    a: &CMatrix<T>,
    b: &CMatrix<T>,
) -> Result<(Vec<(Complex<T>, Complex<T>)>, CMatrix<T>)> {
    let n = a.nrows();
    if !a.is_square() || b.shape() != a.shape() {
        return Err(NhssaError::InvalidInput(
            "pencil matrices must be square and equal-sized".into(),
        ));
    }
    check_finite(a)?;
    check_finite(b)?;
    if n == 0 {
        return Ok((Vec::new(), CMatrix::<T>::zeros(0, 0)));
    }
    if n == 1 {
        let one = CMatrix::<T>::from_element(1, 1, Complex::new(T::one(), T::zero()));
        return Ok((vec![(a[(0, 0)], b[(0, 0)])], one));
    }
    let (fa, fb) = (to_faer(a), to_faer(b));
    let g = fa
        .generalized_eigen(&fb)
        .map_err(|_| NhssaError::NoConvergence)?;
    let sa = g.S_a().column_vector();
    let sb = g.S_b().column_vector();
    let pairs = (0..n).map(|i| (sa[i], sb[i])).collect();
    let mut vecs = from_faer(g.U());
    normalize_columns(&mut vecs);
    Ok((pairs, vecs))
}

/// Scales every column to unit 2-norm and rotates its phase so that the first
/// entry of non-negligible modulus is real and positive.
pub fn normalize_columns<T: Real>(v: &mut CMatrix<T>) {
    for mut col in v.column_iter_mut() {
        let nrm = col.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        if nrm <= T::zero() {
            continue;
        }
        let big = col.iter().fold(T::zero(), |m, z| m.max(cabs(*z)));
        let lead = col
            .iter()
            .find(|z| cabs(**z) > T::lit(1e-8) * big)
            .copied()
            .unwrap_or_else(|| Complex::new(T::one(), T::zero()));
        let phase = lead.conj() / Complex::new(cabs(lead), T::zero());
        let scale = phase * Complex::new(T::one() / nrm, T::zero());
        for z in col.iter_mut() {
            *z *= scale;
        }
    }
}

pub fn from_real_diag<T: Real>(d: &[T]) -> CMatrix<T> {
    let n = d.len();
    CMatrix::<T>::from_fn(n, n, |i, j| {
        if i == j {
            Complex::new(d[i], T::zero())
        } else {
            czero()
        }
    })
}
