//! Shift-operator estimation: the regression estimate, the cost functional,
//! the SVD-stabilized pencil and its eigenbasis projection, plus the AR and
//! principal-component baselines.

use log::warn;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::embedding::{
    gap_order, information_matrix, lag_covariances, trajectory_matrices, CovarianceTriple,
    EmbeddingConfig, TrajectoryPair, RANK_TOL,
};
use crate::error::{NhssaError, Result};
use crate::linalg::{self, ThinSvd};
use crate::scalar::{cabs, carg, cfinite, creal, frob2, CMatrix, Real};
use crate::signal::ComplexSeries;

/// Condition number above which a covariance counts as singular.
fn cond_limit<T: Real>() -> T {
    T::one() / T::eps().powf(T::lit(0.75))
}

fn condition<T: Real>(a: &CMatrix<T>) -> Result<T> {
    let sv = linalg::singular_values(a)?;
    let (hi, lo) = (sv[0], sv[sv.len() - 1]);
    if hi <= T::zero() || lo <= hi * T::eps() {
        return Ok(T::max_value().unwrap());
    }
    Ok(hi / lo)
}

/// `Omega = G1 G0^{-1}`, obtained from `G0 Omega* = G1*` (G0 is Hermitian).
pub fn regression_estimator<T: Real>(cov: &CovarianceTriple<T>) -> Result<CMatrix<T>> {
    let cond = condition(&cov.g0)?;
    if cond > cond_limit::<T>() {
        return Err(NhssaError::SingularCovariance {
            cond: cond.as_f64(),
        });
    }
    let x = linalg::solve(&cov.g0, &cov.g1.adjoint()).ok_or(NhssaError::SingularCovariance {
        cond: f64::INFINITY,
    })?;
    Ok(x.adjoint())
}

/// `J(A) = (1/L) sum_k |Y_{k+1} - A Y_k|^2`
pub fn cost_j<T: Real>(a: &CMatrix<T>, tp: &TrajectoryPair<T>) -> Result<T> {
    if a.shape() != (tp.x0.nrows(), tp.x0.nrows()) {
        return Err(NhssaError::LengthMismatch {
            left: a.nrows(),
            right: tp.x0.nrows(),
        });
    }
    let e = &tp.x1 - a * &tp.x0;
    Ok(frob2(&e) / T::from_usize_lossy(tp.ncols()))
}

/// `trace(G2 - G1 G0^{-1} G1*)`, the value of `J` at the regression estimate.
pub fn cost_j_min<T: Real>(cov: &CovarianceTriple<T>) -> Result<T> {
    let x = linalg::solve(&cov.g0, &cov.g1.adjoint()).ok_or(NhssaError::SingularCovariance {
        cond: f64::INFINITY,
    })?;
    Ok((&cov.g2 - &cov.g1 * x).trace().re)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompanionFit<T: Real> {
    /// `a_1..a_p` in `f(k+1) = a_1 f(k) + ... + a_p f(k-p+1) + e(k+1)`.
    pub coeffs: Vec<Complex<T>>,
    /// Companion eigenvalues, modulus descending.
    pub eigvals: Vec<Complex<T>>,
}

/// Least-squares AR(p) fit through the `p`-dimensional Hankel embedding.
pub fn companion_ar_estimator<T: Real>(f: &ComplexSeries<T>, p: usize) -> Result<CompanionFit<T>> {
    if p == 0 {
        return Err(NhssaError::InvalidInput("AR order must be positive".into()));
    }
    if f.len() < p + 2 {
        return Err(NhssaError::SeriesTooShort {
            d: p,
            mbar: 1,
            actual: f.len(),
            required: p + 2,
        });
    }
    let (g0, g1) = if p == 1 {
        let s = f.samples();
        let l = T::from_usize_lossy(s.len() - 1);
        let g0: Complex<T> = s[..s.len() - 1]
            .iter()
            .map(|z| z * z.conj())
            .sum::<Complex<T>>()
            / l;
        let g1: Complex<T> = s.windows(2).map(|w| w[1] * w[0].conj()).sum::<Complex<T>>() / l;
        (
            CMatrix::<T>::from_element(1, 1, g0),
            CMatrix::<T>::from_element(1, 1, g1),
        )
    } else {
        let tp = trajectory_matrices(f, &EmbeddingConfig::new(p, 1)?)?;
        let c = lag_covariances(&tp);
        (c.g0, c.g1)
    };
    if condition(&g0)? > cond_limit::<T>() {
        return Err(NhssaError::RankDeficient { order: p });
    }
    companion_from_covariances(&g0, &g1)
}

/// AR coefficients from lag covariances of the `p`-dimensional Hankel embedding.
///
/// The last row of `G1 G0^+` holds `(a_p, ..., a_1)`. The pseudo-inverse is
/// minimum-norm so a rank-deficient `G0` still yields the limiting solution.
pub fn companion_from_covariances<T: Real>(
    g0: &CMatrix<T>,
    g1: &CMatrix<T>,
) -> Result<CompanionFit<T>> {
    let p = g0.nrows();
    if !g0.is_square() || g1.shape() != g0.shape() || p == 0 {
        return Err(NhssaError::InvalidInput(
            "covariances must be square and equal-sized".into(),
        ));
    }
    // Omega* = G0^+ G1* ; last row of Omega = conj of last column of Omega*.
    let omega_h = linalg::lstsq_min_norm(g0, &g1.adjoint(), T::eps().sqrt())?;
    let coeffs: Vec<Complex<T>> = (0..p).map(|i| omega_h[(p - 1 - i, p - 1)].conj()).collect();
    let mut comp = CMatrix::<T>::zeros(p, p);
    for (j, a) in coeffs.iter().enumerate() {
        comp[(0, j)] = *a;
    }
    for i in 1..p {
        comp[(i, i - 1)] = creal(T::one());
    }
    let (mut eigvals, _) = linalg::eig(&comp)?;
    eigvals.sort_by(|a, b| {
        cabs(*b)
            .partial_cmp(&cabs(*a))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(CompanionFit { coeffs, eigvals })
}

/// `sum f(k+1) conj f(k) / sum |f(k)|^2`
pub fn ar1_eigenvalue<T: Real>(f: &ComplexSeries<T>) -> Result<Complex<T>> {
    if f.len() < 3 {
        return Err(NhssaError::SeriesTooShort {
            d: 1,
            mbar: 1,
            actual: f.len(),
            required: 3,
        });
    }
    let s = f.samples();
    let den: T = s[..s.len() - 1]
        .iter()
        .map(|z| z.norm_sqr())
        .fold(T::zero(), |a, b| a + b);
    if den <= T::zero() {
        return Err(NhssaError::InvalidInput("zero series".into()));
    }
    let num: Complex<T> = s.windows(2).map(|w| w[1] * w[0].conj()).sum();
    Ok(num / creal(den))
}

/// `Im ln lambda` of the first-order regression, in `(-pi, pi]`.
pub fn ar1_frequency<T: Real>(f: &ComplexSeries<T>) -> Result<T> {
    let lam = ar1_eigenvalue(f)?;
    if cabs(lam) <= T::zero() {
        return Err(NhssaError::InvalidInput(
            "lag-one correlation vanishes".into(),
        ));
    }
    Ok(carg(lam))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum RankPolicy {
    Fixed {
        rank: usize,
    },
    /// Largest relative gap in `D0^2`; falls back to the numerical rank.
    Gap {
        min_ratio: f64,
    },
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Gap { min_ratio: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct PencilDecomposition<T: Real> {
    pub u0: CMatrix<T>,
    pub d0: Vec<T>,
    pub w0: CMatrix<T>,
    pub u1: CMatrix<T>,
    pub d1: Vec<T>,
    pub w1: CMatrix<T>,
    pub q: CMatrix<T>,
    pub r: CMatrix<T>,
    /// Modulus descending.
    pub eigvals: Vec<Complex<T>>,
    pub phi: CMatrix<T>,
    /// `U0 D0 Phi`
    pub vhat: CMatrix<T>,
    pub rank: usize,
    /// Two eigenvalues closer than `1e-8 * max |lambda|`.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

impl<T: Real> PencilDecomposition<T> {
    pub fn rank(&self) -> usize {
        self.rank
    }
}

fn truncate<T: Real>(svd: &ThinSvd<T>, r: usize) -> (CMatrix<T>, Vec<T>, CMatrix<T>) {
    (
        svd.u.columns(0, r).into_owned(),
        svd.s[..r].to_vec(),
        svd.v.columns(0, r).into_owned(),
    )
}

pub fn svd_pencil<T: Real>(
    tp: &TrajectoryPair<T>,
    policy: RankPolicy,
) -> Result<PencilDecomposition<T>> {
    let (d, l) = tp.x0.shape();
    let s0 = linalg::thin_svd(&tp.x0)?;
    let s1 = linalg::thin_svd(&tp.x1)?;
    let tol = T::lit(RANK_TOL).max(T::eps() * T::lit(10.0));
    let num0 = s0.rank_cutoff(tol);
    let num1 = s1.rank_cutoff(tol);
    let requested = match policy {
        RankPolicy::Fixed { rank } => {
            if rank == 0 || rank > d.min(l) {
                return Err(NhssaError::InvalidInput(format!(
                    "retained rank {rank} outside 1..={}",
                    d.min(l)
                )));
            }
            rank
        }
        RankPolicy::Gap { min_ratio } => {
            let sq: Vec<f64> = s0.s.iter().map(|v| v.as_f64().powi(2)).collect();
            match gap_order(&sq, min_ratio) {
                0 => num0,
                r => r,
            }
        }
    };
    let mut warnings = Vec::new();
    let r = requested.min(num0).min(num1);
    if r < requested {
        let msg =
            format!("retained rank reduced from {requested} to {r}: vanishing singular values");
        warn!("{msg}");
        warnings.push(msg);
    }
    if r == 0 {
        return Err(NhssaError::SingularPencil(
            "trajectory matrices are numerically zero".into(),
        ));
    }
    let (u0, d0, w0) = truncate(&s0, r);
    let (u1, d1, w1) = truncate(&s1, r);

    let q = w1.adjoint() * &w0;
    let mut r_mat = u1.adjoint() * &u0;
    for i in 0..r {
        for j in 0..r {
            r_mat[(i, j)] = r_mat[(i, j)] * creal(d0[j] / d1[i]);
        }
    }
    let (eigvals, phi) = generalized_eig(&q, &r_mat)?;
    let mut vhat = u0.clone();
    for j in 0..r {
        let dj = creal(d0[j]);
        vhat.row_iter_mut().for_each(|mut row| row[j] = row[j] * dj);
    }
    let vhat = vhat * &phi;
    let degenerate = is_degenerate(&eigvals);
    if degenerate {
        let msg = "repeated generalized eigenvalues; Z rows may mix".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(PencilDecomposition {
        u0,
        d0,
        w0,
        u1,
        d1,
        w1,
        q,
        r: r_mat,
        eigvals,
        phi,
        vhat,
        rank: r,
        degenerate,
        warnings,
    })
}

fn is_degenerate<T: Real>(ev: &[Complex<T>]) -> bool {
    let top = ev.iter().map(|z| cabs(*z)).fold(T::zero(), |a, b| a.max(b));
    let tol = top * T::lit(1e-8);
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            if cabs(ev[i] - ev[j]) < tol {
                return true;
            }
        }
    }
    false
}

/// Solves `Q Phi = R Phi Lambda` with the QZ algorithm.
///
/// Eigenvalues are sorted by modulus descending, ties by argument.
pub fn generalized_eig<T: Real>(
    q: &CMatrix<T>,
    r: &CMatrix<T>,
) -> Result<(Vec<Complex<T>>, CMatrix<T>)> {
    let n = q.nrows();
    if !q.is_square() || r.shape() != q.shape() {
        return Err(NhssaError::InvalidInput(
            "pencil matrices must be square and equal-sized".into(),
        ));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::<T>::zeros(0, 0)));
    }
    let mut stacked = CMatrix::<T>::zeros(2 * n, n);
    stacked.rows_mut(0, n).copy_from(q);
    stacked.rows_mut(n, n).copy_from(r);
    let sv = linalg::singular_values(&stacked)?;
    let tol = T::lit(1e-12).max(T::eps() * T::lit(10.0));
    if sv[0] <= T::zero() || sv[n - 1] <= sv[0] * tol {
        return Err(NhssaError::SingularPencil(
            "Q and R share a null direction".into(),
        ));
    }
    let (pairs, vecs) = linalg::generalized_eig(q, r)?;
    let scale = sv[0];
    let mut vals = Vec::with_capacity(n);
    for (alpha, beta) in pairs {
        if cabs(beta) <= tol * scale * T::eps().sqrt() || cabs(beta) <= tol * cabs(alpha) {
            return Err(NhssaError::SingularPencil(
                "infinite generalized eigenvalue".into(),
            ));
        }
        let lam = alpha / beta;
        if !cfinite(lam) {
            return Err(NhssaError::SingularPencil(
                "non-finite generalized eigenvalue".into(),
            ));
        }
        vals.push(lam);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        cabs(vals[b])
            .partial_cmp(&cabs(vals[a]))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                carg(vals[a])
                    .partial_cmp(&carg(vals[b]))
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    let phi = CMatrix::<T>::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    let vals = order.iter().map(|&j| vals[j]).collect();
    Ok((vals, phi))
}

#[derive(Debug, Clone)]
pub struct ZSequences<T: Real> {
    /// Row `j` is component `j` over `k = 0..K-1`.
    pub z: CMatrix<T>,
    pub eigvals: Vec<Complex<T>>,
}

/// `Z[:, k] = Phi^{-1} D0^{-1} U0* Y_k` for every information vector.
pub fn z_sequences<T: Real>(pd: &PencilDecomposition<T>, ys: &CMatrix<T>) -> Result<ZSequences<T>> {
    if ys.nrows() != pd.u0.nrows() {
        return Err(NhssaError::LengthMismatch {
            left: ys.nrows(),
            right: pd.u0.nrows(),
        });
    }
    let mut b = pd.u0.adjoint() * ys;
    for (i, mut row) in b.row_iter_mut().enumerate() {
        let inv = creal(T::one() / pd.d0[i]);
        row.iter_mut().for_each(|z| *z *= inv);
    }
    if condition(&pd.phi)? > cond_limit::<T>() {
        return Err(NhssaError::DegenerateBasis(
            "eigenvector matrix is singular".into(),
        ));
    }
    let z = linalg::solve(&pd.phi, &b)
        .ok_or_else(|| NhssaError::DegenerateBasis("eigenvector matrix is singular".into()))?;
    if z.iter().any(|v| !cfinite(*v)) {
        return Err(NhssaError::DegenerateBasis("non-finite projection".into()));
    }
    Ok(ZSequences {
        z,
        eigvals: pd.eigvals.clone(),
    })
}

/// Convenience: the full `d x K` information matrix and its projection.
pub fn project_series<T: Real>(
    pd: &PencilDecomposition<T>,
    f: &ComplexSeries<T>,
    cfg: &EmbeddingConfig,
) -> Result<ZSequences<T>> {
    z_sequences(pd, &information_matrix(f, cfg)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSplit {
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
}

/// Keeps indices with `|lambda_j| >= lambda_c`.
pub fn threshold_filter<T: Real>(eigvals: &[Complex<T>], lambda_c: f64) -> Result<ThresholdSplit> {
    if !(lambda_c > 0.0 && lambda_c < 1.5) {
        return Err(NhssaError::InvalidInput(format!(
            "threshold {lambda_c} outside (0, 1.5)"
        )));
    }
    let (kept, discarded) =
        (0..eigvals.len()).partition(|&j| cabs(eigvals[j]).as_f64() >= lambda_c);
    Ok(ThresholdSplit { kept, discarded })
}

#[derive(Debug, Clone)]
pub struct PrincipalComponents<T: Real> {
    /// Eigenvalues of `G0`, descending.
    pub eigenvalues: Vec<T>,
    pub u: CMatrix<T>,
    /// `U* X0`
    pub p: CMatrix<T>,
}

pub fn ssa_principal_components<T: Real>(tp: &TrajectoryPair<T>) -> Result<PrincipalComponents<T>> {
    let g0 = lag_covariances(tp).g0;
    let (eigenvalues, u) = linalg::hermitian_eig(&g0)?;
    let p = u.adjoint() * &tp.x0;
    Ok(PrincipalComponents { eigenvalues, u, p })
}
