//! Trajectory matrices built from translated copies of a series, their lag
//! and cross covariances, the condition-number grid over `(d, mbar)` and
//! model-order estimation from the lag covariance spectrum.
//!
//! Index convention: a series of length `m` embedded with translations
//! `kappa_i = (i - 1) * mbar`, `i = 1..d`, yields `K = m - kappa_d`
//! information vectors `Y_0..Y_{K-1}`; the last one reads `f(m - 1)`.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NhssaError, Result};
use crate::linalg;
use crate::scalar::{CMatrix, CVector, Real};
use crate::signal::ComplexSeries;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    /// Dimension of the information vectors.
    pub d: usize,
    /// Multiplicity: spacing between consecutive translations.
    pub mbar: usize,
}

impl EmbeddingConfig {
    pub fn new(d: usize, mbar: usize) -> Result<Self> {
        if d < 2 {
            return Err(NhssaError::InvalidInput(format!(
                "d must be at least 2, got {d}"
            )));
        }
        if mbar < 1 {
            return Err(NhssaError::InvalidInput("mbar must be at least 1".into()));
        }
        Ok(Self { d, mbar })
    }

    pub fn translations(&self) -> Vec<usize> {
        (0..self.d).map(|i| i * self.mbar).collect()
    }

    /// `kappa_d = (d - 1) * mbar`
    pub fn max_translation(&self) -> usize {
        (self.d - 1) * self.mbar
    }

    /// Shortest series admitting two information vectors.
    pub fn min_len(&self) -> usize {
        self.max_translation() + 2
    }

    /// Number `K` of information vectors for a series of length `m`.
    pub fn vector_count(&self, m: usize) -> Result<usize> {
        if m < self.min_len() {
            return Err(NhssaError::SeriesTooShort {
                d: self.d,
                mbar: self.mbar,
                actual: m,
                required: self.min_len(),
            });
        }
        Ok(m - self.max_translation())
    }

    /// Every sample index is hit by some `kappa_s + k` iff `K >= mbar`.
    pub fn covers(&self, m: usize) -> bool {
        self.vector_count(m)
            .map(|k| k >= self.mbar)
            .unwrap_or(false)
    }
}

/// `Y_k[i] = f(k + kappa_{i+1})` for `k = 0..K-1`.
pub fn build_information_vectors<T: Real>(
    f: &ComplexSeries<T>,
    cfg: &EmbeddingConfig,
) -> Result<Vec<CVector<T>>> {
    let y = information_matrix(f, cfg)?;
    Ok(y.column_iter().map(|c| c.into_owned()).collect())
}

/// The `d x K` matrix `[Y_0 ... Y_{K-1}]`.
pub fn information_matrix<T: Real>(
    f: &ComplexSeries<T>,
    cfg: &EmbeddingConfig,
) -> Result<CMatrix<T>> {
    let k_count = cfg.vector_count(f.len())?;
    let s = f.samples();
    Ok(CMatrix::<T>::from_fn(cfg.d, k_count, |i, k| {
        s[k + i * cfg.mbar]
    }))
}

#[derive(Debug, Clone)]
pub struct TrajectoryPair<T: Real> {
    /// Columns `Y_0..Y_{K-2}`.
    pub x0: CMatrix<T>,
    /// Columns `Y_1..Y_{K-1}`.
    pub x1: CMatrix<T>,
    pub config: EmbeddingConfig,
}

impl<T: Real> TrajectoryPair<T> {
    /// Column count `L = K - 1`.
    pub fn ncols(&self) -> usize {
        self.x0.ncols()
    }

    /// All `K` information vectors as a `d x K` matrix.
    pub fn information(&self) -> CMatrix<T> {
        let (d, l) = self.x0.shape();
        CMatrix::<T>::from_fn(d, l + 1, |i, k| {
            if k < l {
                self.x0[(i, k)]
            } else {
                self.x1[(i, l - 1)]
            }
        })
    }
}

pub fn trajectory_matrices<T: Real>(
    f: &ComplexSeries<T>,
    cfg: &EmbeddingConfig,
) -> Result<TrajectoryPair<T>> {
    let y = information_matrix(f, cfg)?;
    let l = y.ncols() - 1;
    Ok(TrajectoryPair {
        x0: y.columns(0, l).into_owned(),
        x1: y.columns(1, l).into_owned(),
        config: *cfg,
    })
}

#[derive(Debug, Clone)]
pub struct CovarianceTriple<T: Real> {
    pub g0: CMatrix<T>,
    pub g1: CMatrix<T>,
    pub g2: CMatrix<T>,
}

/// `G0 = X0 X0* / L`, `G1 = X1 X0* / L`, `G2 = X1 X1* / L`.
pub fn lag_covariances<T: Real>(tp: &TrajectoryPair<T>) -> CovarianceTriple<T> {
    let inv_l = num_complex::Complex::new(T::one() / T::from_usize_lossy(tp.ncols()), T::zero());
    let x0h = tp.x0.adjoint();
    CovarianceTriple {
        g0: (&tp.x0 * &x0h) * inv_l,
        g1: (&tp.x1 * &x0h) * inv_l,
        g2: (&tp.x1 * tp.x1.adjoint()) * inv_l,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionGrid {
    pub d: Vec<usize>,
    pub mbar: Vec<usize>,
    /// `cond(X0)`, row per `d`, column per `mbar`; `None` marks an infeasible
    /// or numerically rank-deficient cell.
    pub cond: Vec<Vec<Option<f64>>>,
    /// `cond(G0) = cond(X0)^2`
    pub cond_gamma0: Vec<Vec<Option<f64>>>,
    pub argmin: GridCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub d: usize,
    pub mbar: usize,
}

impl ConditionGrid {
    pub fn cell(&self, d: usize, mbar: usize) -> Option<f64> {
        let i = self.d.iter().position(|&x| x == d)?;
        let j = self.mbar.iter().position(|&x| x == mbar)?;
        self.cond[i][j]
    }

    pub fn min_cond(&self) -> f64 {
        self.cell(self.argmin.d, self.argmin.mbar)
            .unwrap_or(f64::INFINITY)
    }

    /// Matrix form for plotting: header row of `mbar`, one row per `d`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d");
        for m in &self.mbar {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
        for (i, d) in self.d.iter().enumerate() {
            out.push_str(&d.to_string());
            for c in &self.cond[i] {
                match c {
                    Some(v) => out.push_str(&format!(",{v:e}")),
                    None => out.push_str(",inf"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn cell_condition<T: Real>(f: &ComplexSeries<T>, d: usize, mbar: usize) -> Option<f64> {
    let cfg = EmbeddingConfig::new(d, mbar).ok()?;
    let k = cfg.vector_count(f.len()).ok()?;
    if k < d + 1 {
        return None;
    }
    let tp = trajectory_matrices(f, &cfg).ok()?;
    let sv = linalg::singular_values(&tp.x0).ok()?;
    let smax = sv.first()?.as_f64();
    let smin = sv.last()?.as_f64();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return None;
    }
    Some(smax / smin)
}

/// Evaluates `cond(X0) = sigma_max / sigma_min` on the `(d, mbar)` grid.
///
/// Cells are independent and evaluated in parallel; the argmin breaks ties
/// toward smaller `mbar`, then larger `d`.
pub fn condition_grid_search<T: Real>(
    f: &ComplexSeries<T>,
    d_range: RangeInclusive<usize>,
    mbar_range: RangeInclusive<usize>,
) -> Result<ConditionGrid> {
    let ds: Vec<usize> = d_range.collect();
    let ms: Vec<usize> = mbar_range.collect();
    if ds.is_empty() || ms.is_empty() {
        return Err(NhssaError::InvalidInput("empty grid range".into()));
    }
    let cells: Vec<(usize, usize)> = ds
        .iter()
        .flat_map(|&d| ms.iter().map(move |&m| (d, m)))
        .collect();
    let values: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(d, m)| cell_condition(f, d, m))
        .collect();

    let mut best: Option<(f64, usize, usize)> = None;
    for (&(d, m), v) in cells.iter().zip(&values) {
        let Some(c) = *v else { continue };
        let better = match best {
            None => true,
            Some((bc, bd, bm)) => c < bc || (c == bc && (m < bm || (m == bm && d > bd))),
        };
        if better {
            best = Some((c, d, m));
        }
    }
    let (_, bd, bm) = best.ok_or(NhssaError::InfeasibleGrid)?;
    let cond: Vec<Vec<Option<f64>>> = values.chunks(ms.len()).map(|r| r.to_vec()).collect();
    let cond_gamma0 = cond
        .iter()
        .map(|r| r.iter().map(|c| c.map(|v| v * v)).collect())
        .collect();
    Ok(ConditionGrid {
        d: ds,
        mbar: ms,
        cond,
        cond_gamma0,
        argmin: GridCell { d: bd, mbar: bm },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum OrderMethod {
    /// Position of the largest ratio `lambda_k / lambda_{k+1}`; a maximal ratio
    /// below `min_ratio` means no gap and an order of zero.
    Gap { min_ratio: f64 },
    /// Count of eigenvalues above `median(lower half) * (1 + tau)`.
    Floor { tau: f64 },
}

impl Default for OrderMethod {
    fn default() -> Self {
        OrderMethod::Gap { min_ratio: 2.0 }
    }
}

/// Largest-relative-gap order of a descending non-negative sequence.
pub fn gap_order(desc: &[f64], min_ratio: f64) -> usize {
    let Some(&top) = desc.first() else { return 0 };
    if !(top > 0.0) {
        return 0;
    }
    // values below this are rounding noise of a numerically zero eigenvalue
    let floor = top * 1e-12;
    let mut best = (0.0, 0usize);
    for k in 0..desc.len().saturating_sub(1) {
        let ratio = desc[k].max(floor) / desc[k + 1].max(floor);
        if ratio > best.0 {
            best = (ratio, k + 1);
        }
    }
    if best.0 >= min_ratio {
        best.1
    } else {
        0
    }
}

/// Estimated number `2n + 1` of exponentials from the spectrum of `G0`.
pub fn estimate_model_order<T: Real>(g0: &CMatrix<T>, method: OrderMethod) -> Result<usize> {
    if g0.nrows() < 2 || !g0.is_square() {
        return Err(NhssaError::InvalidInput(
            "order estimation needs d >= 2".into(),
        ));
    }
    let (vals, _) = linalg::hermitian_eig(g0)?;
    let vals: Vec<f64> = vals.iter().map(|v| v.as_f64().max(0.0)).collect();
    Ok(match method {
        OrderMethod::Gap { min_ratio } => gap_order(&vals, min_ratio),
        OrderMethod::Floor { tau } => {
            let mut tail: Vec<f64> = vals[vals.len() / 2..].to_vec();
            tail.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = tail.len();
            let med = if n % 2 == 1 {
                tail[n / 2]
            } else {
                0.5 * (tail[n / 2 - 1] + tail[n / 2])
            };
            let thr = med * (1.0 + tau);
            vals.iter().filter(|&&v| v > thr).count()
        }
    })
}
