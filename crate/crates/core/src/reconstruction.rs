//! Back-mapping of Z rows to the sample domain and the signal/noise split.

use std::collections::BTreeSet;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingConfig;
use crate::error::{NhssaError, Result};
use crate::pencil::{PencilDecomposition, ZSequences};
use crate::scalar::{cabs, czero, CMatrix, Real};
use crate::signal::{norm, ComplexSeries};

/// Relative size below which the imaginary part of a real reconstruction is dropped.
pub const IMAG_DROP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Auto,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub signal_rows: BTreeSet<usize>,
    pub noise_rows: BTreeSet<usize>,
    pub provenance: Provenance,
}

impl Selection {
    /// Splits `0..rank` into the given signal rows and the rest.
    pub fn from_signal(
        rank: usize,
        signal: impl IntoIterator<Item = usize>,
        provenance: Provenance,
    ) -> Result<Self> {
        let signal_rows: BTreeSet<usize> = signal.into_iter().collect();
        if let Some(&bad) = signal_rows.iter().find(|&&j| j >= rank) {
            return Err(NhssaError::InvalidInput(format!(
                "row {bad} outside retained rank {rank}"
            )));
        }
        let noise_rows = (0..rank).filter(|j| !signal_rows.contains(j)).collect();
        Ok(Self {
            signal_rows,
            noise_rows,
            provenance,
        })
    }

    pub fn rank(&self) -> usize {
        self.signal_rows.len() + self.noise_rows.len()
    }

    /// Moves `j` to the signal or noise set.
    pub fn assign(&mut self, j: usize, signal: bool) -> Result<()> {
        if j >= self.rank() {
            return Err(NhssaError::InvalidInput(format!(
                "row {j} outside retained rank {}",
                self.rank()
            )));
        }
        if signal {
            self.noise_rows.remove(&j);
            self.signal_rows.insert(j);
        } else {
            self.signal_rows.remove(&j);
            self.noise_rows.insert(j);
        }
        Ok(())
    }
}

/// `f(t)` = mean of `col[s] * row[k]` over all `(s, k)` with `kappa_s + k = t`.
pub fn diagonal_average<T: Real>(
    col: &[Complex<T>],
    row: &[Complex<T>],
    cfg: &EmbeddingConfig,
) -> Result<Vec<Complex<T>>> {
    if col.len() != cfg.d {
        return Err(NhssaError::LengthMismatch {
            left: col.len(),
            right: cfg.d,
        });
    }
    let k = row.len();
    let m = k + cfg.max_translation();
    if !cfg.covers(m) {
        return Err(NhssaError::InvalidInput(format!(
            "{k} columns do not cover every sample for mbar = {}",
            cfg.mbar
        )));
    }
    let mut sum = vec![czero::<T>(); m];
    let mut count = vec![0usize; m];
    for (s, kappa) in cfg.translations().into_iter().enumerate() {
        for (kk, z) in row.iter().enumerate() {
            sum[kappa + kk] += col[s] * z;
            count[kappa + kk] += 1;
        }
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(v, c)| v / Complex::new(T::from_usize_lossy(c), T::zero()))
        .collect())
}

/// Back-mapped series of component `j`.
pub fn component_to_series<T: Real>(
    pd: &PencilDecomposition<T>,
    z: &ZSequences<T>,
    j: usize,
    cfg: &EmbeddingConfig,
) -> Result<ComplexSeries<T>> {
    if j >= pd.rank {
        return Err(NhssaError::InvalidInput(format!(
            "row {j} outside retained rank {}",
            pd.rank
        )));
    }
    let col: Vec<Complex<T>> = pd.vhat.column(j).iter().copied().collect();
    let row: Vec<Complex<T>> = z.z.row(j).iter().copied().collect();
    ComplexSeries::new(diagonal_average(&col, &row, cfg)?)
}

/// Every retained component, computed in parallel.
pub fn all_component_series<T: Real>(
    pd: &PencilDecomposition<T>,
    z: &ZSequences<T>,
    cfg: &EmbeddingConfig,
) -> Result<Vec<ComplexSeries<T>>> {
    (0..pd.rank)
        .into_par_iter()
        .map(|j| component_to_series(pd, z, j, cfg))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Reconstruction<T: Real> {
    pub shat: ComplexSeries<T>,
    /// `f - shat`: the noise components plus the truncation residual.
    pub what: ComplexSeries<T>,
    /// Part of `what` not explained by any retained component.
    pub residual_norm: f64,
    /// Largest imaginary part of `shat` before it was dropped (real input only).
    pub imag_residue: Option<f64>,
    pub signal_empty: bool,
}

/// Sums precomputed component series according to `sel`.
pub fn group_from_components<T: Real>(
    sel: &Selection,
    comps: &[ComplexSeries<T>],
    f: &ComplexSeries<T>,
) -> Result<Reconstruction<T>> {
    if sel.rank() != comps.len() {
        return Err(NhssaError::LengthMismatch {
            left: sel.rank(),
            right: comps.len(),
        });
    }
    let m = f.len();
    if let Some(c) = comps.iter().find(|c| c.len() != m) {
        return Err(NhssaError::LengthMismatch {
            left: c.len(),
            right: m,
        });
    }
    let sum_rows = |rows: &BTreeSet<usize>| {
        let mut acc = vec![czero::<T>(); m];
        for &j in rows {
            for (a, v) in acc.iter_mut().zip(comps[j].samples()) {
                *a += v;
            }
        }
        acc
    };
    let mut shat = sum_rows(&sel.signal_rows);
    let noise = sum_rows(&sel.noise_rows);
    let mut imag_residue = None;
    if f.is_real(T::zero()) {
        let peak = shat.iter().fold(T::zero(), |a, z| a.max(z.im.abs()));
        imag_residue = Some(peak.as_f64());
        let scale = shat.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        if peak <= T::lit(IMAG_DROP) * scale {
            shat.iter_mut().for_each(|z| z.im = T::zero());
        }
    }
    let what: Vec<Complex<T>> = f.samples().iter().zip(&shat).map(|(x, s)| x - s).collect();
    let residual_norm = what
        .iter()
        .zip(&noise)
        .map(|(w, n)| cabs(w - n).as_f64().powi(2))
        .sum::<f64>()
        .sqrt();
    let signal_empty = sel.signal_rows.is_empty();
    if signal_empty {
        log::warn!("empty signal selection, shat is zero");
    }
    Ok(Reconstruction {
        shat: ComplexSeries::with_start(shat, f.start_index())?,
        what: ComplexSeries::with_start(what, f.start_index())?,
        residual_norm,
        imag_residue,
        signal_empty,
    })
}

pub fn group_reconstruct<T: Real>(
    sel: &Selection,
    pd: &PencilDecomposition<T>,
    z: &ZSequences<T>,
    cfg: &EmbeddingConfig,
    f: &ComplexSeries<T>,
) -> Result<Reconstruction<T>> {
    group_from_components(sel, &all_component_series(pd, z, cfg)?, f)
}

/// `||a - b|| / ||b||`
pub fn relative_error<T: Real>(a: &ComplexSeries<T>, b: &ComplexSeries<T>) -> Result<f64> {
    let diff = a.sub(b)?;
    Ok(norm(&diff).as_f64() / norm(b).as_f64())
}

/// Least-squares slope of `ln |x(t)|` over the local maxima of `|Re x|`.
pub fn log_envelope_slope<T: Real>(x: &ComplexSeries<T>) -> Option<f64> {
    let re: Vec<f64> = x.samples().iter().map(|z| z.re.as_f64().abs()).collect();
    let peaks: Vec<(f64, f64)> = (1..re.len().saturating_sub(1))
        .filter(|&t| re[t] >= re[t - 1] && re[t] >= re[t + 1] && re[t] > 0.0)
        .map(|t| (t as f64, re[t].ln()))
        .collect();
    if peaks.len() < 2 {
        return None;
    }
    let n = peaks.len() as f64;
    let tm = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = peaks.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = peaks.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = peaks.iter().map(|p| (p.0 - tm).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `Vhat Z` column by column; used to cross-check the averaging.
pub fn rank_r_information<T: Real>(pd: &PencilDecomposition<T>, z: &ZSequences<T>) -> CMatrix<T> {
    &pd.vhat * &z.z
}
