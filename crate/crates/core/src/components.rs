//! Phase-portrait diagnostics of Z rows and their classification into
//! exponential, damped spiral or noise.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NhssaError, Result};
use crate::scalar::{CMatrix, Real};

/// Replacement modulus for exact zeros before taking phases or logarithms.
pub const ZERO_FLOOR: f64 = 1e-300;

/// Shortest row the wrap detector and the phase fit accept.
pub const MIN_ROW_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Exponential,
    Spiral,
    Noise,
}

impl Label {
    pub fn is_signal(self) -> bool {
        !matches!(self, Label::Noise)
    }
}

impl std::str::FromStr for Label {
    type Err = NhssaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" => Ok(Label::Exponential),
            "spiral" => Ok(Label::Spiral),
            "noise" => Ok(Label::Noise),
            other => Err(NhssaError::InvalidInput(format!("unknown label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Auto,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Maximal `std / mean` of the modulus for an exponential.
    pub cv: f64,
    /// Minimal R^2 of the linear phase fit.
    pub r2: f64,
    /// Maximal |log-modulus slope| per step for an exponential.
    pub logslope: f64,
    /// Tolerated wrap events per step; zero demands a wrap-free row.
    #[serde(default)]
    pub wrap_rate: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            cv: 0.35,
            r2: 0.995,
            logslope: 2e-3,
            wrap_rate: 0.0,
        }
    }
}

impl Thresholds {
    /// Looser set for rows at a few dB of SNR, where a genuine exponential
    /// still passes near the origin a handful of times.
    pub fn noisy() -> Self {
        Self {
            cv: 0.5,
            r2: 0.98,
            logslope: 2e-3,
            wrap_rate: 0.1,
        }
    }

    pub fn max_wraps(&self, len: usize) -> usize {
        (self.wrap_rate * len.saturating_sub(1) as f64).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrack {
    /// Cumulative phase in radians; `psi[0] = arg z[0]`.
    pub psi: Vec<f64>,
    /// Number of exact zeros replaced by [`ZERO_FLOOR`].
    pub perturbed_zeros: usize,
}

fn to_c64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(z.re.as_f64(), z.im.as_f64())
}

fn floor_zero(z: Complex<f64>) -> (Complex<f64>, bool) {
    if z.re == 0.0 && z.im == 0.0 {
        (Complex::new(ZERO_FLOOR, 0.0), true)
    } else {
        (z, false)
    }
}

/// `psi(m) = arg z_0 + sum_{k<m} Im ln(z_{k+1} / z_k)`, increments in `(-pi, pi]`.
pub fn cumulative_phase<T: Real>(z: &[Complex<T>]) -> Result<PhaseTrack> {
    if z.is_empty() {
        return Err(NhssaError::InvalidInput("empty row".into()));
    }
    if z.iter().all(|v| v.re == T::zero() && v.im == T::zero()) {
        return Err(NhssaError::InvalidInput("all-zero row has no phase".into()));
    }
    let mut perturbed = 0;
    let zs: Vec<Complex<f64>> = z
        .iter()
        .map(|&v| {
            let (w, p) = floor_zero(to_c64(v));
            perturbed += p as usize;
            w
        })
        .collect();
    let mut psi = Vec::with_capacity(zs.len());
    psi.push(principal(zs[0].arg()));
    for k in 1..zs.len() {
        let inc = principal((zs[k] * zs[k - 1].conj()).arg());
        psi.push(psi[k - 1] + inc);
    }
    Ok(PhaseTrack {
        psi,
        perturbed_zeros: perturbed,
    })
}

fn principal(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapEvents {
    pub count: usize,
    /// Index `k` of the later sample of each anomalous increment `psi[k] - psi[k-1]`.
    pub positions: Vec<usize>,
}

/// Steps whose increment deviates from the median increment by more than pi/2.
pub fn detect_wrapping(psi: &[f64]) -> Result<WrapEvents> {
    if psi.len() < MIN_ROW_LEN {
        return Err(NhssaError::InvalidInput(format!(
            "wrap detection needs at least {MIN_ROW_LEN} samples, got {}",
            psi.len()
        )));
    }
    let inc: Vec<f64> = psi.windows(2).map(|w| w[1] - w[0]).collect();
    let med = median(&mut inc.clone());
    let positions: Vec<usize> = inc
        .iter()
        .enumerate()
        .filter(|(_, d)| (*d - med).abs() > FRAC_PI_2)
        .map(|(k, _)| k + 1)
        .collect();
    Ok(WrapEvents {
        count: positions.len(),
        positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusProfile {
    pub mean: f64,
    pub std: f64,
    /// Least-squares slope of `ln |z_k|` against `k`.
    pub logslope: f64,
}

impl ModulusProfile {
    pub fn cv(&self) -> f64 {
        if self.mean > 0.0 {
            self.std / self.mean
        } else {
            f64::INFINITY
        }
    }
}

pub fn modulus_profile<T: Real>(z: &[Complex<T>]) -> Result<ModulusProfile> {
    if z.is_empty() {
        return Err(NhssaError::InvalidInput("empty row".into()));
    }
    let m: Vec<f64> = z.iter().map(|&v| to_c64(v).norm()).collect();
    let n = m.len() as f64;
    let mean = m.iter().sum::<f64>() / n;
    let var = m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let logs: Vec<f64> = m.iter().map(|x| x.max(ZERO_FLOOR).ln()).collect();
    let logslope = if m.len() >= 2 {
        line_fit(&logs).slope
    } else {
        0.0
    };
    Ok(ModulusProfile {
        mean,
        std: var.sqrt(),
        logslope,
    })
}

struct Line {
    slope: f64,
    r2: f64,
    rms: f64,
}

/// Least squares `y_k ~ a + b k`.
fn line_fit(y: &[f64]) -> Line {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (k, v) in y.iter().enumerate() {
        let dx = k as f64 - xm;
        let dy = v - ym;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let ss_res = (syy - slope * sxy).max(0.0);
    // a numerically constant phase is a perfect (flat) fit
    let r2 = if syy > n * 1e-20 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Line {
        slope,
        r2,
        rms: (ss_res / n).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    /// Radians per step.
    pub slope: f64,
    pub r2: f64,
    /// RMS residual of the fit, radians.
    pub residual: f64,
    /// Half-open sample range the fit used.
    pub segment: (usize, usize),
}

impl PhaseFit {
    pub fn cycles(&self) -> f64 {
        self.slope / (2.0 * PI)
    }
}

/// Linear fit of the cumulative phase over its longest wrap-free segment.
pub fn phase_slope_frequency(psi: &[f64]) -> Result<PhaseFit> {
    let events = detect_wrapping(psi)?;
    let mut bounds = vec![0];
    bounds.extend(&events.positions);
    bounds.push(psi.len());
    let (start, end) = bounds
        .windows(2)
        .map(|w| (w[0], w[1]))
        .max_by_key(|&(a, b)| (b - a, std::cmp::Reverse(a)))
        .unwrap();
    let (start, end) = if end - start >= 2 {
        (start, end)
    } else {
        (0, psi.len())
    };
    let line = line_fit(&psi[start..end]);
    Ok(PhaseFit {
        slope: line.slope,
        r2: line.r2,
        residual: line.rms,
        segment: (start, end),
    })
}

/// Diagnostics that drive the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub modulus: ModulusProfile,
    pub wraps: usize,
    pub r2: f64,
    /// Row length.
    pub len: usize,
}

pub fn classify_component(diag: &Diagnostics, th: &Thresholds) -> Label {
    let phase_ok = diag.wraps <= th.max_wraps(diag.len) && diag.r2 >= th.r2;
    if !phase_ok {
        return Label::Noise;
    }
    let slope = diag.modulus.logslope.abs();
    if slope > th.logslope {
        Label::Spiral
    } else if diag.modulus.cv() <= th.cv {
        Label::Exponential
    } else {
        Label::Noise
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub index: usize,
    pub eigval: Complex<f64>,
    pub z_row: Vec<Complex<f64>>,
    pub phase: Vec<f64>,
    pub modulus: ModulusProfile,
    pub wrap_events: WrapEvents,
    /// Radians per step.
    pub phase_slope: f64,
    pub phase_fit_r2: f64,
    pub label: Label,
    pub label_source: LabelSource,
    /// Passed the eigenvalue-modulus threshold.
    pub kept: bool,
    /// Refined frequency, set for rows that end up in the signal group.
    pub cycles: Option<f64>,
}

impl ComponentRecord {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            modulus: self.modulus,
            wraps: self.wrap_events.count,
            r2: self.phase_fit_r2,
            len: self.z_row.len(),
        }
    }

    pub fn slope_cycles(&self) -> f64 {
        self.phase_slope / (2.0 * PI)
    }

    pub fn eigval_cycles(&self) -> f64 {
        self.eigval.arg() / (2.0 * PI)
    }

    pub fn set_human_label(&mut self, label: Label) {
        self.label = label;
        self.label_source = LabelSource::Human;
    }

    /// Re-runs the automatic classifier unless a human label is set. Rows
    /// below the modulus threshold are auto-labeled noise.
    pub fn reclassify(&mut self, th: &Thresholds) {
        if self.label_source == LabelSource::Human {
            return;
        }
        self.label = if self.kept {
            classify_component(&self.diagnostics(), th)
        } else {
            Label::Noise
        };
    }

    pub fn export(&self) -> ComponentExport {
        ComponentExport {
            index: self.index,
            eigval: [self.eigval.re, self.eigval.im],
            abs_eigval: self.eigval.norm(),
            modulus: self.modulus,
            wraps: self.wrap_events.count,
            slope_cycles: self.slope_cycles(),
            r2: self.phase_fit_r2,
            label: self.label,
            label_source: self.label_source,
            kept: self.kept,
            cycles: self.cycles,
        }
    }
}

/// Flat per-component diagnostics for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentExport {
    pub index: usize,
    pub eigval: [f64; 2],
    pub abs_eigval: f64,
    pub modulus: ModulusProfile,
    pub wraps: usize,
    pub slope_cycles: f64,
    pub r2: f64,
    pub label: Label,
    pub label_source: LabelSource,
    pub kept: bool,
    pub cycles: Option<f64>,
}

pub fn analyze_row<T: Real>(
    index: usize,
    eigval: Complex<T>,
    z_row: &[Complex<T>],
    kept: bool,
    th: &Thresholds,
) -> Result<ComponentRecord> {
    let track = cumulative_phase(z_row)?;
    let wraps = detect_wrapping(&track.psi)?;
    let fit = phase_slope_frequency(&track.psi)?;
    let modulus = modulus_profile(z_row)?;
    let mut rec = ComponentRecord {
        index,
        eigval: to_c64(eigval),
        z_row: z_row.iter().map(|&v| to_c64(v)).collect(),
        phase: track.psi,
        modulus,
        wrap_events: wraps,
        phase_slope: fit.slope,
        phase_fit_r2: fit.r2,
        label: Label::Noise,
        label_source: LabelSource::Auto,
        kept,
        cycles: None,
    };
    rec.reclassify(th);
    Ok(rec)
}

/// Diagnoses every row of `z`; rows are independent and run in parallel.
pub fn analyze_rows<T: Real>(
    z: &CMatrix<T>,
    eigvals: &[Complex<T>],
    kept: &[bool],
    th: &Thresholds,
) -> Result<Vec<ComponentRecord>> {
    if eigvals.len() != z.nrows() || kept.len() != z.nrows() {
        return Err(NhssaError::LengthMismatch {
            left: eigvals.len(),
            right: z.nrows(),
        });
    }
    (0..z.nrows())
        .into_par_iter()
        .map(|j| {
            let row: Vec<Complex<T>> = z.row(j).iter().copied().collect();
            analyze_row(j, eigvals[j], &row, kept[j], th)
        })
        .collect()
}
