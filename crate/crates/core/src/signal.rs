//! Signal model: sums of complex exponentials, Gaussian noise (white or
//! autoregressive) and the normalized inner product / SNR vocabulary.
//!
//! Frequencies are given in cycles per sample at every public boundary and
//! converted to radians internally.
//!
//! Noise uses `rand_pcg::Pcg64` (a 128-bit state permuted congruential
//! generator) seeded with `seed_from_u64`, and standard normal draws from
//! `rand_distr`. Reimplementations should match statistics, not bit streams.

use std::f64::consts::PI;

use num_complex::Complex;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{NhssaError, Result};
use crate::scalar::{czero, Real};

/// Finite sequence of complex samples with the sample index of its first
/// element.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries<T: Real> {
    samples: Vec<Complex<T>>,
    start_index: i64,
}

impl<T: Real> ComplexSeries<T> {
    pub fn new(samples: Vec<Complex<T>>) -> Result<Self> {
        Self::with_start(samples, 0)
    }

    pub fn with_start(samples: Vec<Complex<T>>, start_index: i64) -> Result<Self> {
        if samples.is_empty() {
            return Err(NhssaError::InvalidInput(
                "series must hold at least one sample".into(),
            ));
        }
        if let Some(k) = samples
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(NhssaError::InvalidInput(format!(
                "non-finite sample at position {k}"
            )));
        }
        Ok(Self {
            samples,
            start_index,
        })
    }

    pub fn from_real(values: &[T]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Complex::new(x, T::zero())).collect())
    }

    /// Zero series of length `m`.
    pub fn zeros(m: usize) -> Self {
        Self {
            samples: vec![czero(); m.max(1)],
            start_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    pub fn samples(&self) -> &[Complex<T>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex<T>> {
        self.samples
    }

    pub fn get(&self, k: usize) -> Complex<T> {
        self.samples[k]
    }

    /// Largest absolute imaginary part.
    pub fn max_abs_imag(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, z| m.max(z.im.abs()))
    }

    pub fn is_real(&self, tol: T) -> bool {
        self.max_abs_imag() <= tol
    }

    pub fn scaled(&self, alpha: Complex<T>) -> Self {
        Self {
            samples: self.samples.iter().map(|z| *z * alpha).collect(),
            start_index: self.start_index,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| *a + *b)
                .collect(),
            start_index: self.start_index,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| *a - *b)
                .collect(),
            start_index: self.start_index,
        })
    }

    /// Converts to another scalar precision.
    pub fn cast<U: Real>(&self) -> ComplexSeries<U> {
        ComplexSeries {
            samples: self
                .samples
                .iter()
                .map(|z| Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64())))
                .collect(),
            start_index: self.start_index,
        }
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(NhssaError::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// One exponential term `c e^{i 2 pi f k}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    /// Frequency in cycles per sample, in `(-0.5, 0.5]`.
    pub cycles: f64,
    pub amplitude: Complex<f64>,
}

impl Term {
    pub fn new(cycles: f64, amplitude: Complex<f64>) -> Self {
        Self { cycles, amplitude }
    }

    /// Frequency in radians per sample.
    pub fn radians(&self) -> f64 {
        2.0 * PI * self.cycles
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub terms: Vec<Term>,
    #[serde(default)]
    pub real_valued: bool,
}

impl SignalSpec {
    pub fn new(terms: Vec<Term>, real_valued: bool) -> Result<Self> {
        let spec = Self { terms, real_valued };
        spec.validate()?;
        Ok(spec)
    }

    /// Real signal `c0 + sum a_i cos(2 pi f_i k)`; each cosine contributes the
    /// conjugate pair `(+-f_i, a_i / 2)`.
    pub fn cosines(components: &[(f64, f64)], constant: Option<f64>) -> Result<Self> {
        let mut terms = Vec::with_capacity(2 * components.len() + 1);
        if let Some(c0) = constant {
            terms.push(Term::new(0.0, Complex::new(c0, 0.0)));
        }
        for &(f, a) in components {
            terms.push(Term::new(-f, Complex::new(a / 2.0, 0.0)));
            terms.push(Term::new(f, Complex::new(a / 2.0, 0.0)));
        }
        Self::new(terms, true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(NhssaError::EmptySpec);
        }
        for t in &self.terms {
            if !(t.cycles > -0.5 && t.cycles <= 0.5) || !t.cycles.is_finite() {
                return Err(NhssaError::InvalidInput(format!(
                    "frequency {} outside (-0.5, 0.5]",
                    t.cycles
                )));
            }
            if !(t.amplitude.re.is_finite() && t.amplitude.im.is_finite()) {
                return Err(NhssaError::InvalidInput("non-finite amplitude".into()));
            }
        }
        for (i, a) in self.terms.iter().enumerate() {
            for b in &self.terms[i + 1..] {
                if (a.cycles - b.cycles).abs() < 1e-12 {
                    return Err(NhssaError::DuplicateFrequency(a.cycles));
                }
            }
        }
        if self.real_valued {
            for t in &self.terms {
                if t.cycles == 0.0 || t.cycles == 0.5 {
                    if t.amplitude.im.abs() > 1e-12 * t.amplitude.norm().max(1.0) {
                        return Err(NhssaError::InvalidInput(format!(
                            "real-valued spec needs a real amplitude at {} cycles",
                            t.cycles
                        )));
                    }
                    continue;
                }
                let partner = self
                    .terms
                    .iter()
                    .find(|u| (u.cycles + t.cycles).abs() < 1e-12);
                match partner {
                    Some(u) if (u.amplitude - t.amplitude.conj()).norm() <= 1e-12 => {}
                    _ => {
                        return Err(NhssaError::InvalidInput(format!(
                            "real-valued spec lacks the conjugate partner of {} cycles",
                            t.cycles
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Positive frequencies (cycles) of the spec, ascending, with `0` included
    /// when a constant term is present.
    pub fn nonnegative_cycles(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .terms
            .iter()
            .map(|t| t.cycles)
            .filter(|&c| c >= 0.0)
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// `s(k) = sum_j c_j e^{i 2 pi f_j k}` for `k = 0..m-1`.
pub fn synthesize_signal<T: Real>(spec: &SignalSpec, m: usize) -> Result<ComplexSeries<T>> {
    spec.validate()?;
    if m == 0 {
        return Err(NhssaError::InvalidInput("m must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let mut acc = Complex::new(0.0f64, 0.0);
        for t in &spec.terms {
            // reduce the phase argument before the trig call
            let turns = (t.cycles * k as f64).rem_euclid(1.0);
            let th = 2.0 * PI * turns;
            acc += t.amplitude * Complex::new(th.cos(), th.sin());
        }
        if spec.real_valued {
            debug_assert!(acc.im.abs() < 1e-12 * (1.0 + acc.re.abs()));
            acc.im = 0.0;
        }
        out.push(Complex::new(T::lit(acc.re), T::lit(acc.im)));
    }
    ComplexSeries::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum NoiseKind {
    White,
    Ar1 { phi1: f64 },
    Ar2 { phi1: f64, phi2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub innovation_variance: f64,
    /// Scale applied to the generated process.
    pub epsilon: f64,
    pub seed: u64,
    /// Circular complex innovations (variance split evenly between the real
    /// and imaginary parts) instead of real ones.
    #[serde(default)]
    pub complex: bool,
}

impl NoiseSpec {
    pub fn white(variance: f64, epsilon: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::White,
            innovation_variance: variance,
            epsilon,
            seed,
            complex: false,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.innovation_variance > 0.0) || !self.innovation_variance.is_finite() {
            return Err(NhssaError::InvalidInput(
                "innovation variance must be positive".into(),
            ));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(NhssaError::InvalidInput(
                "epsilon must be non-negative".into(),
            ));
        }
        match self.kind {
            NoiseKind::White => Ok(()),
            NoiseKind::Ar1 { phi1 } => {
                if phi1.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(NhssaError::NonStationary(format!(
                        "AR(1) with phi1 = {phi1}"
                    )))
                }
            }
            NoiseKind::Ar2 { phi1, phi2 } => {
                if phi1 + phi2 < 1.0 && phi2 - phi1 < 1.0 && phi2.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(NhssaError::NonStationary(format!(
                        "AR(2) with (phi1, phi2) = ({phi1}, {phi2})"
                    )))
                }
            }
        }
    }

    /// Burn-in discarded before the emitted segment.
    pub fn warmup(&self) -> usize {
        match self.kind {
            NoiseKind::White => 0,
            NoiseKind::Ar1 { phi1 } | NoiseKind::Ar2 { phi1, .. } => {
                let tail = (50.0 / (1.0 - phi1.abs().min(0.999_999))).ceil() as usize;
                tail.max(500)
            }
        }
    }
}

/// Draws `epsilon * w(k)`, `k = 0..m-1`, deterministically from the seed.
pub fn generate_noise<T: Real>(spec: &NoiseSpec, m: usize) -> Result<ComplexSeries<T>> {
    spec.validate()?;
    if m == 0 {
        return Err(NhssaError::InvalidInput("m must be at least 1".into()));
    }
    let mut rng = Pcg64::seed_from_u64(spec.seed);
    let sd = if spec.complex {
        (spec.innovation_variance / 2.0).sqrt()
    } else {
        spec.innovation_variance.sqrt()
    };
    let normal = Normal::new(0.0, sd).map_err(|e| NhssaError::InvalidInput(e.to_string()))?;
    let mut draw = || {
        let re = normal.sample(&mut rng);
        let im = if spec.complex {
            normal.sample(&mut rng)
        } else {
            0.0
        };
        Complex::new(re, im)
    };

    let warm = spec.warmup();
    let (a1, a2) = match spec.kind {
        NoiseKind::White => (0.0, 0.0),
        NoiseKind::Ar1 { phi1 } => (phi1, 0.0),
        NoiseKind::Ar2 { phi1, phi2 } => (phi1, phi2),
    };
    let mut prev1 = Complex::new(0.0, 0.0);
    let mut prev2 = Complex::new(0.0, 0.0);
    let mut out = Vec::with_capacity(m);
    for k in 0..warm + m {
        let w = draw() + prev1 * a1 + prev2 * a2;
        prev2 = prev1;
        prev1 = w;
        if k >= warm {
            let v = w * spec.epsilon;
            out.push(Complex::new(T::lit(v.re), T::lit(v.im)));
        }
    }
    ComplexSeries::new(out)
}

/// `(f, g)_l = (1/l) sum f(k) conj(g(k))`
pub fn inner_product<T: Real>(f: &ComplexSeries<T>, g: &ComplexSeries<T>) -> Result<Complex<T>> {
    check_len(f.len(), g.len())?;
    let l = T::from_usize_lossy(f.len());
    let acc = f
        .samples
        .iter()
        .zip(&g.samples)
        .fold(czero::<T>(), |acc, (a, b)| acc + *a * b.conj());
    Ok(acc / Complex::new(l, T::zero()))
}

pub fn norm<T: Real>(f: &ComplexSeries<T>) -> T {
    let l = T::from_usize_lossy(f.len());
    (f.samples.iter().fold(T::zero(), |a, z| a + z.norm_sqr()) / l).sqrt()
}

/// `10 log10(|s|^2 / |w|^2)`
pub fn snr_db<T: Real>(s: &ComplexSeries<T>, w: &ComplexSeries<T>) -> Result<T> {
    check_len(s.len(), w.len())?;
    let nw = norm(w);
    if nw <= T::zero() {
        return Err(NhssaError::InvalidInput(
            "zero noise: SNR is infinite".into(),
        ));
    }
    let ns = norm(s);
    Ok(T::lit(10.0) * (ns * ns / (nw * nw)).log10())
}

/// Mean power `|f|_l^2`.
pub fn power<T: Real>(f: &ComplexSeries<T>) -> T {
    let n = norm(f);
    n * n
}
