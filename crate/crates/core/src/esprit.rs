//! Least-squares ESPRIT on a Hankel data matrix, plus the single-exponential
//! variant used to refine accepted Z rows.

use std::f64::consts::PI;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::components::{cumulative_phase, phase_slope_frequency};
use crate::error::{NhssaError, Result};
use crate::linalg;
use crate::scalar::{cabs, CMatrix, Real};
use crate::signal::ComplexSeries;

/// Relative singular value below which a Hankel direction counts as absent.
const RANK_REL: f64 = 1e-10;

/// Eigenvalues whose argument is this close to 0 or pi count as real.
const REAL_ARG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EspritConfig {
    /// Number of cosines; the subspace dimension is twice this.
    pub model_order_cosines: usize,
    /// Height of the Hankel matrix.
    pub cov_size: usize,
}

impl EspritConfig {
    pub fn new(model_order_cosines: usize, cov_size: usize) -> Result<Self> {
        if model_order_cosines == 0 {
            return Err(NhssaError::InvalidInput(
                "ESPRIT order must be positive".into(),
            ));
        }
        if 2 * model_order_cosines >= cov_size {
            return Err(NhssaError::InvalidInput(format!(
                "cov_size {cov_size} must exceed twice the order {model_order_cosines}"
            )));
        }
        Ok(Self {
            model_order_cosines,
            cov_size,
        })
    }

    pub fn validate_for(&self, m: usize) -> Result<()> {
        Self::new(self.model_order_cosines, self.cov_size)?;
        if m < 2 * self.cov_size {
            return Err(NhssaError::InvalidInput(format!(
                "series of length {m} is shorter than twice cov_size {}",
                self.cov_size
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("esprit{}", self.model_order_cosines)
    }
}

/// One frequency in the shared frequency-list format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub cycles: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EspritResult {
    /// Ascending. Non-negative for real input.
    pub cycles: Vec<f64>,
    pub eigvals: Vec<Complex<f64>>,
    /// Subspace dimension actually used.
    pub order_used: usize,
    /// The Hankel matrix had fewer significant directions than requested.
    pub rank_limited: bool,
    /// Real input produced eigenvalues without a conjugate partner.
    pub unpaired: bool,
}

impl EspritResult {
    pub fn frequency_list(&self, source: &str) -> Vec<FrequencyEstimate> {
        self.cycles
            .iter()
            .map(|&c| FrequencyEstimate {
                cycles: c,
                source: source.to_string(),
            })
            .collect()
    }
}

fn hankel<T: Real>(z: &[Complex<T>], rows: usize) -> CMatrix<T> {
    let cols = z.len() + 1 - rows;
    CMatrix::<T>::from_fn(rows, cols, |i, j| z[i + j])
}

/// Rotational eigenvalues of the `r` dominant left singular directions.
fn shift_eigvals<T: Real>(
    z: &[Complex<T>],
    rows: usize,
    r: usize,
) -> Result<(Vec<Complex<T>>, usize)> {
    let svd = linalg::thin_svd(&hankel(z, rows))?;
    let r = r.min(svd.rank_cutoff(T::lit(RANK_REL)));
    if r == 0 {
        return Ok((Vec::new(), 0));
    }
    let e = svd.u.columns(0, r);
    let up = e.rows(0, rows - 1).into_owned();
    let down = e.rows(1, rows - 1).into_owned();
    let psi = linalg::lstsq_min_norm(&up, &down, T::eps() * T::lit(10.0))?;
    let (vals, _) = linalg::eig(&psi)?;
    Ok((vals, r))
}

fn cycles_of(z: Complex<f64>) -> f64 {
    z.arg() / (2.0 * PI)
}

/// Folds signed frequencies (cycles) of a real signal onto `[0, 0.5]`.
///
/// Opposite-sign values whose magnitudes differ by at most `tol` are paired
/// greedily by that difference and replaced by the mean magnitude. Values at
/// 0 or 0.5 are their own conjugate. The flag reports whether anything else
/// was left without a partner.
pub fn merge_conjugate_cycles(signed: &[f64], tol: f64) -> (Vec<f64>, bool) {
    let real_tol = REAL_ARG_TOL / (2.0 * PI);
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    let mut out = Vec::new();
    for &c in signed {
        if c.abs() <= real_tol || (0.5 - c.abs()) <= real_tol {
            out.push(c.abs());
        } else if c > 0.0 {
            pos.push(c);
        } else {
            neg.push(-c);
        }
    }
    let mut unpaired = false;
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pos.iter().enumerate() {
        for (j, n) in neg.iter().enumerate() {
            if (p - n).abs() <= tol {
                cand.push(((p - n).abs(), i, j));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used_p = vec![false; pos.len()];
    let mut used_n = vec![false; neg.len()];
    for (_, i, j) in cand {
        if !used_p[i] && !used_n[j] {
            used_p[i] = true;
            used_n[j] = true;
            out.push(0.5 * (pos[i] + neg[j]));
        }
    }
    let lone = pos
        .iter()
        .zip(&used_p)
        .chain(neg.iter().zip(&used_n))
        .filter(|(_, u)| !**u);
    for (c, _) in lone {
        unpaired = true;
        out.push(*c);
    }
    out.sort_by(|a, b| a.total_cmp(b));
    (out, unpaired)
}

pub fn esprit_estimate<T: Real>(f: &ComplexSeries<T>, cfg: &EspritConfig) -> Result<EspritResult> {
    cfg.validate_for(f.len())?;
    let requested = 2 * cfg.model_order_cosines;
    let (vals, used) = shift_eigvals(f.samples(), cfg.cov_size, requested)?;
    let eigvals: Vec<Complex<f64>> = vals
        .iter()
        .map(|z| Complex::new(z.re.as_f64(), z.im.as_f64()))
        .collect();
    let rank_limited = used < requested;
    if rank_limited {
        log::warn!("ESPRIT: requested order {requested}, data supports {used}");
    }
    let signed: Vec<f64> = eigvals.iter().map(|&z| cycles_of(z)).collect();
    let (mut cycles, unpaired) = if f.is_real(T::lit(0.0)) {
        merge_conjugate_cycles(&signed, f64::INFINITY)
    } else {
        (signed, false)
    };
    cycles.sort_by(|a, b| a.total_cmp(b));
    Ok(EspritResult {
        cycles,
        eigvals,
        order_used: used,
        rank_limited,
        unpaired,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refined {
    pub cycles: f64,
    /// ESPRIT failed and the phase-slope estimate was used instead.
    pub fallback: bool,
}

/// Frequency of a single complex exponential fitted to one Z row.
pub fn refine_single<T: Real>(z: &[Complex<T>]) -> Result<Refined> {
    let l = z.len();
    if l >= 4 {
        if let Ok((vals, 1)) = shift_eigvals(z, l / 2, 1) {
            let v = vals[0];
            if v.re.is_finite() && v.im.is_finite() && cabs(v) > T::zero() {
                return Ok(Refined {
                    cycles: cycles_of(Complex::new(v.re.as_f64(), v.im.as_f64())),
                    fallback: false,
                });
            }
        }
    }
    log::warn!("single-exponential ESPRIT degenerate, using phase slope");
    let fit = phase_slope_frequency(&cumulative_phase(z)?.psi)?;
    Ok(Refined {
        cycles: fit.cycles(),
        fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_noise, synthesize_signal, NoiseSpec, SignalSpec};

    const FOUR: [(f64, f64); 4] = [(0.04, 1.0), (0.06, 1.0), (0.07, 1.0), (0.12, 1.0)];

    fn four(constant: Option<f64>) -> ComplexSeries<f64> {
        synthesize_signal(&SignalSpec::cosines(&FOUR, constant).unwrap(), 300).unwrap()
    }

    #[test]
    fn config_rules() {
        assert!(EspritConfig::new(4, 8).is_err());
        assert!(EspritConfig::new(0, 100).is_err());
        let c = EspritConfig::new(4, 100).unwrap();
        assert!(c.validate_for(199).is_err());
        assert!(c.validate_for(200).is_ok());
        assert_eq!(c.label(), "esprit4");
    }

    #[test]
    fn noiseless_four_cosines_any_cov_size() {
        let f = four(None);
        for cov in [9, 20, 57, 100, 150] {
            let r = esprit_estimate(&f, &EspritConfig::new(4, cov).unwrap()).unwrap();
            assert_eq!(r.cycles.len(), 4);
            for (got, want) in r.cycles.iter().zip([0.04, 0.06, 0.07, 0.12]) {
                assert!((got - want).abs() < 1e-8, "cov {cov}: {got} vs {want}");
            }
            assert!(!r.rank_limited && !r.unpaired);
        }
    }

    #[test]
    fn constant_needs_an_extra_order() {
        let f = four(Some(2.0));
        let r = esprit_estimate(&f, &EspritConfig::new(5, 100).unwrap()).unwrap();
        assert!(r.rank_limited);
        assert_eq!(r.order_used, 9);
        // the constant is its own conjugate
        assert!(!r.unpaired);
        let want = [0.0, 0.04, 0.06, 0.07, 0.12];
        assert_eq!(r.cycles.len(), 5);
        for (got, w) in r.cycles.iter().zip(want) {
            assert!((got - w).abs() < 1e-8);
        }
        let scaled = f.scaled(Complex::new(-3.5, 0.0));
        let s = esprit_estimate(&scaled, &EspritConfig::new(5, 100).unwrap()).unwrap();
        for (a, b) in r.cycles.iter().zip(&s.cycles) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn complex_input_keeps_signs() {
        let f = ComplexSeries::new(
            (0..200)
                .map(|k| {
                    Complex::from_polar(1.0, 2.0 * PI * 0.1 * k as f64)
                        + Complex::from_polar(0.5, -2.0 * PI * 0.23 * k as f64)
                })
                .collect(),
        )
        .unwrap();
        let r = esprit_estimate(&f, &EspritConfig::new(1, 40).unwrap()).unwrap();
        assert_eq!(r.cycles.len(), 2);
        assert!((r.cycles[0] + 0.23).abs() < 1e-8 && (r.cycles[1] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn noisy_extra_orders_add_estimates() {
        let s = four(None);
        let w = generate_noise::<f64>(&NoiseSpec::white(1.0, 1.0, 3), 300).unwrap();
        let f = s.add(&w).unwrap();
        let r4 = esprit_estimate(&f, &EspritConfig::new(4, 100).unwrap()).unwrap();
        let r7 = esprit_estimate(&f, &EspritConfig::new(7, 100).unwrap()).unwrap();
        assert_eq!(r4.cycles.len(), 4);
        assert_eq!(r7.cycles.len(), 7);
        for (got, want) in r4.cycles.iter().zip([0.04, 0.06, 0.07, 0.12]) {
            assert!((got - want).abs() < 2e-3);
        }
    }

    #[test]
    fn refine_examples() {
        let z: Vec<Complex<f64>> = (0..150)
            .map(|k| Complex::from_polar(2.0, 2.0 * PI * 0.12 * k as f64))
            .collect();
        let r = refine_single(&z).unwrap();
        assert!(!r.fallback);
        assert!((r.cycles - 0.12).abs() < 1e-9);
        let slope = phase_slope_frequency(&cumulative_phase(&z).unwrap().psi)
            .unwrap()
            .cycles();
        assert!((r.cycles - slope).abs() < 1.0 / 150.0);

        let damped: Vec<Complex<f64>> = (0..100)
            .map(|k| Complex::from_polar(0.97f64.powi(k), -2.0 * PI * 0.05 * k as f64))
            .collect();
        assert!((refine_single(&damped).unwrap().cycles + 0.05).abs() < 1e-9);

        let short = [
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 1.0),
            Complex::new(-1.0, 0.0),
        ];
        assert!(refine_single(&short).is_err());
        let zeros = vec![Complex::new(0.0f64, 0.0); 20];
        assert!(refine_single(&zeros).is_err());
    }

    #[test]
    fn merging_rules() {
        let (c, lone) = merge_conjugate_cycles(&[0.1, -0.1000002, -0.3, 0.0, 0.2], 1e-3);
        assert!(lone);
        assert_eq!(c.len(), 4);
        assert!((c[1] - 0.1000001).abs() < 1e-12);
        assert_eq!(c[0], 0.0);
        let (c, lone) = merge_conjugate_cycles(&[-0.25, 0.25], 1e-3);
        assert!(!lone);
        assert_eq!(c, vec![0.25]);
        let (c, lone) = merge_conjugate_cycles(&[0.2, -0.3], 0.05);
        assert!(lone);
        assert_eq!(c, vec![0.2, 0.3]);
        let (c, lone) = merge_conjugate_cycles(&[0.0, -0.5], 1e-3);
        assert!(!lone);
        assert_eq!(c, vec![0.0, 0.5]);
    }

    #[test]
    fn frequency_list_json() {
        let r = esprit_estimate(&four(None), &EspritConfig::new(4, 100).unwrap()).unwrap();
        let json = serde_json::to_value(r.frequency_list("esprit4")).unwrap();
        assert_eq!(json[0]["source"], "esprit4");
        assert!((json[3]["cycles"].as_f64().unwrap() - 0.12).abs() < 1e-8);
    }

    #[test]
    fn f32_runs() {
        let f: ComplexSeries<f32> = four(None).cast();
        let r = esprit_estimate(&f, &EspritConfig::new(4, 60).unwrap()).unwrap();
        for (got, want) in r.cycles.iter().zip([0.04, 0.06, 0.07, 0.12]) {
            assert!((got - want).abs() < 1e-3);
        }
    }
}
