//! Monte Carlo experiments: repeated noise realizations, estimator
//! comparison, occurrence histograms and the close-frequency merge study.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::Thresholds;
use crate::error::{NhssaError, Result};
use crate::esprit::{esprit_estimate, EspritConfig};
use crate::pencil::RankPolicy;
use crate::pipeline::{run_pipeline, PipelineConfig, PAIR_TOL};
use crate::reconstruction::log_envelope_slope;
use crate::signal::{
    generate_noise, snr_db, synthesize_signal, ComplexSeries, NoiseKind, NoiseSpec, SignalSpec,
};

/// Estimates within this many cycles of a true frequency can match it.
pub const MATCH_TOL: f64 = 0.005;
pub const DEFAULT_BIN: f64 = 0.005;

const PRESETS: [&str; 4] = ["white", "ar1", "ar2", "separability"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Nhssa { config: PipelineConfig },
    Esprit { config: EspritConfig },
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Nhssa { .. } => "nhssa".into(),
            EstimatorSpec::Esprit { config } => config.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub signal: SignalSpec,
    /// `seed` is the base seed; realization r uses `seed + r`.
    pub noise: NoiseSpec,
    pub m: usize,
    pub realizations: usize,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default = "default_bin")]
    pub histogram_bin: f64,
    pub truth: Vec<f64>,
    /// Open interval in which exactly one estimate counts as a merge.
    #[serde(default)]
    pub merge_interval: Option<(f64, f64)>,
}

fn default_bin() -> f64 {
    DEFAULT_BIN
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(NhssaError::InvalidInput(
                "realizations must be at least 1".into(),
            ));
        }
        if !(self.histogram_bin > 0.0 && self.histogram_bin.is_finite()) {
            return Err(NhssaError::InvalidInput(
                "histogram bin must be positive".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(NhssaError::InvalidInput("no estimators".into()));
        }
        if let Some((a, b)) = self.merge_interval {
            if !(a < b) {
                return Err(NhssaError::InvalidInput("empty merge interval".into()));
            }
        }
        self.signal.validate()?;
        self.noise.validate()?;
        for e in &self.estimators {
            match e {
                EstimatorSpec::Nhssa { config } => config.validate()?,
                EstimatorSpec::Esprit { config } => config.validate_for(self.m)?,
            }
        }
        Ok(())
    }
}

fn four_cosines(kind: NoiseKind, mbar: usize) -> Result<ExperimentSpec> {
    let truth = vec![0.04, 0.06, 0.07, 0.12];
    let pairs: Vec<(f64, f64)> = truth.iter().map(|&f| (f, 1.0)).collect();
    let mut noise = NoiseSpec::white(1.0, 1.0, 1000);
    noise.kind = kind;
    let nhssa = PipelineConfig {
        thresholds: Thresholds::noisy(),
        ..PipelineConfig::fixed(18, mbar)
            .with_rank(RankPolicy::Fixed { rank: 18 })
            .with_lambda_c(0.5)
    };
    Ok(ExperimentSpec {
        name: String::new(),
        signal: SignalSpec::cosines(&pairs, None)?,
        noise,
        m: 300,
        realizations: 100,
        estimators: vec![
            EstimatorSpec::Nhssa { config: nhssa },
            EstimatorSpec::Esprit {
                config: EspritConfig::new(4, 100)?,
            },
            EstimatorSpec::Esprit {
                config: EspritConfig::new(7, 100)?,
            },
        ],
        histogram_bin: DEFAULT_BIN,
        truth,
        merge_interval: None,
    })
}

pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let mut spec = match name {
        "white" => four_cosines(NoiseKind::White, 4)?,
        "ar1" => four_cosines(NoiseKind::Ar1 { phi1: 0.7 }, 3)?,
        "ar2" => four_cosines(
            NoiseKind::Ar2 {
                phi1: 0.7,
                phi2: -0.4,
            },
            3,
        )?,
        "separability" => {
            let nhssa = PipelineConfig {
                thresholds: Thresholds::noisy(),
                ..PipelineConfig::fixed(24, 2)
                    .with_rank(RankPolicy::Fixed { rank: 3 })
                    .with_lambda_c(0.5)
            };
            ExperimentSpec {
                name: String::new(),
                signal: SignalSpec::cosines(&[(0.01, 1.0), (0.015, 1.0)], Some(-1.0))?,
                noise: NoiseSpec::white(1.0 / 16.0, 1.0, 5000),
                m: 100,
                realizations: 100,
                estimators: vec![
                    EstimatorSpec::Nhssa { config: nhssa },
                    EstimatorSpec::Esprit {
                        config: EspritConfig::new(2, 40)?,
                    },
                    EstimatorSpec::Esprit {
                        config: EspritConfig::new(5, 40)?,
                    },
                ],
                histogram_bin: DEFAULT_BIN,
                truth: vec![0.01, 0.015],
                merge_interval: Some((0.01, 0.015)),
            }
        }
        other => return Err(NhssaError::UnknownPreset(other.to_owned())),
    };
    spec.name = name.to_owned();
    Ok(spec)
}

pub fn preset_names() -> &'static [&'static str] {
    &PRESETS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn bin_low(&self, i: usize) -> f64 {
        i as f64 * self.bin
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{}", round_bin(self.bin_low(i)), c);
        }
        out
    }
}

fn round_bin(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Counts per bin over `[0, 0.5]` cycles; estimates are folded with `abs`
/// and 0.5 lands in the last bin.
pub fn occurrence_histogram(estimates: &[f64], bin: f64) -> Result<Histogram> {
    if !(bin > 0.0 && bin.is_finite()) {
        return Err(NhssaError::InvalidInput(
            "histogram bin must be positive".into(),
        ));
    }
    let nbins = ((0.5 / bin) - 1e-9).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; nbins];
    for &x in estimates {
        let x = x.abs().min(0.5);
        // guard against 0.12 / 0.005 = 23.999...
        let i = ((x / bin) * (1.0 + 1e-12)).floor() as usize;
        counts[i.min(nbins - 1)] += 1;
    }
    Ok(Histogram { bin, counts })
}

/// One-to-one greedy matching by distance: returns `(truth index, estimate
/// index)` pairs with distance at most `tol`.
pub fn match_estimates(truth: &[f64], estimates: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in estimates.iter().enumerate() {
            let dist = (t - e).abs();
            if dist <= tol {
                cand.push((dist, i, j));
            }
        }
    }
    // ties are broken by value so that the result does not depend on order
    cand.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(truth[a.1].total_cmp(&truth[b.1]))
            .then(estimates[a.2].total_cmp(&estimates[b.2]))
    });
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimates.len()];
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Extra observations on the estimate inside the merge interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct MergeObs {
    merged: bool,
    spiral: bool,
    negative_envelope: bool,
}

#[derive(Debug, Clone)]
struct Outcome {
    estimates: std::result::Result<Vec<f64>, String>,
    merge: Option<MergeObs>,
}

fn inside(x: f64, (a, b): (f64, f64)) -> bool {
    x > a && x < b
}

fn run_nhssa(
    f: &ComplexSeries<f64>,
    cfg: &PipelineConfig,
    interval: Option<(f64, f64)>,
) -> Outcome {
    let res = match run_pipeline(f, cfg) {
        Ok(r) => r,
        Err(e) => {
            return Outcome {
                estimates: Err(e.to_string()),
                merge: interval.map(|_| MergeObs::default()),
            }
        }
    };
    let freqs = res.derived.frequencies.clone();
    let merge = interval.map(|iv| {
        let hits: Vec<f64> = freqs.iter().copied().filter(|&x| inside(x, iv)).collect();
        if hits.len() != 1 {
            return MergeObs::default();
        }
        let rows: Vec<_> = res
            .records
            .iter()
            .filter(|r| {
                r.label.is_signal()
                    && r.cycles
                        .is_some_and(|c| (c.abs() - hits[0]).abs() <= PAIR_TOL)
            })
            .collect();
        let spiral = !rows.is_empty()
            && rows
                .iter()
                .all(|r| r.label == crate::components::Label::Spiral);
        let mut series: Option<ComplexSeries<f64>> = None;
        for r in &rows {
            let c = &res.components[r.index];
            series = Some(match series {
                None => c.clone(),
                Some(s) => s.add(c).unwrap_or(s),
            });
        }
        let negative_envelope = series
            .and_then(|s| log_envelope_slope(&s))
            .is_some_and(|sl| sl < 0.0);
        MergeObs {
            merged: true,
            spiral,
            negative_envelope,
        }
    });
    Outcome {
        estimates: Ok(freqs),
        merge,
    }
}

fn run_estimator(
    f: &ComplexSeries<f64>,
    est: &EstimatorSpec,
    interval: Option<(f64, f64)>,
) -> Outcome {
    match est {
        EstimatorSpec::Nhssa { config } => run_nhssa(f, config, interval),
        EstimatorSpec::Esprit { config } => {
            let estimates = esprit_estimate(f, config)
                .map(|r| r.cycles)
                .map_err(|e| e.to_string());
            let merge = interval.map(|iv| MergeObs {
                merged: estimates
                    .as_ref()
                    .is_ok_and(|v| v.iter().filter(|&&x| inside(x, iv)).count() == 1),
                ..MergeObs::default()
            });
            Outcome { estimates, merge }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyStats {
    pub truth: f64,
    pub hits: usize,
    pub mean: Option<f64>,
    /// Sample variance with the `n - 1` denominator; 0 for a single hit.
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub realization: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStats {
    pub interval: (f64, f64),
    pub merged: usize,
    pub merge_rate: f64,
    /// Merged runs whose merged rows are labelled Spiral (NHSSA only).
    pub spiral: Option<usize>,
    /// Merged runs whose back-mapped merged component decays (NHSSA only).
    pub negative_envelope: Option<usize>,
    /// Merged runs that are both Spiral and decaying (NHSSA only).
    pub spiral_decaying: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub estimator: String,
    pub per_truth: Vec<FrequencyStats>,
    pub false_estimates: Vec<f64>,
    /// False estimates per realization, in realization order.
    pub false_per_run: Vec<usize>,
    pub total_estimates: usize,
    pub histogram: Histogram,
    pub failures: Vec<Failure>,
    pub merge: Option<MergeStats>,
}

impl EstimatorStats {
    pub fn hit_rate(&self, truth_index: usize, realizations: usize) -> f64 {
        self.per_truth[truth_index].hits as f64 / realizations as f64
    }

    pub fn mean_false_per_run(&self) -> f64 {
        let n = self.false_per_run.len().max(1);
        self.false_estimates.len() as f64 / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub mean_db: f64,
    pub min_db: f64,
    pub max_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub name: String,
    pub realizations: usize,
    pub base_seed: u64,
    pub match_tolerance: f64,
    pub truth: Vec<f64>,
    /// None when the noise is identically zero.
    pub snr: Option<SnrSummary>,
    pub estimators: Vec<EstimatorStats>,
}

impl RunStats {
    pub fn estimator(&self, label: &str) -> Option<&EstimatorStats> {
        self.estimators.iter().find(|e| e.estimator == label)
    }
}

/// Pairwise (cascade) summation, so the result does not depend on how the
/// realizations were scheduled.
fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_var(x: &[f64]) -> (Option<f64>, Option<f64>) {
    if x.is_empty() {
        return (None, None);
    }
    let n = x.len() as f64;
    let mean = pairwise_sum(x) / n;
    if x.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let sq: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
    (Some(mean), Some(pairwise_sum(&sq) / (n - 1.0)))
}

fn aggregate(spec: &ExperimentSpec, k: usize, outcomes: &[Vec<Outcome>]) -> Result<EstimatorStats> {
    let nt = spec.truth.len();
    let mut matched: Vec<Vec<f64>> = vec![Vec::new(); nt];
    let mut false_estimates = Vec::new();
    let mut false_per_run = Vec::with_capacity(outcomes.len());
    let mut all = Vec::new();
    let mut failures = Vec::new();
    let (mut merged, mut spiral, mut negenv, mut both) = (0, 0, 0, 0);
    for (r, run) in outcomes.iter().enumerate() {
        let out = &run[k];
        if let Some(obs) = out.merge {
            merged += obs.merged as usize;
            spiral += (obs.merged && obs.spiral) as usize;
            negenv += (obs.merged && obs.negative_envelope) as usize;
            both += (obs.merged && obs.spiral && obs.negative_envelope) as usize;
        }
        match &out.estimates {
            Err(message) => {
                failures.push(Failure {
                    realization: r,
                    message: message.clone(),
                });
                false_per_run.push(0);
            }
            Ok(est) => {
                let pairs = match_estimates(&spec.truth, est, MATCH_TOL);
                let mut used = vec![false; est.len()];
                for &(i, j) in &pairs {
                    matched[i].push(est[j]);
                    used[j] = true;
                }
                let falses: Vec<f64> = est
                    .iter()
                    .zip(&used)
                    .filter(|(_, u)| !**u)
                    .map(|(e, _)| *e)
                    .collect();
                false_per_run.push(falses.len());
                false_estimates.extend(falses);
                all.extend_from_slice(est);
            }
        }
    }
    let per_truth = spec
        .truth
        .iter()
        .zip(&matched)
        .map(|(&truth, v)| {
            let (mean, variance) = mean_var(v);
            FrequencyStats {
                truth,
                hits: v.len(),
                mean,
                variance,
            }
        })
        .collect();
    let is_nhssa = matches!(spec.estimators[k], EstimatorSpec::Nhssa { .. });
    let merge = spec.merge_interval.map(|interval| MergeStats {
        interval,
        merged,
        merge_rate: merged as f64 / spec.realizations as f64,
        spiral: is_nhssa.then_some(spiral),
        negative_envelope: is_nhssa.then_some(negenv),
        spiral_decaying: is_nhssa.then_some(both),
    });
    Ok(EstimatorStats {
        estimator: spec.estimators[k].label(),
        per_truth,
        false_estimates,
        false_per_run,
        total_estimates: all.len(),
        histogram: occurrence_histogram(&all, spec.histogram_bin)?,
        failures,
        merge,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunStats> {
    spec.validate()?;
    let s: ComplexSeries<f64> = synthesize_signal(&spec.signal, spec.m)?;
    let runs: Vec<(Vec<Outcome>, Option<f64>)> = (0..spec.realizations)
        .into_par_iter()
        .map(|r| {
            let noise = spec.noise.with_seed(spec.noise.seed.wrapping_add(r as u64));
            let w: ComplexSeries<f64> = generate_noise(&noise, spec.m)?;
            let snr = snr_db(&s, &w).ok();
            let f = s.add(&w)?;
            let outs = spec
                .estimators
                .iter()
                .map(|e| run_estimator(&f, e, spec.merge_interval))
                .collect();
            Ok((outs, snr))
        })
        .collect::<Result<_>>()?;
    let snrs: Vec<f64> = runs.iter().filter_map(|r| r.1).collect();
    let snr = (snrs.len() == runs.len() && !snrs.is_empty()).then(|| SnrSummary {
        mean_db: pairwise_sum(&snrs) / snrs.len() as f64,
        min_db: snrs.iter().copied().fold(f64::INFINITY, f64::min),
        max_db: snrs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    let outcomes: Vec<Vec<Outcome>> = runs.into_iter().map(|r| r.0).collect();
    let estimators = (0..spec.estimators.len())
        .map(|k| aggregate(spec, k, &outcomes))
        .collect::<Result<_>>()?;
    Ok(RunStats {
        name: spec.name.clone(),
        realizations: spec.realizations,
        base_seed: spec.noise.seed,
        match_tolerance: MATCH_TOL,
        truth: spec.truth.clone(),
        snr,
        estimators,
    })
}

fn opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.prec$}"))
}

fn opt_e(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4e}"))
}

/// Markdown table in the layout of a mean / variance / hits comparison.
pub fn render_markdown(stats: &RunStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Experiment `{}`\n", stats.name);
    let _ = writeln!(
        out,
        "{} realizations, base seed {}. Estimates are matched one-to-one to the truth, greedily by distance, within {} cycles.\n",
        stats.realizations, stats.base_seed, stats.match_tolerance
    );
    if let Some(s) = stats.snr {
        let _ = writeln!(
            out,
            "Measured SNR: mean {:.2} dB (min {:.2}, max {:.2}).\n",
            s.mean_db, s.min_db, s.max_db
        );
    }
    let names: Vec<&str> = stats
        .estimators
        .iter()
        .map(|e| e.estimator.as_str())
        .collect();
    let _ = write!(out, "| nu |");
    for n in &names {
        let _ = write!(out, " E {n} |");
    }
    for n in &names {
        let _ = write!(out, " Var {n} |");
    }
    for n in &names {
        let _ = write!(out, " hits {n} |");
    }
    out.push('\n');
    out.push_str(&"|---".repeat(1 + 3 * names.len()));
    out.push_str("|\n");
    for (i, t) in stats.truth.iter().enumerate() {
        let _ = write!(out, "| {t} |");
        for e in &stats.estimators {
            let _ = write!(out, " {} |", opt(e.per_truth[i].mean, 6));
        }
        for e in &stats.estimators {
            let _ = write!(out, " {} |", opt_e(e.per_truth[i].variance));
        }
        for e in &stats.estimators {
            let _ = write!(out, " {} |", e.per_truth[i].hits);
        }
        out.push('\n');
    }
    out.push_str(
        "\n| estimator | estimates | false | failures | merged |\n|---|---|---|---|---|\n",
    );
    for e in &stats.estimators {
        let merged = e.merge.as_ref().map_or_else(
            || "-".into(),
            |m| {
                let mut s = format!("{} ({:.0}%)", m.merged, 100.0 * m.merge_rate);
                if let (Some(sp), Some(ne)) = (m.spiral, m.negative_envelope) {
                    let _ = write!(s, ", spiral {sp}, decaying {ne}");
                }
                s
            },
        );
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            e.estimator,
            e.total_estimates,
            e.false_estimates.len(),
            e.failures.len(),
            merged
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str, realizations: usize) -> ExperimentSpec {
        let mut spec = preset(name).unwrap();
        spec.realizations = realizations;
        spec
    }

    #[test]
    fn histogram_examples() {
        let h = occurrence_histogram(&[0.041], 0.005).unwrap();
        assert_eq!(h.counts.len(), 100);
        assert_eq!(h.counts[8], 1);
        assert!((h.bin_low(8) - 0.04).abs() < 1e-15);
        assert_eq!(h.total(), 1);

        let h = occurrence_histogram(&[], 0.005).unwrap();
        assert!(h.counts.iter().all(|&c| c == 0));

        let h = occurrence_histogram(&[0.12; 100], 0.005).unwrap();
        assert_eq!(h.counts[24], 100);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);

        let h = occurrence_histogram(&[0.5, 0.0, -0.3], 0.005).unwrap();
        assert_eq!(h.counts[99], 1);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[60], 1);
        assert!(occurrence_histogram(&[0.1], 0.0).is_err());
        assert!(h.to_csv().starts_with("bin_low,count\n0,1\n0.005,0\n"));
    }

    #[test]
    fn matching_is_one_to_one_and_greedy() {
        let truth = [0.06, 0.07];
        // one merged estimate sits between the two: it goes to the nearer truth
        assert_eq!(match_estimates(&truth, &[0.0662], 0.005), vec![(1, 0)]);
        assert_eq!(
            match_estimates(&truth, &[0.061, 0.062], 0.005),
            vec![(0, 0)]
        );
        assert_eq!(
            match_estimates(&truth, &[0.068, 0.061], 0.005),
            vec![(0, 1), (1, 0)]
        );
        assert!(match_estimates(&truth, &[0.2], 0.005).is_empty());
    }

    #[test]
    fn matching_is_symmetric_under_truth_reordering() {
        let truth = [0.04, 0.06, 0.07, 0.12];
        let est = [0.0651, 0.041, 0.119, 0.0649, 0.3];
        let a = match_estimates(&truth, &est, 0.005);
        let perm = [3usize, 1, 0, 2];
        let t2: Vec<f64> = perm.iter().map(|&i| truth[i]).collect();
        let b = match_estimates(&t2, &est, 0.005);
        let mut b: Vec<(usize, usize)> = b.into_iter().map(|(i, j)| (perm[i], j)).collect();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn presets_carry_the_published_settings() {
        let s = preset("separability").unwrap();
        assert_eq!(s.noise.innovation_variance, 1.0 / 16.0);
        assert_eq!(s.m, 100);
        assert_eq!(s.truth, vec![0.01, 0.015]);
        assert!(s.merge_interval.is_some());
        let a = preset("ar2").unwrap();
        assert_eq!(
            a.noise.kind,
            NoiseKind::Ar2 {
                phi1: 0.7,
                phi2: -0.4
            }
        );
        assert_eq!(
            preset("ar1").unwrap().noise.kind,
            NoiseKind::Ar1 { phi1: 0.7 }
        );
        let w = preset("white").unwrap();
        assert_eq!(w.m, 300);
        assert_eq!(w.realizations, 100);
        let labels: Vec<String> = w.estimators.iter().map(|e| e.label()).collect();
        assert_eq!(labels, ["nhssa", "esprit4", "esprit7"]);
        for n in preset_names() {
            preset(n).unwrap().validate().unwrap();
        }
        assert!(matches!(preset("pink"), Err(NhssaError::UnknownPreset(_))));
    }

    #[test]
    fn noiseless_runs_hit_every_truth_exactly() {
        let mut spec = small("white", 3);
        spec.noise.epsilon = 0.0;
        let st = run_experiment(&spec).unwrap();
        assert!(st.snr.is_none());
        for e in &st.estimators {
            for (fs, t) in e.per_truth.iter().zip(&spec.truth) {
                assert_eq!(fs.hits, 3, "{} at {t}", e.estimator);
                assert!(
                    (fs.mean.unwrap() - t).abs() < 1e-8,
                    "{}: {:?}",
                    e.estimator,
                    fs.mean
                );
                assert!(fs.variance.unwrap() < 1e-20);
            }
            assert_eq!(e.histogram.total(), e.total_estimates);
        }
        assert!(st.estimator("nhssa").unwrap().false_estimates.is_empty());
        assert!(st.estimator("esprit4").unwrap().false_estimates.is_empty());
    }

    #[test]
    fn runs_are_deterministic_and_self_consistent() {
        let spec = small("ar2", 6);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a, b);
        for e in &a.estimators {
            assert_eq!(e.histogram.total(), e.total_estimates);
            let hits: usize = e.per_truth.iter().map(|f| f.hits).sum();
            assert_eq!(hits + e.false_estimates.len(), e.total_estimates);
            assert!(e.per_truth.iter().all(|f| f.hits <= 6));
            assert_eq!(e.false_per_run.len(), 6);
        }
        let md = render_markdown(&a);
        assert!(md.contains("| 0.04 |"));
        assert!(md.contains("esprit7"));
    }

    #[test]
    fn estimator_failures_are_recorded() {
        let mut spec = small("white", 2);
        // d too large for a 40-sample series: every realization fails
        spec.m = 40;
        spec.estimators = vec![EstimatorSpec::Nhssa {
            config: PipelineConfig::fixed(30, 4),
        }];
        let st = run_experiment(&spec).unwrap();
        assert_eq!(st.estimators[0].failures.len(), 2);
        assert_eq!(st.estimators[0].total_estimates, 0);
    }

    #[test]
    fn separability_reports_merges() {
        let st = run_experiment(&small("separability", 4)).unwrap();
        let m = st.estimator("nhssa").unwrap().merge.clone().unwrap();
        assert!(m.merged <= 4);
        assert!(m.spiral.is_some());
        assert!(st
            .estimator("esprit2")
            .unwrap()
            .merge
            .as_ref()
            .unwrap()
            .spiral
            .is_none());
    }

    #[test]
    fn variance_does_not_grow_as_noise_shrinks() {
        let mut prev = [f64::INFINITY; 4];
        for eps in [0.1, 0.01, 0.001] {
            let mut spec = small("white", 8);
            spec.noise.epsilon = eps;
            spec.estimators.truncate(1);
            let st = run_experiment(&spec).unwrap();
            for (i, f) in st.estimators[0].per_truth.iter().enumerate() {
                assert_eq!(f.hits, 8, "eps {eps} truth {}", f.truth);
                let v = f.variance.unwrap();
                assert!(
                    v <= prev[i] * 1.0001 + 1e-18,
                    "eps {eps} truth {}: {v} > {}",
                    f.truth,
                    prev[i]
                );
                prev[i] = v;
            }
        }
    }
}
