//! End-to-end decomposition: embedding, pencil, projection, thresholding,
//! classification, refinement and reconstruction.

use serde::{Deserialize, Serialize};

use crate::components::{analyze_rows, ComponentRecord, Label, Thresholds};
use crate::embedding::{
    condition_grid_search, estimate_model_order, lag_covariances, trajectory_matrices,
    ConditionGrid, EmbeddingConfig, OrderMethod,
};
use crate::error::{NhssaError, Result};
use crate::esprit::{merge_conjugate_cycles, refine_single};
use crate::pencil::{
    project_series, svd_pencil, threshold_filter, PencilDecomposition, RankPolicy, ThresholdSplit,
    ZSequences,
};
use crate::reconstruction::{
    all_component_series, group_from_components, Provenance, Reconstruction, Selection,
};
use crate::scalar::Real;
use crate::signal::ComplexSeries;

/// Default modulus threshold on generalized eigenvalues.
pub const DEFAULT_LAMBDA_C: f64 = 0.8;

/// Two refined frequencies of opposite sign pair up when their magnitudes
/// differ by at most this many cycles.
pub const PAIR_TOL: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EmbeddingChoice {
    Fixed {
        d: usize,
        mbar: usize,
    },
    /// Grid search; `d_range` defaults to `[2n + 2, 6n]` from an order estimate.
    Auto {
        d_range: Option<(usize, usize)>,
        mbar_range: (usize, usize),
    },
}

impl EmbeddingChoice {
    pub fn auto() -> Self {
        EmbeddingChoice::Auto {
            d_range: None,
            mbar_range: (1, 12),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub embedding: EmbeddingChoice,
    pub rank_policy: RankPolicy,
    pub lambda_c: f64,
    pub thresholds: Thresholds,
}

impl PipelineConfig {
    pub fn fixed(d: usize, mbar: usize) -> Self {
        Self {
            embedding: EmbeddingChoice::Fixed { d, mbar },
            rank_policy: RankPolicy::default(),
            lambda_c: DEFAULT_LAMBDA_C,
            thresholds: Thresholds::default(),
        }
    }

    pub fn with_rank(mut self, policy: RankPolicy) -> Self {
        self.rank_policy = policy;
        self
    }

    pub fn with_lambda_c(mut self, lambda_c: f64) -> Self {
        self.lambda_c = lambda_c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_c > 0.0 && self.lambda_c < 1.5) {
            return Err(NhssaError::InvalidInput(format!(
                "lambda_c {} outside (0, 1.5)",
                self.lambda_c
            )));
        }
        match self.embedding {
            EmbeddingChoice::Fixed { d, mbar } => {
                EmbeddingConfig::new(d, mbar)?;
            }
            EmbeddingChoice::Auto {
                d_range,
                mbar_range,
            } => {
                let bad = |(a, b): (usize, usize)| a == 0 || a > b;
                if bad(mbar_range) || d_range.is_some_and(|r| bad(r) || r.0 < 2) {
                    return Err(NhssaError::InvalidInput(
                        "empty or zero-based grid range".into(),
                    ));
                }
            }
        }
        if let RankPolicy::Fixed { rank: 0 } = self.rank_policy {
            return Err(NhssaError::InvalidInput(
                "fixed rank must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything derived from the labels; recomputed whenever a label changes.
#[derive(Debug, Clone)]
pub struct Derived<T: Real> {
    pub selection: Selection,
    pub reconstruction: Reconstruction<T>,
    /// Non-negative and merged over conjugate pairs for real input, signed otherwise.
    pub frequencies: Vec<f64>,
    pub unpaired: bool,
}

/// Refines signal rows lacking a frequency, then regroups and re-sums.
pub fn derive_outputs<T: Real>(
    records: &mut [ComponentRecord],
    comps: &[ComplexSeries<T>],
    f: &ComplexSeries<T>,
    provenance: Provenance,
) -> Result<Derived<T>> {
    for rec in records.iter_mut() {
        if rec.label.is_signal() && rec.cycles.is_none() {
            rec.cycles = Some(refine_single(&rec.z_row)?.cycles);
        }
    }
    let signal: Vec<usize> = records
        .iter()
        .filter(|r| r.label.is_signal())
        .map(|r| r.index)
        .collect();
    let selection = Selection::from_signal(records.len(), signal.iter().copied(), provenance)?;
    let reconstruction = group_from_components(&selection, comps, f)?;
    let signed: Vec<f64> = signal.iter().filter_map(|&j| records[j].cycles).collect();
    let (frequencies, unpaired) = if f.is_real(T::zero()) {
        merge_conjugate_cycles(&signed, PAIR_TOL)
    } else {
        let mut s = signed;
        s.sort_by(|a, b| a.total_cmp(b));
        (s, false)
    };
    Ok(Derived {
        selection,
        reconstruction,
        frequencies,
        unpaired,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineResult<T: Real> {
    pub embedding: EmbeddingConfig,
    pub grid: Option<ConditionGrid>,
    pub pencil: PencilDecomposition<T>,
    pub z: ZSequences<T>,
    pub split: ThresholdSplit,
    pub records: Vec<ComponentRecord>,
    pub components: Vec<ComplexSeries<T>>,
    pub derived: Derived<T>,
    pub warnings: Vec<String>,
}

impl<T: Real> PipelineResult<T> {
    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn kept_count(&self) -> usize {
        self.split.kept.len()
    }
}

fn resolve_embedding<T: Real>(
    f: &ComplexSeries<T>,
    choice: &EmbeddingChoice,
) -> Result<(EmbeddingConfig, Option<ConditionGrid>)> {
    match *choice {
        EmbeddingChoice::Fixed { d, mbar } => Ok((EmbeddingConfig::new(d, mbar)?, None)),
        EmbeddingChoice::Auto {
            d_range,
            mbar_range,
        } => {
            let (dlo, dhi) = match d_range {
                Some(r) => r,
                None => {
                    let probe_d = (f.len() / 3).clamp(2, 30);
                    let probe = EmbeddingConfig::new(probe_d, 1)?;
                    let tp = trajectory_matrices(f, &probe)?;
                    let n = estimate_model_order(&lag_covariances(&tp).g0, OrderMethod::default())?;
                    if n == 0 {
                        (4, 12)
                    } else {
                        (2 * n + 2, 6 * n)
                    }
                }
            };
            let grid = condition_grid_search(f, dlo..=dhi, mbar_range.0..=mbar_range.1)?;
            let cell = grid.argmin;
            log::info!("grid search picked d = {}, mbar = {}", cell.d, cell.mbar);
            Ok((EmbeddingConfig::new(cell.d, cell.mbar)?, Some(grid)))
        }
    }
}

pub fn run_pipeline<T: Real>(
    f: &ComplexSeries<T>,
    cfg: &PipelineConfig,
) -> Result<PipelineResult<T>> {
    cfg.validate()?;
    if f.is_empty() {
        return Err(NhssaError::InvalidInput("empty series".into()));
    }
    let (embedding, grid) = resolve_embedding(f, &cfg.embedding)?;
    let m = f.len();
    if !embedding.covers(m) {
        return Err(NhssaError::InvalidInput(format!(
            "embedding d = {}, mbar = {} leaves samples of a length-{m} series uncovered",
            embedding.d, embedding.mbar
        )));
    }
    let tp = trajectory_matrices(f, &embedding)?;
    let pencil = svd_pencil(&tp, cfg.rank_policy)?;
    let z = project_series(&pencil, f, &embedding)?;
    let split = threshold_filter(&pencil.eigvals, cfg.lambda_c)?;
    let mut kept = vec![false; pencil.rank];
    split.kept.iter().for_each(|&j| kept[j] = true);
    let mut records = analyze_rows(&z.z, &pencil.eigvals, &kept, &cfg.thresholds)?;
    let components = all_component_series(&pencil, &z, &embedding)?;
    let derived = derive_outputs(&mut records, &components, f, Provenance::Auto)?;
    let mut warnings = pencil.warnings.clone();
    if pencil.degenerate {
        warnings.push("repeated generalized eigenvalues".into());
    }
    if derived.unpaired {
        warnings.push("signal frequencies without a conjugate partner".into());
    }
    Ok(PipelineResult {
        embedding,
        grid,
        pencil,
        z,
        split,
        records,
        components,
        derived,
        warnings,
    })
}
