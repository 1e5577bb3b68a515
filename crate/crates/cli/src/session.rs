//! On-disk session: everything the inspector needs to relabel components and
//! re-sum the reconstruction without touching the pencil again.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nhssa::components::{ComponentExport, ComponentRecord, Label};
use nhssa::embedding::EmbeddingConfig;
use nhssa::io::SeriesFile;
use nhssa::pipeline::{derive_outputs, Derived, PipelineConfig};
use nhssa::reconstruction::{Provenance, Selection};
use nhssa::{Decomposition, Series};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const SCHEMA: &str = "nhssa/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDump {
    pub rank: usize,
    pub lambda_c: f64,
    pub eigvals: Vec<[f64; 2]>,
    pub abs_eigvals: Vec<f64>,
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedDump {
    pub frequencies: Vec<f64>,
    pub signal_rows: Vec<usize>,
    pub noise_rows: Vec<usize>,
    pub provenance: Provenance,
    pub residual_norm: f64,
    pub signal_empty: bool,
    pub unpaired: bool,
}

impl DerivedDump {
    fn new(d: &Derived<f64>) -> Self {
        Self {
            frequencies: d.frequencies.clone(),
            signal_rows: d.selection.signal_rows.iter().copied().collect(),
            noise_rows: d.selection.noise_rows.iter().copied().collect(),
            provenance: d.selection.provenance,
            residual_norm: d.reconstruction.residual_norm,
            signal_empty: d.reconstruction.signal_empty,
            unpaired: d.unpaired,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp_ms: u64,
    pub component: usize,
    pub old: Label,
    pub new: Label,
    pub source: String,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub schema: String,
    pub id: String,
    pub seed: Option<u64>,
    pub source: String,
    pub config: PipelineConfig,
    pub embedding: EmbeddingConfig,
    pub input: SeriesFile,
    pub decomposition: DecompositionDump,
    pub records: Vec<ComponentRecord>,
    /// Back-mapped series of every retained component.
    pub component_series: Vec<SeriesFile>,
    pub derived: DerivedDump,
    pub warnings: Vec<String>,
    pub version: u64,
    pub audit: Vec<AuditEntry>,
}

/// Stable id: hash of the input samples and the configuration.
pub fn session_id(input: &SeriesFile, config: &PipelineConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(input)?);
    h.update(serde_json::to_vec(config)?);
    Ok(hex::encode(&h.finalize()[..8]))
}

/// JSON with object keys in sorted order.
pub fn to_sorted_json<S: Serialize>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string(&v)?;
    s.push('\n');
    Ok(s)
}

/// Live session: the file plus the series it implies.
#[derive(Debug, Clone)]
pub struct Session {
    pub file: SessionFile,
    pub f: Series,
    pub components: Vec<Series>,
    pub derived: Derived<f64>,
}

impl Session {
    pub fn from_result(
        res: Decomposition,
        f: &Series,
        config: &PipelineConfig,
        seed: Option<u64>,
        source: &str,
    ) -> Result<Self> {
        let input = SeriesFile::from_series(f, None);
        let id = session_id(&input, config)?;
        let eigvals: Vec<[f64; 2]> = res.pencil.eigvals.iter().map(|z| [z.re, z.im]).collect();
        let decomposition = DecompositionDump {
            rank: res.pencil.rank,
            lambda_c: config.lambda_c,
            abs_eigvals: res.pencil.eigvals.iter().map(|z| z.norm()).collect(),
            eigvals,
            kept: res.split.kept.clone(),
            discarded: res.split.discarded.clone(),
            degenerate: res.pencil.degenerate,
        };
        let component_series = res
            .components
            .iter()
            .enumerate()
            .map(|(j, c)| SeriesFile::from_series(c, Some(&format!("component_{j}"))))
            .collect();
        let file = SessionFile {
            schema: SCHEMA.into(),
            id,
            seed,
            source: source.into(),
            config: config.clone(),
            embedding: res.embedding,
            input,
            decomposition,
            records: res.records,
            component_series,
            derived: DerivedDump::new(&res.derived),
            warnings: res.warnings,
            version: 0,
            audit: Vec::new(),
        };
        Ok(Self {
            file,
            f: f.clone(),
            components: res.components,
            derived: res.derived,
        })
    }

    pub fn from_file(mut file: SessionFile) -> Result<Self> {
        if file.schema != SCHEMA {
            return Err(CliError::Session(format!(
                "unsupported schema '{}'",
                file.schema
            )));
        }
        if file.records.len() != file.component_series.len() {
            return Err(CliError::Session(
                "records and component series differ in count".into(),
            ));
        }
        let f: Series = file.input.to_series()?;
        let components = file
            .component_series
            .iter()
            .map(|s| s.to_series())
            .collect::<nhssa::Result<Vec<Series>>>()?;
        if components.iter().any(|c| c.len() != f.len()) {
            return Err(CliError::Session(
                "component series length differs from the input".into(),
            ));
        }
        let provenance = file.derived.provenance;
        let derived = derive_outputs(&mut file.records, &components, &f, provenance)?;
        file.derived = DerivedDump::new(&derived);
        Ok(Self {
            file,
            f,
            components,
            derived,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        to_sorted_json(&self.file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| CliError::io(path, e))
    }

    pub fn version(&self) -> u64 {
        self.file.version
    }

    pub fn rank(&self) -> usize {
        self.file.records.len()
    }

    pub fn exports(&self) -> Vec<ComponentExport> {
        self.file.records.iter().map(|r| r.export()).collect()
    }

    /// Applies a human label, re-derives frequencies and the reconstruction,
    /// bumps the version and logs the change.
    pub fn set_label(&mut self, j: usize, label: Label) -> Result<&AuditEntry> {
        let rec = self
            .file
            .records
            .get_mut(j)
            .ok_or_else(|| CliError::Usage(format!("no component {j}")))?;
        let old = rec.label;
        rec.set_human_label(label);
        if !label.is_signal() {
            rec.cycles = None;
        }
        let derived = derive_outputs(
            &mut self.file.records,
            &self.components,
            &self.f,
            Provenance::Human,
        )?;
        self.file.derived = DerivedDump::new(&derived);
        self.derived = derived;
        self.file.version += 1;
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        self.file.audit.push(AuditEntry {
            timestamp_ms,
            component: j,
            old,
            new: label,
            source: "human".into(),
            version: self.file.version,
        });
        Ok(self.file.audit.last().expect("just pushed"))
    }

    pub fn selection(&self) -> &Selection {
        &self.derived.selection
    }
}
