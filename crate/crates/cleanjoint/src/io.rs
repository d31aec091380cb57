//! File formats: CSV matrices, single-column integer labels, and the
//! JSON report schema.
//!
//! CSV files are UTF-8 and comma-separated, one example per row, with
//! an optional single header row that is auto-detected (any cell of the
//! first row failing to parse as a number marks it as a header). Parse
//! errors carry 1-based row and column positions. Floats are written in
//! Rust's shortest round-trip decimal form, so write-then-read
//! reproduces every value bit-for-bit.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::{CaseOutcome, ErrorMetrics, JointError, TheoremSuiteReport};
use crate::noise_lab::LearnabilityReport;
use crate::rank_prune::ErrorReport;

/// I/O and parse failures, kept separate from validation errors so the
/// CLI can map them to distinct exit codes.
#[derive(Debug)]
pub enum IoError {
    Io {
        path: String,
        source: std::io::Error,
    },
    Parse {
        path: String,
        row: usize,
        col: usize,
        detail: String,
    },
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Io { path, source } => write!(f, "{path}: {source}"),
            IoError::Parse {
                path,
                row,
                col,
                detail,
            } => write!(f, "{path}: row {row}, column {col}: {detail}"),
        }
    }
}

impl std::error::Error for IoError {}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn split_rows(text: &str) -> Vec<(usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| (idx + 1, line.split(',').map(str::trim).collect()))
        .collect()
}

/// Read a rectangular matrix of floats, skipping a header row if the
/// first row has any non-numeric cell.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, IoError> {
    let text = read_to_string(path)?;
    let mut rows = split_rows(&text);
    if rows.is_empty() {
        return Err(IoError::Parse {
            path: path.display().to_string(),
            row: 1,
            col: 1,
            detail: "file contains no data rows".into(),
        });
    }
    if rows[0].1.iter().any(|cell| cell.parse::<f64>().is_err()) {
        rows.remove(0);
        if rows.is_empty() {
            return Err(IoError::Parse {
                path: path.display().to_string(),
                row: 2,
                col: 1,
                detail: "no data rows after the header".into(),
            });
        }
    }
    let width = rows[0].1.len();
    let mut out = Vec::with_capacity(rows.len());
    for (line_no, cells) in &rows {
        if cells.len() != width {
            return Err(IoError::Parse {
                path: path.display().to_string(),
                row: *line_no,
                col: cells.len().min(width) + 1,
                detail: format!("expected {width} columns, found {}", cells.len()),
            });
        }
        let mut row = Vec::with_capacity(width);
        for (c, cell) in cells.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) => row.push(v),
                Err(_) => {
                    return Err(IoError::Parse {
                        path: path.display().to_string(),
                        row: *line_no,
                        col: c + 1,
                        detail: format!("cannot parse {cell:?} as a number"),
                    })
                }
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Read a single-column integer label file, header auto-detected.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, IoError> {
    let text = read_to_string(path)?;
    let mut rows = split_rows(&text);
    if rows.is_empty() {
        return Err(IoError::Parse {
            path: path.display().to_string(),
            row: 1,
            col: 1,
            detail: "file contains no data rows".into(),
        });
    }
    if rows[0].1.iter().any(|cell| cell.parse::<usize>().is_err()) {
        rows.remove(0);
    }
    let mut out = Vec::with_capacity(rows.len());
    for (line_no, cells) in &rows {
        if cells.len() != 1 {
            return Err(IoError::Parse {
                path: path.display().to_string(),
                row: *line_no,
                col: 2,
                detail: format!("expected a single column, found {}", cells.len()),
            });
        }
        match cells[0].parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) => {
                return Err(IoError::Parse {
                    path: path.display().to_string(),
                    row: *line_no,
                    col: 1,
                    detail: format!("cannot parse {:?} as a label index", cells[0]),
                })
            }
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    std::fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Format a matrix as CSV with shortest round-trip decimals.
pub fn matrix_to_csv(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<(), IoError> {
    write_file(path, &matrix_to_csv(rows))
}

pub fn labels_to_csv(labels: &[usize]) -> String {
    let mut out = String::new();
    for l in labels {
        out.push_str(&format!("{l}\n"));
    }
    out
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), IoError> {
    write_file(path, &labels_to_csv(labels))
}

/// FNV-1a 64-bit checksum, hex-encoded; used to fingerprint input files
/// inside reports.
pub fn fnv1a64(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

// ---------------------------------------------------------------------------
// Report schema
// ---------------------------------------------------------------------------

pub const REPORT_VERSION: u32 = 1;

/// Free-form run metadata. Excluded from determinism guarantees; the
/// CLI omits the whole block under `--no-meta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaBlock {
    pub tool: String,
    pub generated_at_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecksumEntry {
    pub file: String,
    pub fnv1a64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputsBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probs_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<String>,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checksums: Vec<ChecksumEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorsBlock {
    pub noisy: Vec<f64>,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBlock {
    pub name: String,
    pub rank_rule: String,
    pub flagged: Vec<usize>,
    pub scores: Vec<f64>,
}

impl From<&ErrorReport> for MethodBlock {
    fn from(report: &ErrorReport) -> Self {
        Self {
            name: report.method.name().to_string(),
            rank_rule: report.rank_rule.name().to_string(),
            flagged: report.flagged.clone(),
            scores: report.scores.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetricsBlock {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<ErrorMetrics> for ErrorMetricsBlock {
    fn from(m: ErrorMetrics) -> Self {
        Self {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointErrorBlock {
    pub rmse: f64,
    pub max_abs: f64,
}

impl From<JointError> for JointErrorBlock {
    fn from(e: JointError) -> Self {
        Self {
            rmse: e.rmse,
            max_abs: e.max_abs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorMetricsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointErrorBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBoundBlock {
    pub class: usize,
    pub conditional_bound: bool,
    pub product_bound: bool,
    pub n_threshold: f64,
    pub n_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityBlock {
    pub n: f64,
    pub trace_transition: f64,
    pub trace_mixing: f64,
    pub trace_bound: bool,
    pub per_class: Vec<ClassBoundBlock>,
    pub all_pass: bool,
}

impl From<&LearnabilityReport> for LearnabilityBlock {
    fn from(r: &LearnabilityReport) -> Self {
        Self {
            n: r.n,
            trace_transition: r.trace_transition,
            trace_mixing: r.trace_mixing,
            trace_bound: r.trace_bound,
            per_class: r
                .per_class
                .iter()
                .map(|c| ClassBoundBlock {
                    class: c.class,
                    conditional_bound: c.conditional_bound,
                    product_bound: c.product_bound,
                    n_threshold: c.n_threshold,
                    n_bound: c.n_bound,
                })
                .collect(),
            all_pass: r.all_pass(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCaseBlock {
    pub seed: u64,
    pub classes: usize,
    pub noise_fraction: f64,
    pub sparsity: f64,
    pub case: String,
    /// "pass", "fail", or "hypotheses-not-met".
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion_changed_under_inflation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteBlock {
    pub passed: usize,
    pub failed: usize,
    pub hypotheses_not_met: usize,
    pub confusion_changed_cases: usize,
    pub cases: Vec<SuiteCaseBlock>,
}

impl From<&TheoremSuiteReport> for SuiteBlock {
    fn from(r: &TheoremSuiteReport) -> Self {
        Self {
            passed: r.passed(),
            failed: r.failed(),
            hypotheses_not_met: r.gated(),
            confusion_changed_cases: r.confusion_changed_cases(),
            cases: r
                .cases
                .iter()
                .map(|c| {
                    let (status, detail) = match &c.outcome {
                        CaseOutcome::Pass => ("pass".to_string(), None),
                        CaseOutcome::Fail(d) => ("fail".to_string(), Some(d.clone())),
                        CaseOutcome::HypothesesNotMet(d) => {
                            ("hypotheses-not-met".to_string(), Some(d.clone()))
                        }
                    };
                    SuiteCaseBlock {
                        seed: c.seed,
                        classes: c.classes,
                        noise_fraction: c.noise_fraction,
                        sparsity: c.sparsity,
                        case: c.case.clone(),
                        status,
                        detail,
                        confusion_changed_under_inflation: c.confusion_changed_under_inflation,
                    }
                })
                .collect(),
        }
    }
}

/// The strict subsets of this schema that each command emits are
/// "report fragments"; every field is optional except the version.
/// Matrices are serialized row-major with full double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<InputsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confident_joint: Option<Vec<Vec<u64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_transition: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixing: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priors: Option<PriorsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kept: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learnability: Option<LearnabilityBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ReportFile {
    pub fn new() -> Self {
        Self {
            version: REPORT_VERSION,
            meta: None,
            inputs: None,
            thresholds: None,
            confident_joint: None,
            joint: None,
            noise_transition: None,
            mixing: None,
            priors: None,
            sparsity: None,
            methods: Vec::new(),
            class_weights: None,
            kept: None,
            learnability: None,
            metrics: None,
            suite: None,
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_file(path, &self.to_json())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = read_to_string(path)?;
        Self::from_json(&text).map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            row: e.line(),
            col: e.column(),
            detail: e.to_string(),
        })
    }
}

impl Default for ReportFile {
    fn default() -> Self {
        Self::new()
    }
}

/// Parse a flagged-index file (single integer column) into a set.
pub fn read_index_set(path: &Path) -> Result<BTreeSet<usize>, IoError> {
    Ok(read_labels(path)?.into_iter().collect())
}
