use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ActiveSubspace;
use crate::error::{Error, Result};
use crate::format::{check_version, FORMAT_VERSION};

/// On-disk form of an [`ActiveSubspace`]; `eigenvectors` is row-major with
/// eigenvectors as columns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceFile {
    pub version: String,
    pub p: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<f64>,
    pub chosen_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_scores: Option<Vec<f64>>,
    pub prior_digest: String,
    pub model_digest: String,
    #[serde(default)]
    pub clamped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

impl From<&ActiveSubspace> for SubspaceFile {
    fn from(s: &ActiveSubspace) -> Self {
        SubspaceFile {
            version: FORMAT_VERSION.into(),
            p: s.p(),
            eigenvalues: s.eigenvalues.clone(),
            eigenvectors: s.eigenvectors.transpose().iter().copied().collect(),
            chosen_dim: s.chosen_dim,
            activity_scores: s.activity_scores.clone(),
            prior_digest: s.prior_digest.clone(),
            model_digest: s.model_digest.clone(),
            clamped: s.clamped,
            manifest: None,
        }
    }
}

impl TryFrom<SubspaceFile> for ActiveSubspace {
    type Error = Error;
    fn try_from(f: SubspaceFile) -> Result<Self> {
        check_version(&f.version)?;
        if f.eigenvalues.len() != f.p || f.eigenvectors.len() != f.p * f.p {
            return Err(Error::Format(format!(
                "eigenpairs do not match p = {}",
                f.p
            )));
        }
        if f.activity_scores.as_ref().is_some_and(|a| a.len() != f.p) {
            return Err(Error::Format("activity scores do not match p".into()));
        }
        if f.chosen_dim.is_some_and(|r| r > f.p) {
            return Err(Error::Format("chosen dimension exceeds p".into()));
        }
        Ok(ActiveSubspace {
            eigenvalues: f.eigenvalues,
            eigenvectors: DMatrix::from_row_slice(f.p, f.p, &f.eigenvectors),
            chosen_dim: f.chosen_dim,
            activity_scores: f.activity_scores,
            prior_digest: f.prior_digest,
            model_digest: f.model_digest,
            clamped: f.clamped,
        })
    }
}

impl ActiveSubspace {
    pub fn to_file(&self) -> SubspaceFile {
        SubspaceFile::from(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        ActiveSubspace::try_from(serde_json::from_str::<SubspaceFile>(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Projected coordinates as CSV with header `u1,…,ur`, plus a trailing `y`
/// column when a response is given.
pub fn write_projection_csv<W: Write>(
    projected: &DMatrix<f64>,
    response: Option<&[f64]>,
    w: W,
) -> Result<()> {
    if let Some(y) = response {
        if y.len() != projected.nrows() {
            return Err(Error::DimensionMismatch {
                expected: projected.nrows(),
                got: y.len(),
            });
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=projected.ncols()).map(|k| format!("u{k}")).collect();
    if response.is_some() {
        header.push("y".into());
    }
    out.write_record(&header)?;
    for r in 0..projected.nrows() {
        let mut row: Vec<String> = projected.row(r).iter().map(|v| format!("{v:e}")).collect();
        if let Some(y) = response {
            row.push(format!("{:e}", y[r]));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
