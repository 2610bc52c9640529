use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BasisFunction, DatasetSpec, Hinge, MarsModel};
use crate::affine::AffineMap;
use crate::error::{Error, Result};
use crate::format::{check_version, digest, FORMAT_VERSION};

pub const MODEL_FORMAT_VERSION: &str = FORMAT_VERSION;

/// On-disk form of a [`MarsModel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub p: usize,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub basis: Vec<Vec<Hinge>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_transform: Option<AffineMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

impl From<&MarsModel> for ModelFile {
    fn from(m: &MarsModel) -> Self {
        ModelFile {
            version: MODEL_FORMAT_VERSION.to_string(),
            p: m.p,
            intercept: m.intercept,
            coefficients: m.coefficients.clone(),
            basis: m.basis.iter().map(|b| b.terms().to_vec()).collect(),
            input_transform: m.input_transform.clone(),
            manifest: None,
        }
    }
}

impl TryFrom<ModelFile> for MarsModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        check_version(&f.version)?;
        let basis = f
            .basis
            .into_iter()
            .map(BasisFunction::new)
            .collect::<Result<Vec<_>>>()?;
        MarsModel::new(f.p, f.intercept, f.coefficients, basis, f.input_transform)
    }
}

impl MarsModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("model file: {e}")))?;
        MarsModel::try_from(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Content digest of the model fields (manifest excluded).
    pub fn digest(&self) -> String {
        digest(&ModelFile::from(self))
    }
}

/// Reads a rectangular numeric CSV into a matrix. A first row that does not
/// parse as numbers is taken as a header; blank rows are skipped.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::InvalidData(format!("row {}: {e}", line + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("dataset has no data rows".into()));
    }
    let width = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::InvalidData(format!(
            "row {} has {} columns, expected {width}",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |r, c| rows[r][c]))
}

/// Reads a numeric CSV: first `p` columns are inputs, the last is the
/// response.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<DatasetSpec> {
    let m = read_matrix_csv(reader)?;
    if m.ncols() < 2 {
        return Err(Error::InvalidData(
            "need at least one input column and a response column".into(),
        ));
    }
    let p = m.ncols() - 1;
    let response = m.column(p).iter().copied().collect();
    DatasetSpec::new(m.columns(0, p).into_owned(), response)
}
