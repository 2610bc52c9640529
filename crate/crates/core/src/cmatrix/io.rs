use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CMatrix, Scale};
use crate::error::{Error, Result};
use crate::format::{check_version, FORMAT_VERSION};

pub const CMATRIX_FORMAT_VERSION: &str = FORMAT_VERSION;

/// On-disk form of a [`CMatrix`]; `values` is row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CMatrixFile {
    pub version: String,
    pub p: usize,
    pub scale: Scale,
    pub values: Vec<f64>,
    pub prior_digest: String,
    pub model_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

impl From<&CMatrix> for CMatrixFile {
    fn from(c: &CMatrix) -> Self {
        CMatrixFile {
            version: CMATRIX_FORMAT_VERSION.into(),
            p: c.p(),
            scale: c.scale,
            values: c.values.transpose().iter().copied().collect(),
            prior_digest: c.prior_digest.clone(),
            model_digest: c.model_digest.clone(),
            manifest: None,
        }
    }
}

impl TryFrom<CMatrixFile> for CMatrix {
    type Error = Error;
    fn try_from(f: CMatrixFile) -> Result<Self> {
        check_version(&f.version)?;
        if f.values.len() != f.p * f.p {
            return Err(Error::Format(format!(
                "`values` needs {} entries for p = {}, got {}",
                f.p * f.p,
                f.p,
                f.values.len()
            )));
        }
        if f.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite matrix entry".into()));
        }
        Ok(CMatrix {
            values: DMatrix::from_row_slice(f.p, f.p, &f.values),
            scale: f.scale,
            prior_digest: f.prior_digest,
            model_digest: f.model_digest,
        })
    }
}

impl CMatrix {
    pub fn to_file(&self) -> CMatrixFile {
        CMatrixFile::from(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        CMatrix::try_from(serde_json::from_str::<CMatrixFile>(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Raw matrix as CSV, one row per line, no header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for r in 0..self.p() {
            out.write_record(self.values.row(r).iter().map(|v| format!("{v:e}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_csv() {
        let c = CMatrix {
            values: DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0 / 3.0]),
            scale: Scale::Unit,
            prior_digest: "a".into(),
            model_digest: "b".into(),
        };
        assert_eq!(CMatrix::from_json(&c.to_json()).unwrap(), c);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: Vec<f64> = text
            .lines()
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(back, vec![1.0, 0.25]);
    }

    #[test]
    fn rejects_wrong_shape() {
        let s = r#"{"version":"1.0","p":2,"scale":"native","values":[1,2,3],"prior_digest":"","model_digest":""}"#;
        assert!(CMatrix::from_json(s).is_err());
    }
}
