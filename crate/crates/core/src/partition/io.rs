use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoxPartition, Hyperrect, LinearConstraint, LinearConstraintSet};
use crate::error::{Error, Result};
use crate::format::{check_version, digest, FORMAT_VERSION};

/// A constraint row, either structured or as text such as `"-1 1 <= 0"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintRow {
    Text(String),
    Row(LinearConstraint),
}

impl ConstraintRow {
    fn parse(&self) -> Result<LinearConstraint> {
        let text = match self {
            ConstraintRow::Row(r) => return Ok(r.clone()),
            ConstraintRow::Text(t) => t,
        };
        let (lhs, rhs, flip) =
            if let Some((l, r)) = text.split_once("<=").or_else(|| text.split_once('≤')) {
                (l, r, false)
            } else if let Some((l, r)) = text.split_once(">=").or_else(|| text.split_once('≥')) {
                (l, r, true)
            } else {
                return Err(Error::Format(format!(
                    "constraint `{text}` needs `<=` or `>=`"
                )));
            };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number `{s}` in constraint `{text}`")))
        };
        let sign = if flip { -1.0 } else { 1.0 };
        let coeffs = lhs
            .split_whitespace()
            .map(|s| num(s).map(|v| sign * v))
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearConstraint {
            coeffs,
            rhs: sign * num(rhs.trim())?,
        })
    }
}

/// Constraint input. `lower`/`upper` default to the unit cube.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub version: String,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default)]
    pub constraints: Vec<ConstraintRow>,
}

impl ConstraintFile {
    pub fn into_set(self) -> Result<LinearConstraintSet> {
        check_version(&self.version)?;
        let rows = self
            .constraints
            .iter()
            .map(ConstraintRow::parse)
            .collect::<Result<Vec<_>>>()?;
        LinearConstraintSet::new(
            self.lower.unwrap_or_else(|| vec![0.0; self.p]),
            self.upper.unwrap_or_else(|| vec![1.0; self.p]),
            rows,
        )
    }
}

impl LinearConstraintSet {
    pub fn to_file(&self) -> ConstraintFile {
        ConstraintFile {
            version: FORMAT_VERSION.into(),
            p: self.p(),
            lower: Some(self.lower.clone()),
            upper: Some(self.upper.clone()),
            constraints: self.rows.iter().cloned().map(ConstraintRow::Row).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ConstraintFile>(s)?.into_set()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn digest(&self) -> String {
        digest(&self.to_file())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub weight: f64,
}

/// Partition output: boxes with weights and the parameters used.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionFile {
    pub version: String,
    pub p: usize,
    pub boxes: Vec<WeightedBox>,
    pub covered_volume: f64,
    pub min_volume: f64,
    pub split_dims: Vec<usize>,
    #[serde(default)]
    pub constraints_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

impl BoxPartition {
    pub fn to_file(&self, constraints: &LinearConstraintSet) -> PartitionFile {
        PartitionFile {
            version: FORMAT_VERSION.into(),
            p: constraints.p(),
            boxes: self
                .boxes
                .iter()
                .zip(&self.weights)
                .map(|(b, &weight)| WeightedBox {
                    lower: b.lower.clone(),
                    upper: b.upper.clone(),
                    weight,
                })
                .collect(),
            covered_volume: self.covered_volume,
            min_volume: self.min_volume,
            split_dims: self.split_dims.clone(),
            constraints_digest: constraints.digest(),
            manifest: None,
        }
    }
}

impl TryFrom<PartitionFile> for BoxPartition {
    type Error = Error;
    fn try_from(f: PartitionFile) -> Result<Self> {
        check_version(&f.version)?;
        if f.boxes
            .iter()
            .any(|b| b.lower.len() != f.p || b.upper.len() != f.p)
        {
            return Err(Error::Format(format!(
                "box corners must have {} entries",
                f.p
            )));
        }
        let (boxes, weights) = f
            .boxes
            .into_iter()
            .map(|b| {
                (
                    Hyperrect {
                        lower: b.lower,
                        upper: b.upper,
                    },
                    b.weight,
                )
            })
            .unzip();
        Ok(BoxPartition {
            boxes,
            weights,
            covered_volume: f.covered_volume,
            split_dims: f.split_dims,
            min_volume: f.min_volume,
        })
    }
}
