//! Affine input maps `z = A x + b`.
//!
//! A model trained on rescaled or whitened inputs records the map from the
//! native inputs `x` to its own coordinates `z`. Gradients and C matrices move
//! between the two coordinate systems through `A`: `C_x = Aᵀ C_z A`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest condition number accepted for the linear part.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub enum Linear {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineMapRepr", into = "AffineMapRepr")]
pub struct AffineMap {
    linear: Linear,
    offset: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AffineMapRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagonal: Option<Vec<f64>>,
    offset: Vec<f64>,
}

impl TryFrom<AffineMapRepr> for AffineMap {
    type Error = Error;

    fn try_from(r: AffineMapRepr) -> Result<Self> {
        match (r.matrix, r.diagonal) {
            (Some(rows), None) => {
                let p = rows.len();
                if rows.iter().any(|row| row.len() != p) {
                    return Err(Error::InvalidTransform("matrix must be square".into()));
                }
                let m = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
                AffineMap::dense(m, r.offset)
            }
            (None, Some(d)) => AffineMap::diagonal(d, r.offset),
            _ => Err(Error::InvalidTransform(
                "exactly one of `matrix` or `diagonal` is required".into(),
            )),
        }
    }
}

impl From<AffineMap> for AffineMapRepr {
    fn from(m: AffineMap) -> Self {
        match m.linear {
            Linear::Diagonal(d) => AffineMapRepr {
                matrix: None,
                diagonal: Some(d),
                offset: m.offset,
            },
            Linear::Dense(a) => AffineMapRepr {
                matrix: Some(
                    (0..a.nrows())
                        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
                        .collect(),
                ),
                diagonal: None,
                offset: m.offset,
            },
        }
    }
}

impl AffineMap {
    pub fn identity(p: usize) -> Self {
        AffineMap {
            linear: Linear::Diagonal(vec![1.0; p]),
            offset: vec![0.0; p],
        }
    }

    pub fn diagonal(diag: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if diag.len() != offset.len() {
            return Err(Error::DimensionMismatch {
                expected: diag.len(),
                got: offset.len(),
            });
        }
        if diag.iter().chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
            (lo.min(d.abs()), hi.max(d.abs()))
        });
        if !diag.is_empty() && (lo == 0.0 || hi / lo > MAX_CONDITION) {
            return Err(Error::InvalidTransform("linear part is singular".into()));
        }
        Ok(AffineMap {
            linear: Linear::Diagonal(diag),
            offset,
        })
    }

    pub fn dense(matrix: DMatrix<f64>, offset: Vec<f64>) -> Result<Self> {
        let p = matrix.nrows();
        if matrix.ncols() != p {
            return Err(Error::InvalidTransform("matrix must be square".into()));
        }
        if offset.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: offset.len(),
            });
        }
        if matrix.iter().chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        if p > 0 {
            let sv = matrix.clone().singular_values();
            let hi = sv.max();
            let lo = sv.min();
            if lo <= 0.0 || hi / lo > MAX_CONDITION {
                return Err(Error::InvalidTransform(format!(
                    "linear part is singular or ill-conditioned (condition {:e})",
                    hi / lo
                )));
            }
        }
        Ok(AffineMap {
            linear: Linear::Dense(matrix),
            offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn linear(&self) -> &Linear {
        &self.linear
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.linear, Linear::Diagonal(_))
    }

    /// The linear part as a dense matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.linear {
            Linear::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            Linear::Dense(a) => a.clone(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.linear {
            Linear::Diagonal(d) => x
                .iter()
                .zip(d)
                .zip(&self.offset)
                .map(|((x, d), b)| d * x + b)
                .collect(),
            Linear::Dense(a) => (0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum::<f64>() + self.offset[i])
                .collect(),
        }
    }

    /// `Aᵀ g`: maps a gradient in model coordinates back to native coordinates.
    pub fn pull_gradient(&self, g: &[f64]) -> Vec<f64> {
        match &self.linear {
            Linear::Diagonal(d) => g.iter().zip(d).map(|(g, d)| g * d).collect(),
            Linear::Dense(a) => (0..a.ncols())
                .map(|j| (0..a.nrows()).map(|i| a[(i, j)] * g[i]).sum())
                .collect(),
        }
    }

    /// For a generalized permutation matrix (one nonzero per row and column),
    /// returns `(source column, scale)` per output row.
    pub fn as_monomial(&self) -> Option<Vec<(usize, f64)>> {
        match &self.linear {
            Linear::Diagonal(d) => Some(d.iter().copied().enumerate().collect()),
            Linear::Dense(a) => {
                let p = a.nrows();
                let mut seen = vec![false; p];
                let mut out = Vec::with_capacity(p);
                for i in 0..p {
                    let nz: Vec<usize> = (0..p).filter(|&j| a[(i, j)] != 0.0).collect();
                    if nz.len() != 1 || seen[nz[0]] {
                        return None;
                    }
                    seen[nz[0]] = true;
                    out.push((nz[0], a[(i, nz[0])]));
                }
                Some(out)
            }
        }
    }

    pub fn inverse(&self) -> AffineMap {
        match &self.linear {
            Linear::Diagonal(d) => {
                let inv: Vec<f64> = d.iter().map(|d| 1.0 / d).collect();
                let off = self.offset.iter().zip(&inv).map(|(b, i)| -b * i).collect();
                AffineMap {
                    linear: Linear::Diagonal(inv),
                    offset: off,
                }
            }
            Linear::Dense(a) => {
                // Invertibility was checked at construction.
                let inv = a.clone().try_inverse().expect("invertible by construction");
                let b = nalgebra::DVector::from_column_slice(&self.offset);
                let off = -(&inv * b);
                AffineMap {
                    linear: Linear::Dense(inv),
                    offset: off.as_slice().to_vec(),
                }
            }
        }
    }

    /// `Aᵀ C A`: C in model coordinates to C in native coordinates.
    pub fn pull_cmatrix(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let a = self.matrix();
        symmetrize(a.transpose() * c * a)
    }

    /// `A⁻ᵀ C A⁻¹`: C in native coordinates to C in model coordinates.
    pub fn push_cmatrix(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        self.inverse().pull_cmatrix(c)
    }
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
