//! MARS tensor-product surrogates.
//!
//! A model is `f(z) = γ₀ + Σ_m γ_m B_m(z)` with each basis function a product of
//! hinges `[s (z_i - t)]_+` over a subset of the inputs. `z` lives on the unit
//! scale; when the model carries an [`AffineMap`], `evaluate` and `gradient`
//! accept native inputs `x` and apply `z = A x + b` first.

mod fit;
mod io;

pub use fit::{fit_greedy, DatasetSpec, FitConfig};
pub use io::{read_dataset_csv, read_matrix_csv, ModelFile, MODEL_FORMAT_VERSION};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::affine::AffineMap;
use crate::error::{Error, Result};

/// Hinge orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    Neg,
    Pos,
}

impl Sign {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Neg => -1.0,
            Sign::Pos => 1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Neg => Sign::Pos,
            Sign::Pos => Sign::Neg,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(Sign::Neg),
            1 => Ok(Sign::Pos),
            other => Err(format!("sign must be -1 or +1, got {other}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Neg => -1,
            Sign::Pos => 1,
        }
    }
}

/// One factor `[s (z_index - knot)]_+` of a basis function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub index: usize,
    pub sign: Sign,
    pub knot: f64,
}

impl Hinge {
    pub fn new(index: usize, sign: Sign, knot: f64) -> Self {
        Hinge { index, sign, knot }
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        (self.sign.value() * (z - self.knot)).max(0.0)
    }

    #[inline]
    pub fn slope(&self, z: f64) -> f64 {
        if self.sign.value() * (z - self.knot) > 0.0 {
            self.sign.value()
        } else {
            0.0
        }
    }
}

/// Product of hinges over distinct inputs. Inputs not listed are inactive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BasisFunction {
    terms: Vec<Hinge>,
}

impl BasisFunction {
    pub fn new(terms: Vec<Hinge>) -> Result<Self> {
        for (k, h) in terms.iter().enumerate() {
            if !h.knot.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "non-finite knot on input {}",
                    h.index
                )));
            }
            if terms[..k].iter().any(|o| o.index == h.index) {
                return Err(Error::InvalidModel(format!(
                    "input {} appears more than once in a basis function",
                    h.index
                )));
            }
        }
        Ok(BasisFunction { terms })
    }

    pub fn hinge(index: usize, sign: Sign, knot: f64) -> Self {
        BasisFunction {
            terms: vec![Hinge::new(index, sign, knot)],
        }
    }

    pub fn terms(&self) -> &[Hinge] {
        &self.terms
    }

    /// Interaction order (number of active inputs).
    pub fn degree(&self) -> usize {
        self.terms.len()
    }

    pub fn term_for(&self, input: usize) -> Option<&Hinge> {
        self.terms.iter().find(|h| h.index == input)
    }

    pub fn uses(&self, input: usize) -> bool {
        self.term_for(input).is_some()
    }

    #[inline]
    pub fn value(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|h| h.value(z[h.index])).product()
    }

    /// `self` times one more hinge.
    pub fn extend(&self, h: Hinge) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.push(h);
        BasisFunction::new(terms)
    }

    pub(crate) fn check(&self, p: usize, unit_knots: bool) -> Result<()> {
        for h in &self.terms {
            if h.index >= p {
                return Err(Error::InvalidModel(format!(
                    "input index {} out of range for p = {p}",
                    h.index
                )));
            }
            if unit_knots && !(0.0..=1.0).contains(&h.knot) {
                return Err(Error::InvalidModel(format!(
                    "knot out of [0,1]: {}",
                    h.knot
                )));
            }
        }
        Ok(())
    }
}

/// `f(z) = intercept + Σ coefficients[m] · basis[m](z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarsModel {
    p: usize,
    intercept: f64,
    coefficients: Vec<f64>,
    basis: Vec<BasisFunction>,
    input_transform: Option<AffineMap>,
}

impl MarsModel {
    pub fn new(
        p: usize,
        intercept: f64,
        coefficients: Vec<f64>,
        basis: Vec<BasisFunction>,
        input_transform: Option<AffineMap>,
    ) -> Result<Self> {
        Self::build(p, intercept, coefficients, basis, input_transform, true)
    }

    /// Same as [`MarsModel::new`] but knots may fall outside `[0, 1]`; used for
    /// models re-expressed in native coordinates.
    pub(crate) fn new_unscaled(
        p: usize,
        intercept: f64,
        coefficients: Vec<f64>,
        basis: Vec<BasisFunction>,
    ) -> Result<Self> {
        Self::build(p, intercept, coefficients, basis, None, false)
    }

    fn build(
        p: usize,
        intercept: f64,
        coefficients: Vec<f64>,
        basis: Vec<BasisFunction>,
        input_transform: Option<AffineMap>,
        unit_knots: bool,
    ) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::InvalidModel(format!(
                "{} coefficients for {} basis functions",
                coefficients.len(),
                basis.len()
            )));
        }
        if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        for b in &basis {
            b.check(p, unit_knots)?;
        }
        if let Some(t) = &input_transform {
            if t.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: t.dim(),
                });
            }
        }
        Ok(MarsModel {
            p,
            intercept,
            coefficients,
            basis,
            input_transform,
        })
    }

    pub fn constant(p: usize, intercept: f64) -> Self {
        MarsModel {
            p,
            intercept,
            coefficients: vec![],
            basis: vec![],
            input_transform: None,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    pub fn n_basis(&self) -> usize {
        self.basis.len()
    }

    pub fn input_transform(&self) -> Option<&AffineMap> {
        self.input_transform.as_ref()
    }

    pub fn with_input_transform(mut self, t: Option<AffineMap>) -> Result<Self> {
        if let Some(t) = &t {
            if t.dim() != self.p {
                return Err(Error::DimensionMismatch {
                    expected: self.p,
                    got: t.dim(),
                });
            }
        }
        self.input_transform = t;
        Ok(self)
    }

    /// Largest number of inputs in any basis function.
    pub fn max_degree(&self) -> usize {
        self.basis
            .iter()
            .map(BasisFunction::degree)
            .max()
            .unwrap_or(0)
    }

    /// Whether input `i` appears in at least one basis function.
    pub fn is_active(&self, i: usize) -> bool {
        self.basis.iter().any(|b| b.uses(i))
    }

    fn to_model_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: x.len(),
            });
        }
        Ok(match &self.input_transform {
            Some(t) => t.apply(x),
            None => x.to_vec(),
        })
    }

    /// Prediction at a native input.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let z = self.to_model_coords(x)?;
        Ok(self.evaluate_scaled(&z))
    }

    /// Prediction at a point already in model coordinates.
    pub fn evaluate_scaled(&self, z: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(&self.basis)
                .map(|(g, b)| g * b.value(z))
                .sum::<f64>()
    }

    pub fn predict(&self, design: &DMatrix<f64>) -> Result<Vec<f64>> {
        (0..design.nrows())
            .map(|r| {
                let row: Vec<f64> = design.row(r).iter().copied().collect();
                self.evaluate(&row)
            })
            .collect()
    }

    /// Analytic gradient with respect to the native inputs.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.to_model_coords(x)?;
        let mut g = vec![0.0; self.p];
        self.gradient_scaled_into(&z, &mut g)?;
        Ok(match &self.input_transform {
            Some(t) => t.pull_gradient(&g),
            None => g,
        })
    }

    /// Gradient in model coordinates, accumulated into `out` (overwritten).
    pub fn gradient_scaled_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut vals = [0.0f64; 16];
        let mut heap = Vec::new();
        for (gamma, b) in self.coefficients.iter().zip(&self.basis) {
            let terms = b.terms();
            let hv: &mut [f64] = if terms.len() <= vals.len() {
                &mut vals[..terms.len()]
            } else {
                heap.resize(terms.len(), 0.0);
                &mut heap[..]
            };
            for (k, h) in terms.iter().enumerate() {
                let zi = z[h.index];
                if zi == h.knot {
                    return Err(Error::AtKnot {
                        input: h.index,
                        knot: h.knot,
                    });
                }
                hv[k] = h.value(zi);
            }
            for (k, h) in terms.iter().enumerate() {
                let slope = h.slope(z[h.index]);
                if slope == 0.0 {
                    continue;
                }
                let others: f64 = hv
                    .iter()
                    .enumerate()
                    .filter(|&(l, _)| l != k)
                    .map(|(_, v)| v)
                    .product();
                out[h.index] += gamma * slope * others;
            }
        }
        Ok(())
    }

    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != self.basis.len() {
            return Err(Error::InvalidModel(format!(
                "{} coefficients for {} basis functions",
                coefficients.len(),
                self.basis.len()
            )));
        }
        let mut m = self.clone();
        m.coefficients = coefficients;
        Ok(m)
    }

    /// Re-expresses the model in native coordinates when the input map is a
    /// generalized permutation (`z_i = a_i x_{π(i)} + b_i`). Each hinge stays a
    /// hinge: `[s(a x + b - t)]_+ = |a| [s sgn(a) (x - (t - b)/a)]_+`.
    pub(crate) fn pull_back(&self) -> Option<MarsModel> {
        let t = match &self.input_transform {
            None => return Some(self.clone()),
            Some(t) => t,
        };
        let mono = t.as_monomial()?;
        let offset = t.offset();
        let mut coefficients = Vec::with_capacity(self.basis.len());
        let mut basis = Vec::with_capacity(self.basis.len());
        for (gamma, b) in self.coefficients.iter().zip(&self.basis) {
            let mut scale = *gamma;
            let mut terms = Vec::with_capacity(b.degree());
            for h in b.terms() {
                let (src, a) = mono[h.index];
                scale *= a.abs();
                let sign = if a > 0.0 { h.sign } else { h.sign.flip() };
                terms.push(Hinge::new(src, sign, (h.knot - offset[h.index]) / a));
            }
            coefficients.push(scale);
            basis.push(BasisFunction { terms });
        }
        MarsModel::new_unscaled(self.p, self.intercept, coefficients, basis).ok()
    }
}
