//! Univariate cross-basis integrals.
//!
//! For input `i` and basis pair `(m1, m2)` with hinges `h = s (z - t)` on
//! their active region:
//!
//! * `I1[m1, m2] = ∫ h'_{m1} h_{m2} dρ_i` (derivative on the first index)
//! * `I2[m1, m2] = ∫ h_{m1} h_{m2} dρ_i`
//! * `I3[m1, m2] = ∫ h'_{m1} h'_{m2} dρ_i`
//!
//! An input missing from a basis function contributes `h ≡ 1`, no indicator
//! and no sign, so two bases that both ignore input `i` have `I2 = 1`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{BasisFunction, Hinge, Sign};
use crate::prior::UnivariateMeasure;

/// Interval on which the active indicators of both hinges are one.
/// Returns `(a, b)` with `b >= a`; `a == b` means the product vanishes.
pub fn integration_bounds(b1: &BasisFunction, b2: &BasisFunction, input: usize) -> (f64, f64) {
    hinge_bounds(b1.term_for(input), b2.term_for(input))
}

pub(crate) fn hinge_bounds(h1: Option<&Hinge>, h2: Option<&Hinge>) -> (f64, f64) {
    let mut a = f64::NEG_INFINITY;
    let mut b = f64::INFINITY;
    for h in [h1, h2].into_iter().flatten() {
        match h.sign {
            Sign::Pos => a = a.max(h.knot),
            Sign::Neg => b = b.min(h.knot),
        }
    }
    (a, b.max(a))
}

/// All integrals for one `(m1, m2)` pair on one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Entry {
    pub a: f64,
    pub b: f64,
    /// derivative on `m1`
    pub i1_12: f64,
    /// derivative on `m2`
    pub i1_21: f64,
    pub i2: f64,
    pub i3: f64,
}

/// Evaluates every integral for a pair of (possibly absent) hinges. The
/// expressions are symmetric in their arguments, so swapping `h1` and `h2`
/// swaps `i1_12`/`i1_21` and leaves the rest bitwise unchanged.
pub(crate) fn entry(
    h1: Option<&Hinge>,
    h2: Option<&Hinge>,
    rho: &UnivariateMeasure,
) -> Result<Entry> {
    let (a, b) = hinge_bounds(h1, h2);
    if h1.is_none() && h2.is_none() {
        return Ok(Entry {
            a,
            b,
            i1_12: 0.0,
            i1_21: 0.0,
            i2: 1.0,
            i3: 0.0,
        });
    }
    let (x0, x1, x2) = if a < b {
        let need2 = h1.is_some() && h2.is_some();
        (
            rho.xi(0, a, b)?,
            rho.xi(1, a, b)?,
            if need2 { rho.xi(2, a, b)? } else { 0.0 },
        )
    } else {
        (0.0, 0.0, 0.0)
    };
    Ok(match (h1, h2) {
        (Some(p), Some(q)) => {
            let s = p.sign.value() * q.sign.value();
            Entry {
                a,
                b,
                i1_12: s * (x1 - q.knot * x0),
                i1_21: s * (x1 - p.knot * x0),
                i2: s * (x2 - (p.knot + q.knot) * x1 + p.knot * q.knot * x0),
                i3: s * x0,
            }
        }
        (Some(p), None) => Entry {
            a,
            b,
            i1_12: p.sign.value() * x0,
            i1_21: 0.0,
            i2: p.sign.value() * (x1 - p.knot * x0),
            i3: 0.0,
        },
        (None, Some(q)) => Entry {
            a,
            b,
            i1_12: 0.0,
            i1_21: q.sign.value() * x0,
            i2: q.sign.value() * (x1 - q.knot * x0),
            i3: 0.0,
        },
        (None, None) => unreachable!(),
    })
}

/// Per-input integral matrices, each `M × M`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputIntegrals {
    pub a_bounds: DMatrix<f64>,
    pub b_bounds: DMatrix<f64>,
    pub i1: DMatrix<f64>,
    pub i2: DMatrix<f64>,
    pub i3: DMatrix<f64>,
}

impl InputIntegrals {
    pub(crate) fn compute(
        basis: &[BasisFunction],
        input: usize,
        rho: &UnivariateMeasure,
    ) -> Result<Self> {
        let m = basis.len();
        let terms: Vec<Option<&Hinge>> = basis.iter().map(|b| b.term_for(input)).collect();
        let mut out = InputIntegrals {
            a_bounds: DMatrix::zeros(m, m),
            b_bounds: DMatrix::zeros(m, m),
            i1: DMatrix::zeros(m, m),
            i2: DMatrix::zeros(m, m),
            i3: DMatrix::zeros(m, m),
        };
        for r in 0..m {
            for c in r..m {
                out.set(r, c, &entry(terms[r], terms[c], rho)?);
            }
        }
        Ok(out)
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, e: &Entry) {
        for (mat, v) in [
            (&mut self.a_bounds, e.a),
            (&mut self.b_bounds, e.b),
            (&mut self.i2, e.i2),
            (&mut self.i3, e.i3),
        ] {
            mat[(r, c)] = v;
            mat[(c, r)] = v;
        }
        self.i1[(r, c)] = e.i1_12;
        self.i1[(c, r)] = e.i1_21;
    }
}

/// Integral matrices for every input of a model under a product measure, in
/// the model's own coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralCache {
    pub(crate) basis: Vec<BasisFunction>,
    pub(crate) measures: Vec<UnivariateMeasure>,
    pub(crate) inputs: Vec<InputIntegrals>,
}

impl IntegralCache {
    pub(crate) fn build(basis: &[BasisFunction], measures: &[UnivariateMeasure]) -> Result<Self> {
        let inputs = (0..measures.len())
            .into_par_iter()
            .map(|i| InputIntegrals::compute(basis, i, &measures[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntegralCache {
            basis: basis.to_vec(),
            measures: measures.to_vec(),
            inputs,
        })
    }

    pub fn p(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_basis(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    pub fn measures(&self) -> &[UnivariateMeasure] {
        &self.measures
    }

    pub fn input(&self, i: usize) -> &InputIntegrals {
        &self.inputs[i]
    }

    /// Inputs used by at least one basis function, ascending.
    pub fn active_inputs(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|&i| self.basis.iter().any(|b| b.uses(i)))
            .collect()
    }

    /// Elementwise product of `I2` over all inputs.
    pub fn i2_product(&self) -> DMatrix<f64> {
        let m = self.n_basis();
        let mut out = DMatrix::from_element(m, m, 1.0);
        for i in self.active_inputs() {
            out.component_mul_assign(&self.inputs[i].i2);
        }
        out
    }
}
