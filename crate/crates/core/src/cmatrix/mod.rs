//! Closed-form expected gradient outer product `C = E[∇f ∇fᵀ]`.

mod assemble;
mod incremental;
mod integrals;
mod io;

pub use assemble::{assemble_c, assemble_c_hadamard};
pub use incremental::IncrementalC;
pub use integrals::{integration_bounds, InputIntegrals, IntegralCache};
pub use io::{CMatrixFile, CMATRIX_FORMAT_VERSION};

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::{symmetrize, AffineMap};
use crate::error::{Error, Result};
use crate::model::MarsModel;
use crate::prior::{PriorSpec, UnivariateMeasure};

/// Coordinates in which a matrix is expressed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Gradients with respect to the native inputs `x`.
    #[default]
    Native,
    /// Gradients with respect to the model coordinates `z = A x + b`.
    Unit,
}

/// Symmetric `p × p` matrix with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub values: DMatrix<f64>,
    pub scale: Scale,
    pub prior_digest: String,
    pub model_digest: String,
}

impl CMatrix {
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    /// Largest `|C_ij - C_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        relative_asymmetry(&self.values)
    }

    /// Checks symmetry (`1e-10` relative) and numerical PSD
    /// (`λ_min >= -1e-8 λ_max`).
    pub fn validate(&self) -> Result<()> {
        check_symmetric_psd(&self.values)
    }
}

pub(crate) fn relative_asymmetry(c: &DMatrix<f64>) -> f64 {
    let scale = c.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (c - c.transpose()).amax() / scale
}

pub(crate) fn check_symmetric_psd(c: &DMatrix<f64>) -> Result<()> {
    if c.nrows() != c.ncols() {
        return Err(Error::DimensionMismatch {
            expected: c.nrows(),
            got: c.ncols(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix has non-finite entries".into()));
    }
    let asym = relative_asymmetry(c);
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(symmetrize(c.clone())).eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    if min < -1e-8 * max.max(0.0) {
        return Err(Error::NotPsd {
            eigenvalue: min,
            largest: max,
        });
    }
    Ok(())
}

/// How [`compute_c`] assembles each product-measure term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Assembly {
    /// Cache all integrals, then exact prefix/suffix products.
    #[default]
    Cached,
    /// Recompute integrals per entry; `O(M²)` memory.
    LowMemory,
    /// Cached integrals, leave-out products by regularized division.
    Hadamard { eps: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComputeOptions {
    pub assembly: Assembly,
    pub scale: Scale,
}

/// `C` for a model in its own coordinates under a product measure given in
/// those coordinates.
pub fn c_for_product(
    model: &MarsModel,
    measures: &[UnivariateMeasure],
    assembly: Assembly,
) -> Result<DMatrix<f64>> {
    if measures.len() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            got: measures.len(),
        });
    }
    let basis = model.basis();
    let gamma = model.coefficients();
    match assembly {
        Assembly::Cached => assemble_c(&IntegralCache::build(basis, measures)?, gamma),
        Assembly::LowMemory => assemble::assemble_c_in_situ(basis, measures, gamma),
        Assembly::Hadamard { eps } => {
            assemble_c_hadamard(&IntegralCache::build(basis, measures)?, gamma, eps)
        }
    }
}

/// Builds the integral cache for a model under a product measure in model
/// coordinates.
pub fn compute_i_matrices(
    model: &MarsModel,
    measures: &[UnivariateMeasure],
) -> Result<IntegralCache> {
    if measures.len() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            got: measures.len(),
        });
    }
    IntegralCache::build(model.basis(), measures)
}

/// Largest off-diagonal entry relative to the diagonal scale.
fn off_diagonal_ratio(s: &DMatrix<f64>) -> f64 {
    let p = s.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                worst = worst.max(s[(i, j)].abs() / (s[(i, i)] * s[(j, j)]).sqrt());
            }
        }
    }
    worst
}

/// `C` in native coordinates, with `engine` evaluating the product-measure
/// case in the coordinates of the model it is handed.
pub(crate) fn native_c_with<E>(
    model: &MarsModel,
    prior: &PriorSpec,
    engine: &E,
) -> Result<DMatrix<f64>>
where
    E: Fn(&MarsModel, &[UnivariateMeasure]) -> Result<DMatrix<f64>> + Sync,
{
    match prior {
        PriorSpec::Product(measures) => match model.input_transform() {
            None => engine(model, measures),
            Some(_) => {
                let native = model.pull_back().ok_or_else(|| {
                    Error::IncompatiblePrior(
                        "a product prior needs an input transform that maps each input to a single coordinate".into(),
                    )
                })?;
                engine(&native, measures)
            }
        },
        PriorSpec::Mvn { mean, cov } => {
            // z = A x + b ~ N(A μ + b, A Σ Aᵀ); factorizes when A Σ Aᵀ is diagonal.
            let t = model
                .input_transform()
                .cloned()
                .unwrap_or_else(|| AffineMap::identity(model.p()));
            let a = t.matrix();
            let s = symmetrize(&a * cov * a.transpose());
            if off_diagonal_ratio(&s) > 1e-8 {
                return Err(Error::IncompatiblePrior(
                    "the model's input transform does not decorrelate the Gaussian prior; \
                     train on whitened inputs (see `standardize`)"
                        .into(),
                ));
            }
            let mz = t.apply(mean);
            let measures = (0..model.p())
                .map(|i| UnivariateMeasure::normal(mz[i], s[(i, i)].sqrt()))
                .collect::<Result<Vec<_>>>()?;
            let cz = engine(model, &measures)?;
            Ok(match model.input_transform() {
                Some(t) => t.pull_cmatrix(&cz),
                None => cz,
            })
        }
        PriorSpec::Mixture(components) => {
            let parts = components
                .par_iter()
                .map(|(_, c)| native_c_with(model, c, engine))
                .collect::<Result<Vec<_>>>()?;
            let p = model.p();
            Ok(components
                .iter()
                .zip(parts)
                .fold(DMatrix::zeros(p, p), |acc, ((w, _), c)| acc + c * *w))
        }
    }
}

/// Closed-form `C` for a model under any supported prior.
///
/// The prior is over the native inputs. With an input transform on the
/// model, product priors require a coordinate-wise transform (the model is
/// re-expressed in native coordinates), and Gaussian priors require that the
/// transform decorrelates them. Mixture components are computed in parallel
/// and summed in order.
pub fn compute_c(
    model: &MarsModel,
    prior: &PriorSpec,
    options: &ComputeOptions,
) -> Result<CMatrix> {
    if prior.p() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            got: prior.p(),
        });
    }
    let engine = |m: &MarsModel, rho: &[UnivariateMeasure]| c_for_product(m, rho, options.assembly);
    let native = symmetrize(native_c_with(model, prior, &engine)?);
    let values = match (options.scale, model.input_transform()) {
        (Scale::Unit, Some(t)) => t.push_cmatrix(&native),
        _ => native,
    };
    Ok(CMatrix {
        values,
        scale: options.scale,
        prior_digest: prior.digest(),
        model_digest: model.digest(),
    })
}

/// Time spent in the two phases of [`compute_c`], summed over mixture
/// components. In low-memory mode integrals are evaluated during assembly
/// and all time is counted there.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ComputeTiming {
    pub integrals: Duration,
    pub assembly: Duration,
}

/// [`compute_c`] that also reports where the time went.
pub fn compute_c_timed(
    model: &MarsModel,
    prior: &PriorSpec,
    options: &ComputeOptions,
) -> Result<(CMatrix, ComputeTiming)> {
    if prior.p() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            got: prior.p(),
        });
    }
    let integrals_ns = AtomicU64::new(0);
    let assembly_ns = AtomicU64::new(0);
    let add = |slot: &AtomicU64, start: Instant| {
        slot.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
    };
    let engine = |m: &MarsModel, rho: &[UnivariateMeasure]| {
        if rho.len() != m.p() {
            return Err(Error::DimensionMismatch {
                expected: m.p(),
                got: rho.len(),
            });
        }
        let t0 = Instant::now();
        if options.assembly == Assembly::LowMemory {
            let c = assemble::assemble_c_in_situ(m.basis(), rho, m.coefficients());
            add(&assembly_ns, t0);
            return c;
        }
        let cache = IntegralCache::build(m.basis(), rho)?;
        add(&integrals_ns, t0);
        let t1 = Instant::now();
        let c = match options.assembly {
            Assembly::Hadamard { eps } => assemble_c_hadamard(&cache, m.coefficients(), eps),
            _ => assemble_c(&cache, m.coefficients()),
        };
        add(&assembly_ns, t1);
        c
    };
    let native = symmetrize(native_c_with(model, prior, &engine)?);
    let values = match (options.scale, model.input_transform()) {
        (Scale::Unit, Some(t)) => t.push_cmatrix(&native),
        _ => native,
    };
    let timing = ComputeTiming {
        integrals: Duration::from_nanos(integrals_ns.into_inner()),
        assembly: Duration::from_nanos(assembly_ns.into_inner()),
    };
    Ok((
        CMatrix {
            values,
            scale: options.scale,
            prior_digest: prior.digest(),
            model_digest: model.digest(),
        },
        timing,
    ))
}
