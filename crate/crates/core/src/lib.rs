//! Closed-form active subspaces for MARS surrogates.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod affine;
pub mod cmatrix;
pub mod design;
pub mod error;
pub mod format;
pub mod manifest;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod prior;
pub mod special;
pub mod subspace;

pub use affine::AffineMap;
pub use cmatrix::{
    compute_c, compute_c_timed, Assembly, CMatrix, ComputeOptions, ComputeTiming, Scale,
};
pub use error::{Error, Result};
pub use manifest::RunManifest;
pub use model::{fit_greedy, BasisFunction, DatasetSpec, FitConfig, Hinge, MarsModel, Sign};
pub use partition::{partition, to_prior, BoxPartition, LinearConstraintSet};
pub use prior::{standardize, PriorSpec, UnivariateMeasure};
pub use subspace::{decompose, ActiveSubspace, DimensionPolicy};
