//! Eigendecomposition of `C`, dimension selection, activity scores and
//! projection onto the active directions.

mod io;

pub use io::{write_projection_csv, SubspaceFile};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::affine::{symmetrize, AffineMap};
use crate::cmatrix::{relative_asymmetry, CMatrix};
use crate::error::{Error, Result};

/// Eigenvalues of magnitude at most this fraction of `λ_max` below zero are
/// treated as rounding and set to zero.
pub const PSD_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of `C` in descending order with deterministic orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSubspace {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
    pub chosen_dim: Option<usize>,
    pub activity_scores: Option<Vec<f64>>,
    pub prior_digest: String,
    pub model_digest: String,
    /// Number of slightly negative eigenvalues that were clamped to zero.
    pub clamped: usize,
}

impl ActiveSubspace {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    /// First `r` eigenvectors as a `p × r` matrix.
    pub fn leading(&self, r: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, r.min(self.p())).into_owned()
    }

    /// `W₁` for the chosen dimension.
    pub fn w1(&self) -> Result<DMatrix<f64>> {
        match self.chosen_dim {
            Some(r) if r >= 1 => Ok(self.leading(r)),
            _ => Err(Error::InvalidArgument(
                "no subspace dimension has been chosen".into(),
            )),
        }
    }

    /// `W Λ Wᵀ` with the clamped eigenvalues.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let w = &self.eigenvectors;
        let scaled = DMatrix::from_fn(self.p(), self.p(), |r, c| w[(r, c)] * self.eigenvalues[c]);
        symmetrize(scaled * w.transpose())
    }

    /// Sets `chosen_dim` by `policy` and returns the choice.
    pub fn choose(&mut self, policy: DimensionPolicy) -> Result<DimensionChoice> {
        let choice = choose_dimension(self, policy)?;
        self.chosen_dim = Some(choice.r);
        Ok(choice)
    }
}

/// Flips `v` so its first component of largest magnitude is positive.
fn orient(v: &mut [f64]) {
    let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() >= big * (1.0 - 1e-12)) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Full symmetric eigendecomposition of a raw matrix.
pub fn decompose_matrix(c: &DMatrix<f64>) -> Result<ActiveSubspace> {
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
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let p = c.nrows();
    let eig = SymmetricEigen::new(symmetrize(c.clone()));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let largest = order.first().map_or(0.0, |&k| eig.eigenvalues[k]).max(0.0);
    let mut eigenvalues = Vec::with_capacity(p);
    let mut eigenvectors = DMatrix::zeros(p, p);
    let mut clamped = 0;
    for (col, &k) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[k];
        if lambda < 0.0 {
            if lambda < -PSD_TOL * largest {
                return Err(Error::NotPsd {
                    eigenvalue: lambda,
                    largest,
                });
            }
            lambda = 0.0;
            clamped += 1;
        }
        eigenvalues.push(lambda);
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        orient(&mut v);
        eigenvectors.set_column(col, &nalgebra::DVector::from_vec(v));
    }
    Ok(ActiveSubspace {
        eigenvalues,
        eigenvectors,
        chosen_dim: None,
        activity_scores: None,
        prior_digest: String::new(),
        model_digest: String::new(),
        clamped,
    })
}

/// Decomposes `C = W Λ Wᵀ`, carrying over its provenance.
pub fn decompose(c: &CMatrix) -> Result<ActiveSubspace> {
    let mut s = decompose_matrix(&c.values)?;
    s.prior_digest = c.prior_digest.clone();
    s.model_digest = c.model_digest.clone();
    Ok(s)
}

/// Rule for picking the subspace dimension.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum DimensionPolicy {
    /// Largest spectral gap: the `r` minimizing `λ_{r+1} / λ_r`, smallest `r`
    /// on ties.
    #[default]
    Gap,
    /// Smallest `r` whose leading eigenvalues hold `fraction` of the trace.
    Energy { fraction: f64 },
    /// A fixed dimension.
    Fixed { r: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimensionChoice {
    pub r: usize,
    pub warning: Option<String>,
}

/// Picks `r`. A zero matrix gives `r = 0` with a warning.
pub fn choose_dimension(s: &ActiveSubspace, policy: DimensionPolicy) -> Result<DimensionChoice> {
    let lam = &s.eigenvalues;
    let p = lam.len();
    if let DimensionPolicy::Fixed { r } = policy {
        if r == 0 || r > p {
            return Err(Error::InvalidArgument(format!(
                "dimension must be in 1..={p}, got {r}"
            )));
        }
        return Ok(DimensionChoice { r, warning: None });
    }
    if let DimensionPolicy::Energy { fraction } = policy {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "energy fraction must be in (0, 1], got {fraction}"
            )));
        }
    }
    if p == 0 || lam[0] <= 0.0 {
        return Ok(DimensionChoice {
            r: 0,
            warning: Some("all eigenvalues are zero; the function is constant".into()),
        });
    }
    let r = match policy {
        DimensionPolicy::Gap => {
            let mut best = (1, f64::INFINITY);
            for r in 1..p {
                if lam[r - 1] <= 0.0 {
                    break;
                }
                let ratio = lam[r] / lam[r - 1];
                if ratio < best.1 {
                    best = (r, ratio);
                }
            }
            best.0
        }
        DimensionPolicy::Energy { fraction } => {
            let total: f64 = lam.iter().sum();
            let mut cum = 0.0;
            let mut r = p;
            for (k, l) in lam.iter().enumerate() {
                cum += l;
                if cum >= fraction * total {
                    r = k + 1;
                    break;
                }
            }
            r
        }
        DimensionPolicy::Fixed { .. } => unreachable!("handled above"),
    };
    Ok(DimensionChoice { r, warning: None })
}

/// `AS_i = Σ_{j≤k} λ_j w_ij²`.
///
/// With `rescale`, the matrix is first re-expressed in the coordinates
/// `u = A x + b` (for example the unit cube) and decomposed again. With
/// `normalize`, scores are divided by their maximum.
pub fn activity_scores(
    s: &ActiveSubspace,
    k: usize,
    rescale: Option<&AffineMap>,
    normalize: bool,
) -> Result<Vec<f64>> {
    let p = s.p();
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!(
            "truncation order must be in 1..={p}, got {k}"
        )));
    }
    let rescaled;
    let s = match rescale {
        None => s,
        Some(t) => {
            if t.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: t.dim(),
                });
            }
            rescaled = decompose_matrix(&t.push_cmatrix(&s.reconstruct()))?;
            &rescaled
        }
    };
    let mut scores: Vec<f64> = (0..p)
        .map(|i| {
            (0..k)
                .map(|j| s.eigenvalues[j] * s.eigenvectors[(i, j)].powi(2))
                .sum()
        })
        .collect();
    if normalize {
        let top = scores.iter().fold(0.0f64, |m, &v| m.max(v));
        if top > 0.0 {
            scores.iter_mut().for_each(|v| *v /= top);
        }
    }
    Ok(scores)
}

/// `X W₁` for an `n × p` matrix of inputs.
pub fn project(s: &ActiveSubspace, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != s.p() {
        return Err(Error::DimensionMismatch {
            expected: s.p(),
            got: x.ncols(),
        });
    }
    Ok(x * s.w1()?)
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            got: a.nrows(),
        });
    }
    Ok(())
}

/// `(1/p) ‖Ĉ − C‖_F`.
pub fn subspace_error(c_hat: &DMatrix<f64>, c_true: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(c_hat, c_true)?;
    Ok((c_hat - c_true).norm() / c_true.nrows() as f64)
}

/// `min(‖w − ŵ‖, ‖w + ŵ‖)`.
pub fn direction_error(w_hat: &[f64], w_true: &[f64]) -> Result<f64> {
    if w_hat.len() != w_true.len() {
        return Err(Error::DimensionMismatch {
            expected: w_true.len(),
            got: w_hat.len(),
        });
    }
    let dist = |sign: f64| {
        w_hat
            .iter()
            .zip(w_true)
            .map(|(a, b)| (a - sign * b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok(dist(1.0).min(dist(-1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn eq33() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[120.0, 50.0, 50.0, 21.0]) / 45.0
    }

    #[test]
    fn diagonal_matrix() {
        let s = decompose_matrix(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0, 4.0,
        ])))
        .unwrap();
        assert_eq!(s.eigenvalues, vec![4.0, 1.0]);
        assert_abs_diff_eq!(
            s.eigenvectors,
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn reference_direction() {
        let s = decompose_matrix(&eq33()).unwrap();
        let w = s.eigenvectors.column(0);
        assert!(
            (w[0] - 0.923).abs() < 1e-3 && (w[1] - 0.385).abs() < 1e-3,
            "{w}"
        );
        assert!((s.reconstruct() - eq33()).norm() / eq33().norm() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(decompose_matrix(&a), Err(Error::NotSymmetric(_))));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(decompose_matrix(&b), Err(Error::NotPsd { .. })));
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let s = decompose_matrix(&c).unwrap();
        assert_eq!((s.eigenvalues[1], s.clamped), (0.0, 1));
    }

    #[test]
    fn dimension_policies() {
        let mut s = decompose_matrix(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            4.0, 1e-8, 1e-9, 1e-10,
        ])))
        .unwrap();
        assert_eq!(choose_dimension(&s, DimensionPolicy::Gap).unwrap().r, 1);
        s.eigenvalues = vec![1.0; 4];
        assert_eq!(
            choose_dimension(&s, DimensionPolicy::Energy { fraction: 1.0 })
                .unwrap()
                .r,
            4
        );
        s.eigenvalues = vec![0.0; 4];
        let z = choose_dimension(&s, DimensionPolicy::Gap).unwrap();
        assert_eq!(z.r, 0);
        assert!(z.warning.is_some());
        assert!(choose_dimension(&s, DimensionPolicy::Fixed { r: 0 }).is_err());
        assert!(choose_dimension(&s, DimensionPolicy::Energy { fraction: 0.0 }).is_err());
    }

    #[test]
    fn table_profile_policies() {
        let sqrt = [1.0, 0.125, 0.057, 0.046, 0.037, 0.036];
        let s = ActiveSubspace {
            eigenvalues: sqrt.iter().map(|v: &f64| v * v).collect(),
            eigenvectors: DMatrix::identity(6, 6),
            chosen_dim: None,
            activity_scores: None,
            prior_digest: String::new(),
            model_digest: String::new(),
            clamped: 0,
        };
        let gap = choose_dimension(&s, DimensionPolicy::Gap).unwrap().r;
        assert!(gap == 1 || gap == 2);
        // 1 / 1.0236 of the trace sits in the first eigenvalue, just short of 0.99
        assert_eq!(
            choose_dimension(&s, DimensionPolicy::Energy { fraction: 0.99 })
                .unwrap()
                .r,
            2
        );
    }

    #[test]
    fn activity_scores_full_order_is_diagonal() {
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let s = decompose_matrix(&c).unwrap();
        let a = activity_scores(&s, 3, None, false).unwrap();
        for i in 0..3 {
            assert!((a[i] - c[(i, i)]).abs() < 1e-12);
        }
        assert_eq!(a[2], 0.0);
        let n = activity_scores(&s, 3, None, true).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-15);
        assert!(activity_scores(&s, 0, None, false).is_err());
    }

    #[test]
    fn activity_scores_rescaled_to_unit_inputs() {
        // x_0 spans [0, 10]; on the unit scale its gradient is ten times larger
        let c = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0]));
        let s = decompose_matrix(&c).unwrap();
        let to_unit = AffineMap::diagonal(vec![0.1, 1.0], vec![0.0, 0.0]).unwrap();
        let a = activity_scores(&s, 2, Some(&to_unit), false).unwrap();
        assert!((a[0] - 100.0).abs() < 1e-10 && (a[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection() {
        let mut s = decompose_matrix(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            3.0, 1.0,
        ])))
        .unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert!(project(&s, &x).is_err());
        s.chosen_dim = Some(1);
        assert_eq!(project(&s, &x).unwrap(), x.columns(0, 1).into_owned());
        assert!(project(&s, &DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn errors() {
        let c = eq33();
        assert_eq!(subspace_error(&c, &c).unwrap(), 0.0);
        let shifted = &c + DMatrix::identity(2, 2) * 0.045;
        assert!(
            (subspace_error(&shifted, &c).unwrap() - 0.5 * (2.0f64 * 0.045 * 0.045).sqrt()).abs()
                < 1e-12
        );
        assert_eq!(direction_error(&[-0.6, -0.8], &[0.6, 0.8]).unwrap(), 0.0);
        assert!(direction_error(&[1.0], &[1.0, 0.0]).is_err());
    }

    fn psd(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, p * p).prop_map(move |v| {
            let b = DMatrix::from_vec(p, p, v);
            &b * b.transpose()
        })
    }

    proptest! {
        #[test]
        fn decomposition_invariants(c in (1usize..7).prop_flat_map(psd), scale in 0.01f64..100.0) {
            let s = decompose_matrix(&c).unwrap();
            let p = s.p();
            prop_assert!((s.reconstruct() - &c).norm() <= 1e-10 * c.norm().max(1e-300));
            prop_assert!((s.eigenvectors.transpose() * &s.eigenvectors - DMatrix::identity(p, p)).amax() < 1e-10);
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            let a = activity_scores(&s, p, None, false).unwrap();
            for i in 0..p {
                prop_assert!((a[i] - c[(i, i)]).abs() <= 1e-10 * c.amax().max(1e-300));
            }
            let t = decompose_matrix(&(&c * scale)).unwrap();
            for policy in [DimensionPolicy::Gap, DimensionPolicy::Energy { fraction: 0.9 }] {
                prop_assert_eq!(choose_dimension(&s, policy).unwrap().r, choose_dimension(&t, policy).unwrap().r);
            }
            let mut full = s.clone();
            full.chosen_dim = Some(p);
            let x = DMatrix::from_fn(4, p, |r, k| ((r * 7 + k * 3) % 5) as f64 * 0.2);
            let y = project(&full, &x).unwrap();
            for (r1, r2) in [(0, 1), (1, 3), (2, 3)] {
                let d0 = (x.row(r1) - x.row(r2)).norm();
                let d1 = (y.row(r1) - y.row(r2)).norm();
                prop_assert!((d0 - d1).abs() < 1e-10);
            }
        }
    }
}
