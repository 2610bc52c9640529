//! Input measures and their truncated moments `ξ(r | a, b, ρ) = ∫_a^b x^r ρ(x) dx`.

mod io;

pub use io::{MeasureEntry, PriorFile, PriorRepr, WeightedPrior, PRIOR_FORMAT_VERSION};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::affine::AffineMap;
use crate::error::{Error, Result};
use crate::special::{
    regularized_incomplete_beta, regularized_lower_gamma, std_normal_mass, std_normal_moments,
};

/// Tolerance on mixture weights summing to one.
pub const WEIGHT_TOL: f64 = 1e-12;

/// One-dimensional input measure.
#[derive(Clone, Debug, PartialEq)]
pub enum UnivariateMeasure {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// Shape `alpha`, rate `beta`.
    Gamma {
        alpha: f64,
        beta: f64,
    },
    /// Normal `N(mu, sigma²)` restricted to `[tau0, tau1]` and renormalized.
    TruncNormal {
        mu: f64,
        sigma: f64,
        tau0: f64,
        tau1: f64,
    },
    /// Finite mixture of non-mixture measures.
    Mixture(Vec<(f64, UnivariateMeasure)>),
}

fn check_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0;
    for w in weights {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "mixture weight {w} must be positive"
            )));
        }
        total += w;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidMeasure("mixture has no components".into()));
    }
    // allow for rounding in long sums
    if (total - 1.0).abs() > WEIGHT_TOL + count as f64 * f64::EPSILON {
        return Err(Error::InvalidMeasure(format!(
            "mixture weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

impl UnivariateMeasure {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::Uniform { lo, hi }.validated()
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        Self::Beta { alpha, beta }.validated()
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::Gamma {
            alpha: shape,
            beta: rate,
        }
        .validated()
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::trunc_normal(mu, sigma, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn trunc_normal(mu: f64, sigma: f64, tau0: f64, tau1: f64) -> Result<Self> {
        Self::TruncNormal {
            mu,
            sigma,
            tau0,
            tau1,
        }
        .validated()
    }

    pub fn mixture(components: Vec<(f64, UnivariateMeasure)>) -> Result<Self> {
        Self::Mixture(components).validated()
    }

    pub fn standard_normal() -> Self {
        Self::TruncNormal {
            mu: 0.0,
            sigma: 1.0,
            tau0: f64::NEG_INFINITY,
            tau1: f64::INFINITY,
        }
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMeasure(msg));
        match *self {
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("uniform needs finite lo < hi, got [{lo}, {hi}]"));
                }
            }
            Self::Beta { alpha, beta } | Self::Gamma { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                    return bad(format!(
                        "parameters must be positive and finite, got ({alpha}, {beta})"
                    ));
                }
            }
            Self::TruncNormal {
                mu,
                sigma,
                tau0,
                tau1,
            } => {
                if !(mu.is_finite() && sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!(
                        "normal needs finite mu and sigma > 0, got ({mu}, {sigma})"
                    ));
                }
                if tau0.is_nan() || tau1.is_nan() || tau0 >= tau1 {
                    return bad(format!(
                        "truncation needs tau0 < tau1, got [{tau0}, {tau1}]"
                    ));
                }
                if std_normal_mass((tau0 - mu) / sigma, (tau1 - mu) / sigma) <= 0.0 {
                    return bad("truncation interval carries no probability mass".into());
                }
            }
            Self::Mixture(ref comps) => {
                check_weights(comps.iter().map(|c| c.0))?;
                for (_, m) in comps {
                    if matches!(m, Self::Mixture(_)) {
                        return bad("mixture components may not be mixtures".into());
                    }
                    m.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Smallest closed interval carrying all of the mass.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { lo, hi } => (lo, hi),
            Self::Beta { .. } => (0.0, 1.0),
            Self::Gamma { .. } => (0.0, f64::INFINITY),
            Self::TruncNormal { tau0, tau1, .. } => (tau0, tau1),
            Self::Mixture(ref c) => c
                .iter()
                .map(|(_, m)| m.support())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                    (lo.min(a), hi.max(b))
                }),
        }
    }

    /// Truncated moment `∫_a^b x^r ρ(x) dx` for `r ∈ {0, 1, 2}`. Bounds may be
    /// infinite; `a >= b` gives exactly zero.
    pub fn xi(&self, r: u32, a: f64, b: f64) -> Result<f64> {
        if r > 2 {
            return Err(Error::InvalidArgument(format!(
                "moment order must be 0, 1 or 2, got {r}"
            )));
        }
        if a.is_nan() || b.is_nan() {
            return Err(Error::InvalidArgument("NaN integration bound".into()));
        }
        if a >= b {
            return Ok(0.0);
        }
        match *self {
            Self::Uniform { lo, hi } => {
                let at = a.clamp(lo, hi);
                let bt = b.clamp(lo, hi);
                if at >= bt {
                    return Ok(0.0);
                }
                let k = (r + 1) as i32;
                Ok((bt.powi(k) - at.powi(k)) / (k as f64 * (hi - lo)))
            }
            Self::Beta { alpha, beta } => {
                let at = a.clamp(0.0, 1.0);
                let bt = b.clamp(0.0, 1.0);
                if at >= bt {
                    return Ok(0.0);
                }
                let ar = alpha + r as f64;
                let scale: f64 = (0..r)
                    .map(|k| (alpha + k as f64) / (alpha + beta + k as f64))
                    .product();
                let hi = regularized_incomplete_beta(bt, ar, beta)?;
                let lo = regularized_incomplete_beta(at, ar, beta)?;
                Ok(scale * (hi - lo).max(0.0))
            }
            Self::Gamma { alpha, beta } => {
                let at = a.max(0.0);
                let bt = b.max(0.0);
                if at >= bt {
                    return Ok(0.0);
                }
                let ar = alpha + r as f64;
                let scale: f64 = (0..r).map(|k| (alpha + k as f64) / beta).product();
                let hi = regularized_lower_gamma(ar, beta * bt)?;
                let lo = regularized_lower_gamma(ar, beta * at)?;
                Ok(scale * (hi - lo).max(0.0))
            }
            Self::TruncNormal {
                mu,
                sigma,
                tau0,
                tau1,
            } => {
                let at = a.max(tau0);
                let bt = at.max(b.min(tau1));
                if at >= bt {
                    return Ok(0.0);
                }
                let z = std_normal_mass((tau0 - mu) / sigma, (tau1 - mu) / sigma);
                let [m0, m1, m2] = std_normal_moments((at - mu) / sigma, (bt - mu) / sigma);
                let v = match r {
                    0 => m0,
                    1 => mu * m0 + sigma * m1,
                    _ => mu * mu * m0 + 2.0 * mu * sigma * m1 + sigma * sigma * m2,
                };
                Ok(v / z)
            }
            Self::Mixture(ref comps) => {
                let mut s = 0.0;
                for (w, m) in comps {
                    s += w * m.xi(r, a, b)?;
                }
                Ok(s)
            }
        }
    }

    /// Image of the measure under `x ↦ s x + c` (`s ≠ 0`), when it stays in
    /// the family.
    pub fn affine_image(&self, s: f64, c: f64) -> Option<UnivariateMeasure> {
        let map = |v: f64| s * v + c;
        let ends = |a: f64, b: f64| {
            let (x, y) = (map(a), map(b));
            if x <= y {
                (x, y)
            } else {
                (y, x)
            }
        };
        match *self {
            Self::Uniform { lo, hi } => {
                let (lo, hi) = ends(lo, hi);
                Some(Self::Uniform { lo, hi })
            }
            Self::TruncNormal {
                mu,
                sigma,
                tau0,
                tau1,
            } => {
                let (tau0, tau1) = ends(tau0, tau1);
                Some(Self::TruncNormal {
                    mu: map(mu),
                    sigma: sigma * s.abs(),
                    tau0,
                    tau1,
                })
            }
            Self::Gamma { alpha, beta } if s > 0.0 && c == 0.0 => Some(Self::Gamma {
                alpha,
                beta: beta / s,
            }),
            Self::Beta { .. } | Self::Gamma { .. } if s == 1.0 && c == 0.0 => Some(self.clone()),
            Self::Mixture(ref comps) => comps
                .iter()
                .map(|(w, m)| m.affine_image(s, c).map(|m| (*w, m)))
                .collect::<Option<Vec<_>>>()
                .map(Self::Mixture),
            _ => None,
        }
    }
}

/// Joint input measure.
#[derive(Clone, Debug, PartialEq)]
pub enum PriorSpec {
    /// Independent coordinates.
    Product(Vec<UnivariateMeasure>),
    /// `N(mean, cov)` with `cov` symmetric positive definite.
    Mvn {
        mean: Vec<f64>,
        cov: DMatrix<f64>,
    },
    Mixture(Vec<(f64, PriorSpec)>),
}

impl PriorSpec {
    pub fn product(components: Vec<UnivariateMeasure>) -> Result<Self> {
        Self::Product(components).validated()
    }

    pub fn mvn(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::Mvn { mean, cov }.validated()
    }

    pub fn mixture(components: Vec<(f64, PriorSpec)>) -> Result<Self> {
        Self::Mixture(components).validated()
    }

    /// Uniform on `[0, 1]^p`.
    pub fn unit_cube(p: usize) -> Self {
        Self::Product(vec![UnivariateMeasure::Uniform { lo: 0.0, hi: 1.0 }; p])
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        match self {
            Self::Product(c) => c.len(),
            Self::Mvn { mean, .. } => mean.len(),
            Self::Mixture(c) => c.first().map_or(0, |(_, s)| s.p()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Product(c) => {
                if c.is_empty() {
                    return Err(Error::InvalidMeasure(
                        "product prior has no coordinates".into(),
                    ));
                }
                c.iter().try_for_each(UnivariateMeasure::validate)
            }
            Self::Mvn { mean, cov } => {
                let p = mean.len();
                if p == 0 {
                    return Err(Error::InvalidMeasure("MVN prior has dimension 0".into()));
                }
                if cov.nrows() != p || cov.ncols() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        got: cov.nrows(),
                    });
                }
                if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidMeasure("non-finite MVN parameter".into()));
                }
                sqrt_inv_cov(cov).map(|_| ())
            }
            Self::Mixture(c) => {
                check_weights(c.iter().map(|x| x.0))?;
                let p = c[0].1.p();
                for (_, s) in c {
                    s.validate()?;
                    if s.p() != p {
                        return Err(Error::DimensionMismatch {
                            expected: p,
                            got: s.p(),
                        });
                    }
                }
                Ok(())
            }
        }
    }
}

/// Symmetric inverse square root `Σ^{-1/2}` via the eigendecomposition.
fn sqrt_inv_cov(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = (cov - cov.transpose()).amax();
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidMeasure(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(crate::affine::symmetrize(cov.clone()));
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-14 * max) {
        return Err(Error::InvalidMeasure(format!(
            "covariance is not positive definite (eigenvalue {min:e})"
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(crate::affine::symmetrize(
        &eig.eigenvectors * d * eig.eigenvectors.transpose(),
    ))
}

/// Map `z = Σ^{-1/2}(x - μ)` taking `N(μ, Σ)` to the standard normal product.
pub fn standardize(
    mean: &[f64],
    cov: &DMatrix<f64>,
) -> Result<(AffineMap, Vec<UnivariateMeasure>)> {
    let p = mean.len();
    if cov.nrows() != p || cov.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: cov.nrows(),
        });
    }
    let is_diag = (0..p).all(|i| (0..p).all(|j| i == j || cov[(i, j)] == 0.0));
    let map = if is_diag {
        if (0..p).any(|i| !(cov[(i, i)] > 0.0)) {
            return Err(Error::InvalidMeasure(
                "covariance is not positive definite".into(),
            ));
        }
        let a: Vec<f64> = (0..p).map(|i| 1.0 / cov[(i, i)].sqrt()).collect();
        let b = a.iter().zip(mean).map(|(ai, m)| -ai * m).collect();
        AffineMap::diagonal(a, b)?
    } else {
        let a = sqrt_inv_cov(cov)?;
        let b = -(&a * nalgebra::DVector::from_column_slice(mean));
        AffineMap::dense(a, b.iter().copied().collect())?
    };
    Ok((map, vec![UnivariateMeasure::standard_normal(); p]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INF: f64 = f64::INFINITY;

    fn families() -> Vec<UnivariateMeasure> {
        vec![
            UnivariateMeasure::uniform(0.0, 1.0).unwrap(),
            UnivariateMeasure::uniform(-2.0, 3.0).unwrap(),
            UnivariateMeasure::beta(2.5, 0.7).unwrap(),
            UnivariateMeasure::gamma(2.0, 3.0).unwrap(),
            UnivariateMeasure::trunc_normal(0.5, 0.3, 0.0, 1.0).unwrap(),
            UnivariateMeasure::normal(-1.0, 2.0).unwrap(),
            UnivariateMeasure::mixture(vec![
                (0.3, UnivariateMeasure::beta(3.0, 3.0).unwrap()),
                (0.7, UnivariateMeasure::gamma(1.5, 0.5).unwrap()),
            ])
            .unwrap(),
        ]
    }

    #[test]
    fn total_mass_is_one() {
        for m in families() {
            assert!((m.xi(0, -INF, INF).unwrap() - 1.0).abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn unit_uniform_moments() {
        let u = UnivariateMeasure::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.xi(1, 0.0, 1.0).unwrap(), 0.5);
        assert!((u.xi(2, 0.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(u.xi(0, 0.3, 0.2).unwrap(), 0.0);
        assert_eq!(u.xi(0, 1.5, INF).unwrap(), 0.0);
    }

    #[test]
    fn gamma_second_moment() {
        let g = UnivariateMeasure::gamma(2.0, 3.0).unwrap();
        assert!((g.xi(2, 0.0, INF).unwrap() - 6.0 / 9.0).abs() < 1e-12);
        assert!((g.xi(1, -INF, INF).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn normal_raw_moments() {
        let n = UnivariateMeasure::normal(1.5, 0.5).unwrap();
        assert!((n.xi(1, -INF, INF).unwrap() - 1.5).abs() < 1e-12);
        assert!((n.xi(2, -INF, INF).unwrap() - (2.25 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn invalid_arguments() {
        let u = UnivariateMeasure::uniform(0.0, 1.0).unwrap();
        assert!(u.xi(3, 0.0, 1.0).is_err());
        assert!(u.xi(0, f64::NAN, 1.0).is_err());
        assert!(UnivariateMeasure::uniform(1.0, 1.0).is_err());
        assert!(UnivariateMeasure::beta(0.0, 1.0).is_err());
        assert!(UnivariateMeasure::trunc_normal(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(UnivariateMeasure::mixture(vec![(0.5, u.clone()), (0.6, u.clone())]).is_err());
        let inner = UnivariateMeasure::mixture(vec![(1.0, u.clone())]).unwrap();
        assert!(UnivariateMeasure::mixture(vec![(1.0, inner)]).is_err());
    }

    #[test]
    fn tail_cancellation_is_finite_and_nonnegative() {
        let n = UnivariateMeasure::normal(0.0, 1.0).unwrap();
        for &a in &[6.0, 7.0, 7.9, -7.9, -6.5] {
            let b = a + 1e-7;
            let v = n.xi(0, a, b).unwrap();
            assert!(v.is_finite() && v > 0.0, "a={a}: {v}");
            for r in 1..=2 {
                assert!(n.xi(r, a, b).unwrap().is_finite());
            }
        }
    }

    #[test]
    fn standardize_examples() {
        let (a, m) = standardize(&[0.0, 0.0], &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(a.matrix(), DMatrix::identity(2, 2));
        assert_eq!(a.offset(), &[0.0, 0.0]);
        assert_eq!(m, vec![UnivariateMeasure::standard_normal(); 2]);
        let (a, _) = standardize(
            &[1.0, 2.0],
            &DMatrix::from_diagonal(&nalgebra::dvector![4.0, 9.0]),
        )
        .unwrap();
        assert_eq!(
            a.matrix(),
            DMatrix::from_diagonal(&nalgebra::dvector![0.5, 1.0 / 3.0])
        );
        assert_eq!(a.offset(), &[-0.5, -2.0 / 3.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(standardize(&[0.0, 0.0], &bad).is_err());
    }

    #[test]
    fn standardize_whitens_random_spd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let l = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let cov = &l * l.transpose() + DMatrix::identity(5, 5) * 0.1;
            let mean: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (map, _) = standardize(&mean, &cov).unwrap();
            let a = map.matrix();
            let id = &a * &cov * a.transpose();
            assert!((id - DMatrix::identity(5, 5)).amax() < 1e-10);
            assert!(map.apply(&mean).iter().all(|z| z.abs() < 1e-12));
        }
    }

    #[test]
    fn affine_image_moves_mass() {
        for m in families() {
            let Some(img) = m.affine_image(-2.0, 0.5) else {
                continue;
            };
            // P(x in [a, b]) = P(y in image of [a, b])
            let (a, b) = (0.1, 0.8);
            let lhs = m.xi(0, a, b).unwrap();
            let rhs = img.xi(0, -2.0 * b + 0.5, -2.0 * a + 0.5).unwrap();
            assert!((lhs - rhs).abs() < 1e-13, "{m:?}");
        }
    }

    proptest! {
        #[test]
        fn additivity_and_monotonicity(
            which in 0usize..7, r in 0u32..3,
            x in -3.0f64..4.0, d1 in 0.0f64..2.0, d2 in 0.0f64..2.0,
        ) {
            let m = &families()[which];
            let (a, b, c) = (x, x + d1, x + d1 + d2);
            let ab = m.xi(r, a, b).unwrap();
            let bc = m.xi(r, b, c).unwrap();
            let ac = m.xi(r, a, c).unwrap();
            prop_assert!((ab + bc - ac).abs() <= 1e-12 * (1.0 + ac.abs()));
            if r == 0 {
                prop_assert!(ac + 1e-15 >= ab && ac + 1e-15 >= bc);
            }
        }

        #[test]
        fn beta_one_one_is_unit_uniform(r in 0u32..3, a in -0.5f64..1.5, w in 0.0f64..1.5) {
            let beta = UnivariateMeasure::beta(1.0, 1.0).unwrap();
            let unif = UnivariateMeasure::uniform(0.0, 1.0).unwrap();
            let (x, y) = (beta.xi(r, a, a + w).unwrap(), unif.xi(r, a, a + w).unwrap());
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
