//! Special functions behind the truncated-moment kernels.
//!
//! `ln_gamma` and `erfc` come from `libm`; the incomplete beta and gamma
//! functions switch between a power series and a Lentz continued fraction.
//! Prefactors for large shape parameters are assembled from Stirling
//! corrections so that `a ln x - lnB(a, b)` does not cancel catastrophically.

use crate::error::{Error, Result};

const MAX_ITER: usize = 20_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `lnΓ(x) - [(x - 1/2) ln x - x + ln √(2π)]` for `x >= 10`.
fn stirling_correction(x: f64) -> f64 {
    let x2 = 1.0 / (x * x);
    (1.0 / 12.0
        - x2 * (1.0 / 360.0 - x2 * (1.0 / 1260.0 - x2 * (1.0 / 1680.0 - x2 * (1.0 / 1188.0)))))
        / x
}

/// `x^a (1-x)^b / B(a, b)`.
fn beta_prefactor(x: f64, a: f64, b: f64) -> f64 {
    if a.min(b) >= 10.0 {
        let s = a + b;
        let da = (x * b - (1.0 - x) * a) / a;
        let db = ((1.0 - x) * a - x * b) / b;
        let log = a * da.ln_1p() + b * db.ln_1p() + 0.5 * (a * b / s).ln()
            - LN_SQRT_2PI
            - (stirling_correction(a) + stirling_correction(b) - stirling_correction(s));
        log.exp()
    } else {
        (a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)).exp()
    }
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence {
        function: "regularized_incomplete_beta",
        args: vec![x, a, b],
        iterations: MAX_ITER,
    })
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || x.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "incomplete beta requires a, b > 0 (x={x}, a={a}, b={b})"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let r = if x < (a + 1.0) / (a + b + 2.0) {
        beta_prefactor(x, a, b) * beta_cf(x, a, b)? / a
    } else {
        1.0 - beta_prefactor(1.0 - x, b, a) * beta_cf(1.0 - x, b, a)? / b
    };
    Ok(r.clamp(0.0, 1.0))
}

/// `x^a e^{-x} / Γ(a)`.
fn gamma_prefactor(x: f64, a: f64) -> f64 {
    if a >= 10.0 {
        let u = (x - a) / a;
        let log = a * (u.ln_1p() - u) + 0.5 * (a.ln()) - LN_SQRT_2PI - stirling_correction(a);
        log.exp()
    } else {
        (a * x.ln() - x - ln_gamma(a)).exp()
    }
}

/// Regularized lower incomplete gamma `P(a, x) = γ(a, x) / Γ(a)`.
pub fn regularized_lower_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || x.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "incomplete gamma requires a > 0 (x={x}, a={a})"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        // Series: P = prefactor / a * Σ x^n / ((a+1)...(a+n)).
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                return Ok((sum * gamma_prefactor(x, a)).clamp(0.0, 1.0));
            }
        }
        Err(Error::NoConvergence {
            function: "regularized_lower_gamma",
            args: vec![x, a],
            iterations: MAX_ITER,
        })
    } else {
        // Continued fraction for Q = 1 - P.
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                return Ok((1.0 - gamma_prefactor(x, a) * h).clamp(0.0, 1.0));
            }
        }
        Err(Error::NoConvergence {
            function: "regularized_lower_gamma",
            args: vec![x, a],
            iterations: MAX_ITER,
        })
    }
}

/// Lower incomplete gamma `γ(a, x) = ∫_0^x t^{a-1} e^{-t} dt` (unregularized).
pub fn lower_incomplete_gamma(x: f64, a: f64) -> Result<f64> {
    Ok(regularized_lower_gamma(a, x)? * ln_gamma(a).exp())
}

pub fn std_normal_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z == f64::INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn std_normal_sf(z: f64) -> f64 {
    std_normal_cdf(-z)
}

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// `Φ(hi) - Φ(lo)` for `lo <= hi`, evaluated on the side of the distribution
/// where no cancellation against 1 occurs. Narrow intervals are integrated
/// directly so the result keeps full relative precision far in the tails.
pub fn std_normal_mass(lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let width = hi - lo;
    let scale = 1.0f64.max(lo.abs()).max(hi.abs());
    if lo.is_finite() && hi.is_finite() && width * scale < 0.25 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * width;
        let s: f64 = GL8
            .iter()
            .map(|&(x, w)| w * (std_normal_pdf(mid - half * x) + std_normal_pdf(mid + half * x)))
            .sum();
        return half * s;
    }
    let m = if lo >= 0.0 {
        std_normal_sf(lo) - std_normal_sf(hi)
    } else if hi <= 0.0 {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    } else {
        1.0 - std_normal_cdf(lo) - std_normal_sf(hi)
    };
    m.max(0.0)
}

/// `[∫ φ, ∫ u φ, ∫ u² φ]` over `[lo, hi]` for the standard normal density.
pub fn std_normal_moments(lo: f64, hi: f64) -> [f64; 3] {
    if !(hi > lo) {
        return [0.0; 3];
    }
    let width = hi - lo;
    let scale = 1.0f64.max(lo.abs()).max(hi.abs());
    if lo.is_finite() && hi.is_finite() && width * scale < 0.25 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * width;
        let mut m = [0.0; 3];
        for &(x, w) in &GL8 {
            for u in [mid - half * x, mid + half * x] {
                let d = w * std_normal_pdf(u);
                m[0] += d;
                m[1] += d * u;
                m[2] += d * u * u;
            }
        }
        return m.map(|v| half * v);
    }
    let m0 = std_normal_mass(lo, hi);
    let zphi = |z: f64| {
        if z.is_infinite() {
            0.0
        } else {
            z * std_normal_pdf(z)
        }
    };
    [
        m0,
        std_normal_pdf(lo) - std_normal_pdf(hi),
        (m0 + zphi(lo) - zphi(hi)).max(0.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_symmetry_point() {
        assert!((regularized_incomplete_beta(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn beta_closed_forms() {
        // I_x(1, b) = 1 - (1-x)^b, I_x(a, 1) = x^a.
        for &x in &[0.01, 0.2, 0.5, 0.77, 0.999] {
            for &s in &[0.3, 1.0, 2.5, 17.0, 150.0] {
                let lhs = regularized_incomplete_beta(x, 1.0, s).unwrap();
                assert!(
                    (lhs - (1.0 - (1.0 - x).powf(s))).abs() < 1e-13,
                    "x={x} b={s}"
                );
                let lhs = regularized_incomplete_beta(x, s, 1.0).unwrap();
                assert!((lhs - x.powf(s)).abs() < 1e-13, "x={x} a={s}");
            }
        }
    }

    #[test]
    fn beta_reflection_with_large_parameters() {
        for &(a, b) in &[(12.0, 40.0), (500.0, 300.0), (1e4, 9e3)] {
            for &x in &[0.1, 0.3, 0.5, 0.52, 0.6, 0.9] {
                let lhs = regularized_incomplete_beta(x, a, b).unwrap();
                let rhs = 1.0 - regularized_incomplete_beta(1.0 - x, b, a).unwrap();
                assert!((lhs - rhs).abs() < 1e-12, "a={a} b={b} x={x}");
            }
        }
    }

    #[test]
    fn beta_binomial_identity() {
        // I_x(k, n-k+1) = P(Binomial(n, x) >= k).
        let (n, x) = (30u32, 0.37f64);
        for k in 1..=n {
            let mut tail = 0.0;
            for j in k..=n {
                let lc = ln_gamma(n as f64 + 1.0)
                    - ln_gamma(j as f64 + 1.0)
                    - ln_gamma((n - j) as f64 + 1.0);
                tail += (lc + j as f64 * x.ln() + (n - j) as f64 * (1.0 - x).ln()).exp();
            }
            let v = regularized_incomplete_beta(x, k as f64, (n - k + 1) as f64).unwrap();
            assert!((v - tail).abs() < 1e-13, "k={k}: {v} vs {tail}");
        }
    }

    #[test]
    fn gamma_integer_shape_matches_poisson_tail() {
        // P(k, x) = 1 - e^{-x} Σ_{j<k} x^j / j!.
        for &x in &[0.1, 1.0, 4.5, 12.0, 40.0] {
            for k in 1..25u32 {
                let mut term = 1.0;
                let mut s = 0.0;
                for j in 0..k {
                    if j > 0 {
                        term *= x / j as f64;
                    }
                    s += term;
                }
                let expect = 1.0 - (-x).exp() * s;
                let got = regularized_lower_gamma(k as f64, x).unwrap();
                assert!(
                    (got - expect).abs() < 1e-12,
                    "k={k} x={x}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn gamma_half_shape_is_erf() {
        for &x in &[0.01f64, 0.5, 2.0, 9.0, 30.0] {
            let expect = libm::erf(x.sqrt());
            assert!(
                (regularized_lower_gamma(0.5, x).unwrap() - expect).abs() < 1e-13,
                "x={x}"
            );
        }
    }

    #[test]
    fn gamma_normalization_at_infinity() {
        for &a in &[0.3, 1.0, 4.2, 30.0] {
            let v = lower_incomplete_gamma(f64::INFINITY, a).unwrap() / ln_gamma(a).exp();
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn gamma_large_shape_near_mode() {
        // Median of Gamma(a) is close to a - 1/3.
        let a = 5000.0;
        let v = regularized_lower_gamma(a, a - 1.0 / 3.0).unwrap();
        assert!((v - 0.5).abs() < 1e-3);
    }

    #[test]
    fn normal_moments_agree_across_branches() {
        // narrow branch vs. closed form on intervals just around the switch
        for &(lo, hi) in &[(0.1, 0.34), (-2.0, -1.9), (3.0, 3.08)] {
            let a = std_normal_moments(lo, hi);
            let mid = 0.5 * (lo + hi);
            let b = [
                std_normal_mass(lo, mid) + std_normal_mass(mid, hi),
                std_normal_pdf(lo) - std_normal_pdf(hi),
                std_normal_mass(lo, hi) + lo * std_normal_pdf(lo) - hi * std_normal_pdf(hi),
            ];
            for k in 0..3 {
                assert!(
                    (a[k] - b[k]).abs() < 1e-14,
                    "{lo} {hi} k={k}: {} vs {}",
                    a[k],
                    b[k]
                );
            }
        }
        let full = std_normal_moments(f64::NEG_INFINITY, f64::INFINITY);
        assert!(
            (full[0] - 1.0).abs() < 1e-15 && full[1].abs() < 1e-15 && (full[2] - 1.0).abs() < 1e-15
        );
    }

    #[test]
    fn normal_cdf_and_mass() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_eq!(std_normal_cdf(f64::INFINITY), 1.0);
        assert!((std_normal_mass(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-13);
        assert_eq!(std_normal_mass(f64::NEG_INFINITY, f64::INFINITY), 1.0);
        // far tail, narrow interval: finite, positive, close to width * pdf
        let lo = 7.5;
        let hi = lo + 1e-9;
        let m = std_normal_mass(lo, hi);
        let w = hi - lo;
        assert!(m > 0.0 && ((m / (w * std_normal_pdf(lo + 0.5 * w))) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_arguments() {
        assert!(regularized_incomplete_beta(0.5, 0.0, 1.0).is_err());
        assert!(regularized_lower_gamma(-1.0, 1.0).is_err());
    }
}
