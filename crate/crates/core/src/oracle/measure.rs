//! Densities and samplers for the input measures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, StandardNormal};

use crate::error::{Error, Result};
use crate::prior::{PriorSpec, UnivariateMeasure};
use crate::special::{ln_gamma, std_normal_cdf, std_normal_mass, std_normal_pdf, std_normal_sf};

/// Normal tails beyond this many standard deviations are dropped by the
/// quadrature oracle; the neglected mass is below `1e-30`.
pub const NORMAL_CLIP_SIGMAS: f64 = 12.0;

/// Probability density at `x`.
pub fn density(m: &UnivariateMeasure, x: f64) -> f64 {
    match *m {
        UnivariateMeasure::Uniform { lo, hi } => {
            if (lo..=hi).contains(&x) {
                1.0 / (hi - lo)
            } else {
                0.0
            }
        }
        UnivariateMeasure::Beta { alpha, beta } => {
            if !(x > 0.0 && x < 1.0) {
                return 0.0;
            }
            let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
            ((alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_b).exp()
        }
        UnivariateMeasure::Gamma { alpha, beta } => {
            if !(x > 0.0) {
                return 0.0;
            }
            (alpha * beta.ln() + (alpha - 1.0) * x.ln() - beta * x - ln_gamma(alpha)).exp()
        }
        UnivariateMeasure::TruncNormal {
            mu,
            sigma,
            tau0,
            tau1,
        } => {
            if !(tau0..=tau1).contains(&x) {
                return 0.0;
            }
            let z = std_normal_mass((tau0 - mu) / sigma, (tau1 - mu) / sigma);
            std_normal_pdf((x - mu) / sigma) / (sigma * z)
        }
        UnivariateMeasure::Mixture(ref c) => c.iter().map(|(w, m)| w * density(m, x)).sum(),
    }
}

/// Interval outside of which the density is treated as zero, and the points
/// inside it where the density is not smooth.
pub fn effective_support(m: &UnivariateMeasure) -> ((f64, f64), Vec<f64>) {
    match *m {
        UnivariateMeasure::TruncNormal {
            mu,
            sigma,
            tau0,
            tau1,
        } => {
            let lo = tau0.max(mu - NORMAL_CLIP_SIGMAS * sigma);
            let hi = tau1.min(mu + NORMAL_CLIP_SIGMAS * sigma);
            ((lo, hi), vec![])
        }
        UnivariateMeasure::Mixture(ref c) => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut breaks = Vec::new();
            for (_, m) in c {
                let ((a, b), _) = effective_support(m);
                lo = lo.min(a);
                hi = hi.max(b);
                breaks.extend([a, b].into_iter().filter(|v| v.is_finite()));
            }
            ((lo, hi), breaks)
        }
        _ => (m.support(), vec![]),
    }
}

fn sample_trunc_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    sigma: f64,
    tau0: f64,
    tau1: f64,
) -> f64 {
    let (a, b) = ((tau0 - mu) / sigma, (tau1 - mu) / sigma);
    let mass = std_normal_mass(a, b);
    if mass >= 0.25 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= a && z <= b {
                return mu + sigma * z;
            }
        }
    }
    // inverse CDF by bisection, on the tail side that avoids cancellation
    let u: f64 = rng.random();
    let upper = a >= 0.0;
    let (fa, fb) = if upper {
        (std_normal_sf(a), std_normal_sf(b))
    } else {
        (std_normal_cdf(a), std_normal_cdf(b))
    };
    let target = fa + u * (fb - fa);
    let (mut lo, mut hi) = (a, b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let fm = if upper {
            std_normal_sf(mid)
        } else {
            std_normal_cdf(mid)
        };
        // sf decreases, cdf increases
        if (fm < target) != upper {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mu + sigma * 0.5 * (lo + hi)
}

fn pick<'a, T, R: Rng + ?Sized>(rng: &mut R, comps: &'a [(f64, T)]) -> &'a T {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (w, c) in comps {
        acc += w;
        if u < acc {
            return c;
        }
    }
    &comps.last().expect("validated non-empty").1
}

pub fn sample_univariate<R: Rng + ?Sized>(m: &UnivariateMeasure, rng: &mut R) -> f64 {
    match *m {
        UnivariateMeasure::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        UnivariateMeasure::Beta { alpha, beta } => {
            BetaDist::new(alpha, beta).expect("validated").sample(rng)
        }
        UnivariateMeasure::Gamma { alpha, beta } => GammaDist::new(alpha, 1.0 / beta)
            .expect("validated")
            .sample(rng),
        UnivariateMeasure::TruncNormal {
            mu,
            sigma,
            tau0,
            tau1,
        } => sample_trunc_normal(rng, mu, sigma, tau0, tau1),
        UnivariateMeasure::Mixture(ref c) => sample_univariate(pick(rng, c), rng),
    }
}

/// Draws joint samples; Gaussian components use a Cholesky factor.
pub struct Sampler<'a> {
    prior: &'a PriorSpec,
    factors: Vec<Option<DMatrix<f64>>>,
}

fn collect_factors(prior: &PriorSpec, out: &mut Vec<Option<DMatrix<f64>>>) -> Result<()> {
    match prior {
        PriorSpec::Product(_) => out.push(None),
        PriorSpec::Mvn { cov, .. } => {
            let l = cov.clone().cholesky().ok_or_else(|| {
                Error::InvalidMeasure("covariance is not positive definite".into())
            })?;
            out.push(Some(l.l()));
        }
        PriorSpec::Mixture(c) => {
            out.push(None);
            for (_, s) in c {
                collect_factors(s, out)?;
            }
        }
    }
    Ok(())
}

impl<'a> Sampler<'a> {
    pub fn new(prior: &'a PriorSpec) -> Result<Self> {
        let mut factors = Vec::new();
        collect_factors(prior, &mut factors)?;
        Ok(Sampler { prior, factors })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut idx = 0;
        self.draw(self.prior, &mut idx, rng, out);
    }

    // `idx` walks the factor list in the same pre-order as `collect_factors`.
    fn draw<R: Rng + ?Sized>(
        &self,
        prior: &PriorSpec,
        idx: &mut usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        let here = *idx;
        *idx += 1;
        match prior {
            PriorSpec::Product(c) => {
                for (o, m) in out.iter_mut().zip(c) {
                    *o = sample_univariate(m, rng);
                }
            }
            PriorSpec::Mvn { mean, .. } => {
                let l = self.factors[here]
                    .as_ref()
                    .expect("factor for every Gaussian");
                let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = l * z;
                for (k, o) in out.iter_mut().enumerate() {
                    *o = mean[k] + x[k];
                }
            }
            PriorSpec::Mixture(c) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = c.len() - 1;
                for (k, (w, _)) in c.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                // skip the factor slots of components before the chosen one
                for (_, s) in &c[..chosen] {
                    *idx += slot_count(s);
                }
                self.draw(&c[chosen].1, idx, rng, out);
            }
        }
    }
}

fn slot_count(prior: &PriorSpec) -> usize {
    match prior {
        PriorSpec::Mixture(c) => 1 + c.iter().map(|(_, s)| slot_count(s)).sum::<usize>(),
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_mean(m: &UnivariateMeasure, n: usize) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..n).map(|_| sample_univariate(m, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn sample_means_match_first_moments() {
        let cases = vec![
            UnivariateMeasure::uniform(-1.0, 3.0).unwrap(),
            UnivariateMeasure::beta(2.0, 5.0).unwrap(),
            UnivariateMeasure::gamma(3.0, 2.0).unwrap(),
            UnivariateMeasure::trunc_normal(0.0, 1.0, 2.5, 4.0).unwrap(),
            UnivariateMeasure::trunc_normal(1.0, 0.5, -3.0, 0.2).unwrap(),
            UnivariateMeasure::mixture(vec![
                (0.4, UnivariateMeasure::uniform(0.0, 1.0).unwrap()),
                (0.6, UnivariateMeasure::normal(5.0, 1.0).unwrap()),
            ])
            .unwrap(),
        ];
        for m in cases {
            let (mean, se) = sample_mean(&m, 200_000);
            let exact = m.xi(1, f64::NEG_INFINITY, f64::INFINITY).unwrap();
            assert!(
                (mean - exact).abs() < 4.0 * se,
                "{m:?}: {mean} vs {exact} (se {se})"
            );
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        use super::super::quadrature::integrate_pieces;
        let m = UnivariateMeasure::mixture(vec![
            (0.5, UnivariateMeasure::beta(0.7, 2.0).unwrap()),
            (
                0.5,
                UnivariateMeasure::trunc_normal(0.2, 0.1, 0.0, f64::INFINITY).unwrap(),
            ),
        ])
        .unwrap();
        let ((lo, hi), breaks) = effective_support(&m);
        let q = integrate_pieces(|x| density(&m, x), lo, hi, &breaks, 1e-11).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mvn_sample_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let prior = PriorSpec::mvn(vec![1.0, -1.0], cov.clone()).unwrap();
        let sampler = Sampler::new(&prior).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut s = DMatrix::zeros(2, 2);
        let mut x = [0.0; 2];
        for _ in 0..n {
            sampler.sample(&mut rng, &mut x);
            let d = DVector::from_column_slice(&[x[0] - 1.0, x[1] + 1.0]);
            s += &d * d.transpose();
        }
        s /= n as f64;
        assert!((s - cov).amax() < 0.03);
    }
}
