#![allow(dead_code)]

use activemars::design::latin_hypercube;
use activemars::{
    fit_greedy, standardize, BasisFunction, DatasetSpec, FitConfig, Hinge, MarsModel, PriorSpec,
    Sign, UnivariateMeasure,
};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `x1² + x1 x2 + x2³ / 9`
pub fn simple(x: &[f64]) -> f64 {
    x[0] * x[0] + x[0] * x[1] + x[1].powi(3) / 9.0
}

/// `C` of `simple` under the uniform measure on the unit square.
pub fn c_unit_square() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[120.0, 50.0, 50.0, 21.0]) / 45.0
}

/// `C` of `simple` under the uniform measure on `{0 < x2 < x1 < 1}`.
pub fn c_lower_triangle() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1710.0, 741.0, 741.0, 322.0]) / 540.0
}

pub fn dataset(n: usize, p: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> DatasetSpec {
    let x = latin_hypercube(n, p, seed);
    let y = (0..n)
        .map(|r| f(x.row(r).iter().copied().collect::<Vec<_>>().as_slice()))
        .collect();
    DatasetSpec::new(x, y).unwrap()
}

pub fn fit(n: usize, p: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> MarsModel {
    fit_greedy(&dataset(n, p, seed, f), &FitConfig::default()).unwrap()
}

pub fn fit_with(
    n: usize,
    p: usize,
    seed: u64,
    f: impl Fn(&[f64]) -> f64,
    config: &FitConfig,
) -> MarsModel {
    fit_greedy(&dataset(n, p, seed, f), config).unwrap()
}

pub fn rmse(model: &MarsModel, data: &DatasetSpec) -> f64 {
    let pred = model.predict(data.design()).unwrap();
    let sse: f64 = pred
        .iter()
        .zip(data.response())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    (sse / data.n() as f64).sqrt()
}

pub fn random_basis(rng: &mut ChaCha8Rng, p: usize, max_degree: usize) -> BasisFunction {
    let degree = rng.random_range(1..=p.min(max_degree));
    let mut inputs: Vec<usize> = (0..p).collect();
    inputs.shuffle(rng);
    let terms = inputs[..degree]
        .iter()
        .map(|&i| {
            Hinge::new(
                i,
                if rng.random::<bool>() {
                    Sign::Pos
                } else {
                    Sign::Neg
                },
                rng.random_range(0.05..0.95),
            )
        })
        .collect();
    BasisFunction::new(terms).unwrap()
}

/// Random model whose basis never touches the inputs in `inert`.
pub fn random_model(rng: &mut ChaCha8Rng, p: usize, m: usize, inert: &[usize]) -> MarsModel {
    let live: Vec<usize> = (0..p).filter(|i| !inert.contains(i)).collect();
    let basis: Vec<BasisFunction> = (0..m)
        .map(|_| {
            let b = random_basis(rng, live.len(), 3);
            BasisFunction::new(
                b.terms()
                    .iter()
                    .map(|h| Hinge::new(live[h.index], h.sign, h.knot))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let gamma = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    MarsModel::new(p, rng.random_range(-1.0..1.0), gamma, basis, None).unwrap()
}

pub fn random_measure(rng: &mut ChaCha8Rng, family: usize) -> UnivariateMeasure {
    match family % 5 {
        0 => {
            let lo = rng.random_range(-0.3..0.4);
            UnivariateMeasure::uniform(lo, lo + rng.random_range(0.4..1.2)).unwrap()
        }
        1 => {
            UnivariateMeasure::beta(rng.random_range(0.6..5.0), rng.random_range(0.6..5.0)).unwrap()
        }
        2 => UnivariateMeasure::gamma(rng.random_range(1.0..6.0), rng.random_range(2.0..8.0))
            .unwrap(),
        3 => {
            let lo = if rng.random::<bool>() {
                f64::NEG_INFINITY
            } else {
                rng.random_range(-0.5..0.3)
            };
            UnivariateMeasure::trunc_normal(
                rng.random_range(0.0..1.0),
                rng.random_range(0.1..0.6),
                lo,
                rng.random_range(0.6..1.5),
            )
            .unwrap()
        }
        _ => {
            let w = rng.random_range(0.2..0.8);
            let first = random_measure(rng, 0);
            let family = 1 + rng.random_range(0..3);
            UnivariateMeasure::mixture(vec![(w, first), (1.0 - w, random_measure(rng, family))])
                .unwrap()
        }
    }
}

pub fn random_product(rng: &mut ChaCha8Rng, p: usize, family: Option<usize>) -> PriorSpec {
    let measures = (0..p)
        .map(|_| {
            let f = family.unwrap_or_else(|| rng.random_range(0..5));
            random_measure(rng, f)
        })
        .collect();
    PriorSpec::product(measures).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() * 0.1 + DMatrix::identity(p, p) * 0.05
}

/// A random model trained on whitened inputs together with its Gaussian
/// prior.
pub fn random_gaussian_case(rng: &mut ChaCha8Rng, p: usize, m: usize) -> (MarsModel, PriorSpec) {
    let mean: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
    let cov = random_spd(rng, p);
    let (t, _) = standardize(&mean, &cov).unwrap();
    let model = random_model(rng, p, m, &[])
        .with_input_transform(Some(t))
        .unwrap();
    (model, PriorSpec::mvn(mean, cov).unwrap())
}

/// Frobenius distance and the matching Monte Carlo standard error scale.
pub fn se_multiple(c: &DMatrix<f64>, mc: &DMatrix<f64>, se: &DMatrix<f64>) -> f64 {
    (c - mc).norm() / se.norm()
}
