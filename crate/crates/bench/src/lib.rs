//! Shared fixtures for the benchmarks.

use activemars::design::latin_hypercube;
use activemars::{fit_greedy, DatasetSpec, FitConfig, MarsModel};

/// `x₁² + x₁x₂ + x₂³/9` on the first two inputs; the rest are inert.
pub fn quadratic(x: &[f64]) -> f64 {
    x[0] * x[0] + x[0] * x[1] + x[1].powi(3) / 9.0
}

/// Latin hypercube sample of `quadratic` in `p` dimensions.
pub fn dataset(n: usize, p: usize, seed: u64) -> DatasetSpec {
    let x = latin_hypercube(n, p, seed);
    let y = x
        .row_iter()
        .map(|r| quadratic(&r.iter().copied().collect::<Vec<_>>()))
        .collect();
    DatasetSpec::new(x, y).expect("valid dataset")
}

/// Surrogate with at most `max_basis` terms fitted to [`dataset`].
pub fn model(n: usize, p: usize, max_basis: usize, seed: u64) -> MarsModel {
    let config = FitConfig {
        max_basis,
        ..FitConfig::default()
    };
    fit_greedy(&dataset(n, p, seed), &config).expect("fit succeeds")
}
