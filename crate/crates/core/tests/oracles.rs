mod common;

use activemars::oracle::{mc_c, quad_c, Method};
use activemars::{
    compute_c, BasisFunction, ComputeOptions, MarsModel, PriorSpec, Sign, UnivariateMeasure,
};
use common::*;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn linear_function_has_constant_gradient() {
    // c x0 = c [x0 - 0.3]_+ - c [0.3 - x0]_+ + 0.3 c
    let c = 1.7;
    let basis = vec![
        BasisFunction::hinge(0, Sign::Pos, 0.3),
        BasisFunction::hinge(0, Sign::Neg, 0.3),
    ];
    let model = MarsModel::new(3, 0.3 * c, vec![c, -c], basis, None).unwrap();
    let prior = PriorSpec::product(vec![
        UnivariateMeasure::beta(2.0, 3.0).unwrap(),
        UnivariateMeasure::gamma(2.0, 1.0).unwrap(),
        UnivariateMeasure::uniform(-1.0, 1.0).unwrap(),
    ])
    .unwrap();
    let mut expected = DMatrix::zeros(3, 3);
    expected[(0, 0)] = c * c;
    let mc = mc_c(&model, &prior, 10_000, 3).unwrap();
    assert!((&mc.value - &expected).amax() < 1e-12);
    assert_eq!(mc.method, Method::MonteCarlo);
    assert!(
        (compute_c(&model, &prior, &ComputeOptions::default())
            .unwrap()
            .values
            - &expected)
            .amax()
            < 1e-12
    );
}

#[test]
fn quadrature_is_exact_for_uniform_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let model = random_model(&mut rng, 4, 10, &[2]);
        let prior = PriorSpec::unit_cube(4);
        let c = compute_c(&model, &prior, &ComputeOptions::default())
            .unwrap()
            .values;
        let q = quad_c(&model, &prior, 1e-13).unwrap();
        assert!(q.std_error.is_none());
        assert!((&c - &q.value).norm() < 1e-10, "{}", (&c - &q.value).norm());
    }
}

#[test]
fn quadrature_matches_other_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for family in 1..5 {
        let model = random_model(&mut rng, 3, 8, &[]);
        let prior = random_product(&mut rng, 3, Some(family));
        let c = compute_c(&model, &prior, &ComputeOptions::default())
            .unwrap()
            .values;
        let q = quad_c(&model, &prior, 1e-11).unwrap();
        assert!((&c - &q.value).amax() < 1e-8, "family {family}");
    }
}

#[test]
fn empty_model_gives_zero() {
    let model = MarsModel::constant(3, 2.0);
    let q = quad_c(&model, &PriorSpec::unit_cube(3), 1e-10).unwrap();
    assert_eq!(q.value, DMatrix::zeros(3, 3));
}

#[test]
fn monte_carlo_error_shrinks_with_root_n() {
    let model = fit(500, 2, 1, simple);
    let prior = PriorSpec::unit_cube(2);
    let exact = compute_c(&model, &prior, &ComputeOptions::default())
        .unwrap()
        .values;
    let mean_error = |n: usize| -> f64 {
        (0..5)
            .map(|s| (mc_c(&model, &prior, n, s).unwrap().value - &exact).norm())
            .sum::<f64>()
            / 5.0
    };
    let (small, large) = (mean_error(10_000), mean_error(1_000_000));
    assert!(large <= 0.2 * small, "{large} vs {small}");
}

#[test]
fn monte_carlo_is_reproducible() {
    let model = fit(200, 2, 2, simple);
    let prior = PriorSpec::unit_cube(2);
    let a = mc_c(&model, &prior, 50_000, 9).unwrap();
    let b = mc_c(&model, &prior, 50_000, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.seed, Some(9));
    assert_ne!(a.value, mc_c(&model, &prior, 50_000, 10).unwrap().value);
}
