//! In-place updates of the integral cache as a model changes one basis
//! function at a time. Each structural change evaluates only the `O(pM)`
//! integrals of the affected row and column.

use nalgebra::DMatrix;

use super::assemble::assemble_c;
use super::integrals::{entry, IntegralCache};
use crate::error::{Error, Result};
use crate::model::{BasisFunction, MarsModel};
use crate::prior::UnivariateMeasure;

/// A model's basis, coefficients and `C`, kept consistent under birth,
/// death, mutation and coefficient updates. Works in model coordinates.
#[derive(Clone, Debug)]
pub struct IncrementalC {
    cache: IntegralCache,
    gamma: Vec<f64>,
    c: DMatrix<f64>,
}

fn grow(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let old = std::mem::replace(m, DMatrix::zeros(0, 0));
    *m = old.insert_row(n, 0.0).insert_column(n, 0.0);
}

fn shrink(m: &mut DMatrix<f64>, k: usize) {
    let old = std::mem::replace(m, DMatrix::zeros(0, 0));
    *m = old.remove_row(k).remove_column(k);
}

impl IncrementalC {
    pub fn new(
        basis: Vec<BasisFunction>,
        gamma: Vec<f64>,
        measures: Vec<UnivariateMeasure>,
    ) -> Result<Self> {
        if basis.len() != gamma.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: gamma.len(),
            });
        }
        for b in &basis {
            b.check(measures.len(), false)?;
        }
        let cache = IntegralCache::build(&basis, &measures)?;
        let c = assemble_c(&cache, &gamma)?;
        Ok(IncrementalC { cache, gamma, c })
    }

    /// Starts from a model; `measures` are in the model's coordinates.
    pub fn from_model(model: &MarsModel, measures: Vec<UnivariateMeasure>) -> Result<Self> {
        if measures.len() != model.p() {
            return Err(Error::DimensionMismatch {
                expected: model.p(),
                got: measures.len(),
            });
        }
        Self::new(
            model.basis().to_vec(),
            model.coefficients().to_vec(),
            measures,
        )
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn cache(&self) -> &IntegralCache {
        &self.cache
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.cache.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.gamma
    }

    fn refresh(&mut self) -> Result<&DMatrix<f64>> {
        self.c = assemble_c(&self.cache, &self.gamma)?;
        Ok(&self.c)
    }

    fn refresh_row(&mut self, k: usize) -> Result<()> {
        let basis = &self.cache.basis;
        let m = basis.len();
        for (i, ii) in self.cache.inputs.iter_mut().enumerate() {
            let rho = &self.cache.measures[i];
            let hk = basis[k].term_for(i);
            for r in 0..m {
                let e = entry(basis[r].term_for(i), hk, rho)?;
                ii.set(r, k, &e);
            }
        }
        Ok(())
    }

    /// Appends a basis function with coefficient `gamma`.
    pub fn birth(&mut self, basis: BasisFunction, gamma: f64) -> Result<&DMatrix<f64>> {
        basis.check(self.cache.p(), false)?;
        for ii in &mut self.cache.inputs {
            for mat in [
                &mut ii.a_bounds,
                &mut ii.b_bounds,
                &mut ii.i1,
                &mut ii.i2,
                &mut ii.i3,
            ] {
                grow(mat);
            }
        }
        self.cache.basis.push(basis);
        self.gamma.push(gamma);
        self.refresh_row(self.gamma.len() - 1)?;
        self.refresh()
    }

    /// Removes basis function `m`.
    pub fn death(&mut self, m: usize) -> Result<&DMatrix<f64>> {
        self.check_index(m)?;
        for ii in &mut self.cache.inputs {
            for mat in [
                &mut ii.a_bounds,
                &mut ii.b_bounds,
                &mut ii.i1,
                &mut ii.i2,
                &mut ii.i3,
            ] {
                shrink(mat, m);
            }
        }
        self.cache.basis.remove(m);
        self.gamma.remove(m);
        self.refresh()
    }

    /// Replaces basis function `m`, keeping its coefficient.
    pub fn mutate(&mut self, m: usize, basis: BasisFunction) -> Result<&DMatrix<f64>> {
        self.check_index(m)?;
        basis.check(self.cache.p(), false)?;
        self.cache.basis[m] = basis;
        self.refresh_row(m)?;
        self.refresh()
    }

    /// New coefficients for the current basis; no integrals are evaluated.
    pub fn update_coefficients(&mut self, gamma: Vec<f64>) -> Result<&DMatrix<f64>> {
        if gamma.len() != self.gamma.len() {
            return Err(Error::DimensionMismatch {
                expected: self.gamma.len(),
                got: gamma.len(),
            });
        }
        self.gamma = gamma;
        self.refresh()
    }

    fn check_index(&self, m: usize) -> Result<()> {
        if m >= self.gamma.len() {
            return Err(Error::InvalidArgument(format!(
                "basis index {m} out of range for {} basis functions",
                self.gamma.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hinge, Sign};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_basis(rng: &mut ChaCha8Rng, p: usize) -> BasisFunction {
        let degree = rng.random_range(1..=p.min(3));
        let mut inputs: Vec<usize> = (0..p).collect();
        for k in 0..degree {
            let j = rng.random_range(k..p);
            inputs.swap(k, j);
        }
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

    fn measures() -> Vec<UnivariateMeasure> {
        vec![
            UnivariateMeasure::uniform(0.0, 1.0).unwrap(),
            UnivariateMeasure::beta(2.0, 1.5).unwrap(),
            UnivariateMeasure::trunc_normal(0.5, 0.2, 0.0, 1.0).unwrap(),
            UnivariateMeasure::uniform(0.0, 1.0).unwrap(),
        ]
    }

    fn scratch(inc: &IncrementalC) -> DMatrix<f64> {
        let cache = IntegralCache::build(inc.basis(), &measures()).unwrap();
        assemble_c(&cache, inc.coefficients()).unwrap()
    }

    #[test]
    fn birth_then_death_restores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis: Vec<_> = (0..5).map(|_| random_basis(&mut rng, 4)).collect();
        let mut inc =
            IncrementalC::new(basis, vec![1.0, -0.5, 2.0, 0.3, -1.2], measures()).unwrap();
        let before = inc.c().clone();
        inc.birth(random_basis(&mut rng, 4), 0.9).unwrap();
        let after = inc.death(5).unwrap();
        assert!((after - &before).amax() < 1e-12);
    }

    #[test]
    fn random_sequence_matches_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut inc = IncrementalC::new(vec![], vec![], measures()).unwrap();
        for _ in 0..50 {
            let m = inc.coefficients().len();
            match rng.random_range(0..4) {
                0 => inc
                    .birth(random_basis(&mut rng, 4), rng.random_range(-2.0..2.0))
                    .map(|_| ()),
                1 if m > 0 => inc.death(rng.random_range(0..m)).map(|_| ()),
                2 if m > 0 => inc
                    .mutate(rng.random_range(0..m), random_basis(&mut rng, 4))
                    .map(|_| ()),
                _ => inc
                    .update_coefficients((0..m).map(|_| rng.random_range(-2.0..2.0)).collect())
                    .map(|_| ()),
            }
            .unwrap();
        }
        let c = inc.c().clone();
        assert!((&c - scratch(&inc)).amax() <= 1e-10 * c.amax().max(1.0));
    }

    #[test]
    fn doubled_coefficients_quadruple_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis: Vec<_> = (0..6).map(|_| random_basis(&mut rng, 4)).collect();
        let gamma: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut inc = IncrementalC::new(basis, gamma.clone(), measures()).unwrap();
        let c = inc.c().clone();
        let c2 = inc
            .update_coefficients(gamma.iter().map(|g| 2.0 * g).collect())
            .unwrap();
        assert!((c2 - c * 4.0).amax() < 1e-12);
    }

    #[test]
    fn index_errors() {
        let mut inc = IncrementalC::new(vec![], vec![], measures()).unwrap();
        assert!(inc.death(0).is_err());
        assert!(inc
            .mutate(0, BasisFunction::hinge(0, Sign::Pos, 0.5))
            .is_err());
        assert!(inc
            .birth(BasisFunction::hinge(7, Sign::Pos, 0.5), 1.0)
            .is_err());
        assert!(inc.update_coefficients(vec![1.0]).is_err());
    }
}
