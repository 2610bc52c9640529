//! Quadratic-form assembly of `C` from the per-input integrals.
//!
//! `C_ii = γᵀ (I3⁽ⁱ⁾ ∘ ∏_{k≠i} I2⁽ᵏ⁾) γ` and
//! `C_ij = γᵀ (I1⁽ⁱ⁾ ∘ I1⁽ʲ⁾ᵀ ∘ ∏_{k∉{i,j}} I2⁽ᵏ⁾) γ`.
//! Products run over active inputs only; inert inputs have `I2 ≡ 1` and give
//! exactly zero rows and columns.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::integrals::{entry, IntegralCache};
use crate::error::{Error, Result};
use crate::model::{BasisFunction, Hinge};
use crate::prior::UnivariateMeasure;

/// `γᵀ X γ` with `X` given elementwise by column-major index.
#[inline]
fn quad_form(g: &[f64], m: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut total = 0.0;
    for c in 0..m {
        let mut col = 0.0;
        for r in 0..m {
            col += g[r] * f(r + c * m);
        }
        total += col * g[c];
    }
    total
}

#[inline]
fn transpose_index(idx: usize, m: usize) -> usize {
    let (r, c) = (idx % m, idx / m);
    c + r * m
}

fn check_gamma(cache: &IntegralCache, gamma: &[f64]) -> Result<()> {
    if gamma.len() != cache.n_basis() {
        return Err(Error::DimensionMismatch {
            expected: cache.n_basis(),
            got: gamma.len(),
        });
    }
    Ok(())
}

fn mirror(p: usize, rows: Vec<(usize, Vec<(usize, f64)>)>) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(p, p);
    for (i, entries) in rows {
        for (j, v) in entries {
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Exact assembly in `O(|K|² M²)` using prefix and suffix products of `I2`.
pub fn assemble_c(cache: &IntegralCache, gamma: &[f64]) -> Result<DMatrix<f64>> {
    check_gamma(cache, gamma)?;
    let p = cache.p();
    let m = cache.n_basis();
    let active = cache.active_inputs();
    let n = active.len();
    if m == 0 || n == 0 {
        return Ok(DMatrix::zeros(p, p));
    }
    let i2 = |q: usize| cache.inputs[active[q]].i2.as_slice();
    let ones = vec![1.0; m * m];
    let mut prefix = vec![ones.clone()];
    for q in 1..n {
        let prev = &prefix[q - 1];
        prefix.push(prev.iter().zip(i2(q - 1)).map(|(a, b)| a * b).collect());
    }
    let mut suffix = vec![ones.clone(); n];
    for q in (0..n.saturating_sub(1)).rev() {
        suffix[q] = suffix[q + 1]
            .iter()
            .zip(i2(q + 1))
            .map(|(a, b)| a * b)
            .collect();
    }

    let rows: Vec<(usize, Vec<(usize, f64)>)> = (0..n)
        .into_par_iter()
        .map(|q1| {
            let i = active[q1];
            let ii = &cache.inputs[i];
            let (pre, suf) = (&prefix[q1], &suffix[q1]);
            let i3 = ii.i3.as_slice();
            let mut out = Vec::with_capacity(n - q1);
            out.push((i, quad_form(gamma, m, |k| i3[k] * pre[k] * suf[k])));
            let i1i = ii.i1.as_slice();
            let mut mid = ones.clone();
            for q2 in q1 + 1..n {
                let j = active[q2];
                let i1j = cache.inputs[j].i1.as_slice();
                let suf = &suffix[q2];
                let v = quad_form(gamma, m, |k| {
                    i1i[k] * i1j[transpose_index(k, m)] * pre[k] * mid[k] * suf[k]
                });
                out.push((j, v));
                mid.iter_mut().zip(i2(q2)).for_each(|(a, b)| *a *= b);
            }
            (i, out)
        })
        .collect();
    Ok(mirror(p, rows))
}

/// Approximate assembly dividing the full product `I2•` by the left-out
/// factors, regularized by `eps`. Memory is `O(M²)` beyond the cache.
pub fn assemble_c_hadamard(cache: &IntegralCache, gamma: &[f64], eps: f64) -> Result<DMatrix<f64>> {
    check_gamma(cache, gamma)?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be finite and non-negative, got {eps}"
        )));
    }
    let p = cache.p();
    let m = cache.n_basis();
    let active = cache.active_inputs();
    let n = active.len();
    if m == 0 || n == 0 {
        return Ok(DMatrix::zeros(p, p));
    }
    let full = cache.i2_product();
    let full = full.as_slice();
    let div = |a: &[f64], i: usize| -> Vec<f64> {
        a.iter()
            .zip(cache.inputs[i].i2.as_slice())
            .map(|(x, d)| x / (d + eps))
            .collect()
    };
    let mut rows = Vec::with_capacity(n);
    for (q1, &i) in active.iter().enumerate() {
        let ii = &cache.inputs[i];
        // leave-one-out; exact when nothing remains
        let loo = if n == 1 {
            vec![1.0; m * m]
        } else {
            div(full, i)
        };
        let i3 = ii.i3.as_slice();
        let mut out = vec![(i, quad_form(gamma, m, |k| i3[k] * loo[k]))];
        let i1i = ii.i1.as_slice();
        for &j in &active[q1 + 1..] {
            let lto = if n == 2 {
                vec![1.0; m * m]
            } else {
                div(&loo, j)
            };
            let i1j = cache.inputs[j].i1.as_slice();
            out.push((
                j,
                quad_form(gamma, m, |k| i1i[k] * i1j[transpose_index(k, m)] * lto[k]),
            ));
        }
        rows.push((i, out));
    }
    let c = mirror(p, rows);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "Hadamard division produced a non-finite entry; increase epsilon".into(),
        ));
    }
    Ok(c)
}

/// Assembly without a stored cache: every integral is recomputed for each
/// `(i, j)` pair, so memory stays at `O(M²)`.
pub(crate) fn assemble_c_in_situ(
    basis: &[BasisFunction],
    measures: &[UnivariateMeasure],
    gamma: &[f64],
) -> Result<DMatrix<f64>> {
    let p = measures.len();
    let m = basis.len();
    if gamma.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: gamma.len(),
        });
    }
    let active: Vec<usize> = (0..p)
        .filter(|&i| basis.iter().any(|b| b.uses(i)))
        .collect();
    let terms = |i: usize| -> Vec<Option<&Hinge>> { basis.iter().map(|b| b.term_for(i)).collect() };
    // Fills `out` column-major with `f(entry)` over all basis pairs on input i.
    let fill = |i: usize,
                out: &mut [f64],
                f: &dyn Fn(&super::integrals::Entry, bool) -> f64|
     -> Result<()> {
        let t = terms(i);
        for r in 0..m {
            for c in r..m {
                let e = entry(t[r], t[c], &measures[i])?;
                out[r + c * m] = f(&e, false);
                out[c + r * m] = f(&e, true);
            }
        }
        Ok(())
    };
    let pairs: Vec<(usize, usize)> = active
        .iter()
        .enumerate()
        .flat_map(|(q, &i)| active[q..].iter().map(move |&j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<(usize, usize, f64)> {
            let mut prod = vec![1.0; m * m];
            let mut buf = vec![0.0; m * m];
            for &k in active.iter().filter(|&&k| k != i && k != j) {
                fill(k, &mut buf, &|e, _| e.i2)?;
                prod.iter_mut().zip(&buf).for_each(|(a, b)| *a *= b);
            }
            if i == j {
                fill(i, &mut buf, &|e, _| e.i3)?;
                return Ok((i, j, quad_form(gamma, m, |k| buf[k] * prod[k])));
            }
            fill(i, &mut buf, &|e, swapped| {
                if swapped {
                    e.i1_21
                } else {
                    e.i1_12
                }
            })?;
            let mut bj = vec![0.0; m * m];
            fill(j, &mut bj, &|e, swapped| {
                if swapped {
                    e.i1_21
                } else {
                    e.i1_12
                }
            })?;
            Ok((
                i,
                j,
                quad_form(gamma, m, |k| buf[k] * bj[transpose_index(k, m)] * prod[k]),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut c = DMatrix::zeros(p, p);
    for (i, j, v) in values {
        c[(i, j)] = v;
        c[(j, i)] = v;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sign;

    fn uniform(p: usize) -> Vec<UnivariateMeasure> {
        vec![UnivariateMeasure::uniform(0.0, 1.0).unwrap(); p]
    }

    fn sample_basis() -> Vec<BasisFunction> {
        vec![
            BasisFunction::hinge(0, Sign::Pos, 0.3),
            BasisFunction::new(vec![
                Hinge::new(0, Sign::Neg, 0.6),
                Hinge::new(1, Sign::Pos, 0.2),
            ])
            .unwrap(),
            BasisFunction::new(vec![
                Hinge::new(1, Sign::Neg, 0.9),
                Hinge::new(3, Sign::Pos, 0.4),
                Hinge::new(0, Sign::Pos, 0.1),
            ])
            .unwrap(),
            BasisFunction::hinge(3, Sign::Neg, 0.5),
        ]
    }

    #[test]
    fn one_variable_model() {
        let (c, t) = (1.7, 0.35);
        let cache =
            IntegralCache::build(&[BasisFunction::hinge(0, Sign::Pos, t)], &uniform(2)).unwrap();
        let m = assemble_c(&cache, &[c]).unwrap();
        assert!((m[(0, 0)] - c * c * (1.0 - t)).abs() < 1e-15);
        assert_eq!((m[(0, 1)], m[(1, 0)], m[(1, 1)]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_model_is_zero() {
        let cache = IntegralCache::build(&[], &uniform(3)).unwrap();
        assert_eq!(assemble_c(&cache, &[]).unwrap(), DMatrix::zeros(3, 3));
        assert_eq!(
            assemble_c_hadamard(&cache, &[], 0.0).unwrap(),
            DMatrix::zeros(3, 3)
        );
    }

    #[test]
    fn modes_agree_and_inert_rows_vanish() {
        let basis = sample_basis();
        let gamma = [1.5, -2.0, 0.7, 3.0];
        let cache = IntegralCache::build(&basis, &uniform(5)).unwrap();
        let exact = assemble_c(&cache, &gamma).unwrap();
        let low = assemble_c_in_situ(&basis, &uniform(5), &gamma).unwrap();
        let had = assemble_c_hadamard(&cache, &gamma, 1e-12).unwrap();
        assert!((&low - &exact).amax() < 1e-12);
        assert!((&had - &exact).amax() < 1e-6);
        for i in [2, 4] {
            assert!(exact
                .row(i)
                .iter()
                .chain(exact.column(i).iter())
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hadamard_rejects_zero_division() {
        // two bases with disjoint support on input 0 give a zero I2 entry
        let basis = vec![
            BasisFunction::new(vec![
                Hinge::new(0, Sign::Pos, 0.6),
                Hinge::new(1, Sign::Pos, 0.5),
            ])
            .unwrap(),
            BasisFunction::new(vec![
                Hinge::new(0, Sign::Neg, 0.4),
                Hinge::new(1, Sign::Pos, 0.2),
            ])
            .unwrap(),
            BasisFunction::hinge(2, Sign::Pos, 0.5),
        ];
        let cache = IntegralCache::build(&basis, &uniform(3)).unwrap();
        assert!(cache.input(0).i2.iter().any(|&v| v == 0.0));
        assert!(matches!(
            assemble_c_hadamard(&cache, &[1.0, 1.0, 1.0], 0.0),
            Err(Error::NonFinite(_))
        ));
        assert!(assemble_c_hadamard(&cache, &[1.0, 1.0, 1.0], -1.0).is_err());
        assert!(assemble_c_hadamard(&cache, &[1.0, 1.0, 1.0], 1e-12).is_ok());
    }

    #[test]
    fn hadamard_exact_for_one_input() {
        let basis = vec![
            BasisFunction::hinge(0, Sign::Pos, 0.3),
            BasisFunction::hinge(0, Sign::Neg, 0.8),
        ];
        let cache = IntegralCache::build(&basis, &uniform(1)).unwrap();
        let g = [2.0, -1.0];
        assert_eq!(
            assemble_c_hadamard(&cache, &g, 0.5).unwrap(),
            assemble_c(&cache, &g).unwrap()
        );
    }

    #[test]
    fn rejects_wrong_coefficient_count() {
        let cache = IntegralCache::build(&sample_basis(), &uniform(4)).unwrap();
        assert!(assemble_c(&cache, &[1.0]).is_err());
    }
}
