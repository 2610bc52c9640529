//! Brute-force references for the closed forms: adaptive quadrature for
//! truncated moments and per-coordinate integrals, and Monte Carlo `C` with
//! analytic surrogate gradients.

mod measure;
pub mod quadrature;

pub use measure::{density, effective_support, sample_univariate, Sampler, NORMAL_CLIP_SIGMAS};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::symmetrize;
use crate::cmatrix::native_c_with;
use crate::error::{Error, Result};
use crate::model::{Hinge, MarsModel};
use crate::prior::{PriorSpec, UnivariateMeasure};
use quadrature::integrate_pieces;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Quadrature,
    MonteCarlo,
}

/// Reference value with its provenance. `std_error` is set exactly for
/// Monte Carlo estimates; quadrature reports an error bound in `error_bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleEstimate<T> {
    pub value: T,
    pub std_error: Option<T>,
    pub error_bound: Option<f64>,
    pub evaluations: u64,
    pub method: Method,
    pub seed: Option<u64>,
}

/// `∫_a^b x^r ρ(x) dx` by adaptive Gauss–Kronrod to absolute tolerance `tol`.
pub fn quad_xi(
    r: u32,
    a: f64,
    b: f64,
    rho: &UnivariateMeasure,
    tol: f64,
) -> Result<OracleEstimate<f64>> {
    if !(tol >= 1e-14) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be at least 1e-14, got {tol}"
        )));
    }
    if a.is_nan() || b.is_nan() {
        return Err(Error::InvalidArgument("NaN integration bound".into()));
    }
    let ((lo, hi), breaks) = effective_support(rho);
    let (lo, hi) = (a.max(lo), b.min(hi));
    let q = integrate_pieces(|x| x.powi(r as i32) * density(rho, x), lo, hi, &breaks, tol)?;
    Ok(OracleEstimate {
        value: q.value,
        std_error: None,
        error_bound: Some(q.error),
        evaluations: q.evaluations,
        method: Method::Quadrature,
        seed: None,
    })
}

fn hinge_value(h: Option<&Hinge>, z: f64) -> f64 {
    h.map_or(1.0, |h| h.value(z))
}

fn hinge_slope(h: Option<&Hinge>, z: f64) -> f64 {
    h.map_or(0.0, |h| h.slope(z))
}

struct Univariate {
    i1: DMatrix<f64>,
    i2: DMatrix<f64>,
    i3: DMatrix<f64>,
    evaluations: u64,
    error: f64,
}

/// Integrals of products of hinge values and slopes on one input, by
/// quadrature split at every knot on that input.
fn univariate_integrals(
    model: &MarsModel,
    i: usize,
    rho: &UnivariateMeasure,
    tol: f64,
) -> Result<Univariate> {
    let m = model.n_basis();
    let terms: Vec<Option<&Hinge>> = model.basis().iter().map(|b| b.term_for(i)).collect();
    let ((lo, hi), mut breaks) = effective_support(rho);
    breaks.extend(terms.iter().flatten().map(|h| h.knot));
    let mut out = Univariate {
        i1: DMatrix::zeros(m, m),
        i2: DMatrix::zeros(m, m),
        i3: DMatrix::zeros(m, m),
        evaluations: 0,
        error: 0.0,
    };
    for r in 0..m {
        for c in 0..m {
            let (hr, hc) = (terms[r], terms[c]);
            let q1 = integrate_pieces(
                |z| hinge_slope(hr, z) * hinge_value(hc, z) * density(rho, z),
                lo,
                hi,
                &breaks,
                tol,
            )?;
            out.i1[(r, c)] = q1.value;
            out.evaluations += q1.evaluations;
            out.error = out.error.max(q1.error);
            if c < r {
                continue;
            }
            let q2 = integrate_pieces(
                |z| hinge_value(hr, z) * hinge_value(hc, z) * density(rho, z),
                lo,
                hi,
                &breaks,
                tol,
            )?;
            let q3 = integrate_pieces(
                |z| hinge_slope(hr, z) * hinge_slope(hc, z) * density(rho, z),
                lo,
                hi,
                &breaks,
                tol,
            )?;
            for (mat, v) in [(&mut out.i2, q2.value), (&mut out.i3, q3.value)] {
                mat[(r, c)] = v;
                mat[(c, r)] = v;
            }
            out.evaluations += q2.evaluations + q3.evaluations;
            out.error = out.error.max(q2.error).max(q3.error);
        }
    }
    Ok(out)
}

/// Direct sum `C_ij = Σ γ γ' ∫∂_i B ∫∂_j B' ∏ ∫B B'` over all inputs.
fn assemble_direct(gamma: &[f64], ints: &[Univariate]) -> DMatrix<f64> {
    let p = ints.len();
    let m = gamma.len();
    let mut c = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let mut s = 0.0;
            for r in 0..m {
                for q in 0..m {
                    let mut v = if i == j {
                        ints[i].i3[(r, q)]
                    } else {
                        ints[i].i1[(r, q)] * ints[j].i1[(q, r)]
                    };
                    for (k, u) in ints.iter().enumerate() {
                        if k != i && k != j {
                            v *= u.i2[(r, q)];
                        }
                    }
                    s += gamma[r] * gamma[q] * v;
                }
            }
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    c
}

/// `C` from per-coordinate quadrature combined by the tensor-product
/// identity. Priors are handled as in [`crate::cmatrix::compute_c`]; result
/// is in native coordinates. Practical for `p <= 8`.
pub fn quad_c(
    model: &MarsModel,
    prior: &PriorSpec,
    tol: f64,
) -> Result<OracleEstimate<DMatrix<f64>>> {
    if prior.p() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            got: prior.p(),
        });
    }
    let evals = std::sync::atomic::AtomicU64::new(0);
    let bound = std::sync::Mutex::new(0.0f64);
    let engine = |m: &MarsModel, rho: &[UnivariateMeasure]| -> Result<DMatrix<f64>> {
        let ints = (0..m.p())
            .into_par_iter()
            .map(|i| univariate_integrals(m, i, &rho[i], tol))
            .collect::<Result<Vec<_>>>()?;
        for u in &ints {
            evals.fetch_add(u.evaluations, std::sync::atomic::Ordering::Relaxed);
            let mut b = bound.lock().expect("not poisoned");
            *b = b.max(u.error);
        }
        Ok(assemble_direct(m.coefficients(), &ints))
    };
    let value = symmetrize(native_c_with(model, prior, &engine)?);
    Ok(OracleEstimate {
        value,
        std_error: None,
        error_bound: Some(bound.into_inner().expect("not poisoned")),
        evaluations: evals.into_inner(),
        method: Method::Quadrature,
        seed: None,
    })
}

const MC_CHUNK: usize = 8192;

/// Running mean and centered second moment of the upper triangle of `g gᵀ`.
#[derive(Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for k in 0..x.len() {
            let d = x[k] - self.mean[k];
            self.mean[k] += d / self.n;
            self.m2[k] += d * (x[k] - self.mean[k]);
        }
    }

    fn merge(mut self, o: &Moments) -> Self {
        let n = self.n + o.n;
        if o.n == 0.0 {
            return self;
        }
        for k in 0..self.mean.len() {
            let d = o.mean[k] - self.mean[k];
            self.mean[k] += d * o.n / n;
            self.m2[k] += o.m2[k] + d * d * self.n * o.n / n;
        }
        self.n = n;
        self
    }
}

/// Monte Carlo `Ĉ = (1/N) Σ ∇f(x_k) ∇f(x_k)ᵀ` with `x_k` drawn from the prior
/// (native coordinates) and per-entry standard errors. Chunks of samples
/// use independent streams of a seeded ChaCha8 generator, so the result does
/// not depend on the thread count.
pub fn mc_c(
    model: &MarsModel,
    prior: &PriorSpec,
    n: usize,
    seed: u64,
) -> Result<OracleEstimate<DMatrix<f64>>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs at least 2 samples, got {n}"
        )));
    }
    let p = model.p();
    if prior.p() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: prior.p(),
        });
    }
    let sampler = Sampler::new(prior)?;
    let tri = p * (p + 1) / 2;
    let chunks = n.div_ceil(MC_CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Moments> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut acc = Moments::new(tri);
            let mut x = vec![0.0; p];
            let mut gz = vec![0.0; p];
            let mut outer = vec![0.0; tri];
            for _ in 0..count {
                sampler.sample(&mut rng, &mut x);
                let mut z = match model.input_transform() {
                    Some(t) => t.apply(&x),
                    None => x.clone(),
                };
                loop {
                    match model.gradient_scaled_into(&z, &mut gz) {
                        Ok(()) => break,
                        Err(Error::AtKnot { input, .. }) => z[input] += 1e-12,
                        Err(e) => return Err(e),
                    }
                }
                let g = match model.input_transform() {
                    Some(t) => t.pull_gradient(&gz),
                    None => gz.clone(),
                };
                let mut k = 0;
                for i in 0..p {
                    for j in i..p {
                        outer[k] = g[i] * g[j];
                        k += 1;
                    }
                }
                acc.push(&outer);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = parts.iter().fold(Moments::new(tri), |a, b| a.merge(b));
    let mut value = DMatrix::zeros(p, p);
    let mut se = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            let var = total.m2[k] / (total.n - 1.0);
            value[(i, j)] = total.mean[k];
            value[(j, i)] = total.mean[k];
            se[(i, j)] = (var / total.n).sqrt();
            se[(j, i)] = se[(i, j)];
            k += 1;
        }
    }
    Ok(OracleEstimate {
        value,
        std_error: Some(se),
        error_bound: None,
        evaluations: n as u64,
        method: Method::MonteCarlo,
        seed: Some(seed),
    })
}
