//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 20_000;

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evaluations: u64,
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// `∫_a^b f` over a finite interval to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<Quad> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite bounds required, got [{a}, {b}]"
        )));
    }
    if a >= b {
        return Ok(Quad {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::from([Piece {
        a,
        b,
        value: v,
        error: e,
    }]);
    let (mut err, mut evals) = (e, 15u64);
    while err > tol {
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::NoConvergence {
                function: "integrate",
                args: vec![a, b, tol],
                iterations: heap.len(),
            });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // interval cannot be split further; accept what we have
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        evals += 30;
        err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        if heap.len() % 64 == 0 {
            // shed accumulated rounding in the running error
            err = heap.iter().map(|p| p.error).sum();
        }
    }
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Quad {
        value,
        error,
        evaluations: evals,
    })
}

/// Like [`integrate`] but either bound may be infinite; infinite ends are
/// mapped to a finite interval by `x = c ± t / (1 - t)`.
pub fn integrate_any(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, tol: f64) -> Result<Quad> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::InvalidArgument("NaN integration bound".into()));
    }
    if a >= b {
        return Ok(Quad {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => integrate(f, a, b, tol),
        (true, false) => integrate(
            move |t| {
                let u = 1.0 - t;
                f(a + t / u) / (u * u)
            },
            0.0,
            1.0,
            tol,
        ),
        (false, true) => integrate(
            move |t| {
                let u = 1.0 - t;
                f(b - t / u) / (u * u)
            },
            0.0,
            1.0,
            tol,
        ),
        (false, false) => {
            let lo = integrate_any(f, f64::NEG_INFINITY, 0.0, 0.5 * tol)?;
            let hi = integrate_any(f, 0.0, f64::INFINITY, 0.5 * tol)?;
            Ok(Quad {
                value: lo.value + hi.value,
                error: lo.error + hi.error,
                evaluations: lo.evaluations + hi.evaluations,
            })
        }
    }
}

/// Integrates over `[a, b]` split at `breaks` (points outside are ignored).
pub fn integrate_pieces(
    f: impl Fn(f64) -> f64 + Copy,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<Quad> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut edges = Vec::with_capacity(pts.len() + 2);
    edges.push(a);
    edges.extend(pts);
    edges.push(b);
    let per = tol / (edges.len() - 1) as f64;
    let mut out = Quad {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    for w in edges.windows(2) {
        let q = integrate_any(f, w[0], w[1], per)?;
        out.value += q.value;
        out.error += q.error;
        out.evaluations += q.evaluations;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let q = integrate(|x| 3.0 * x * x + 2.0 * x - 1.0, -1.0, 2.0, 1e-14).unwrap();
        assert!((q.value - 9.0).abs() < 1e-13);
    }

    #[test]
    fn smooth_and_singular() {
        let q = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-13).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12);
        // integrable endpoint singularity
        let q = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10).unwrap();
        assert!((q.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infinite_ranges() {
        let q = integrate_any(
            |x| (-x * x / 2.0).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-12,
        )
        .unwrap();
        assert!((q.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-11);
        let q = integrate_any(|x| (-x).exp(), 1.0, f64::INFINITY, 1e-13).unwrap();
        assert!((q.value - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kinks_at_breakpoints() {
        let f = |x: f64| (x - 0.3f64).max(0.0) * (0.8f64 - x).max(0.0);
        let q = integrate_pieces(f, 0.0, 1.0, &[0.3, 0.8], 1e-14).unwrap();
        assert!((q.value - 0.125 / 6.0).abs() < 1e-15);
    }
}
