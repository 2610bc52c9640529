//! Deterministic forward/backward MARS fitter.
//!
//! The forward pass adds reflected hinge pairs `π·[z_v - t]_+`, `π·[t - z_v]_+`
//! for the (parent π, input v, knot t) that most reduces the residual sum of
//! squares. Candidates for one (parent, input) are scored in a single sweep
//! over the rows sorted by `z_v`, with running sums of the orthonormal basis
//! projections, so the cost per pair is `O(n q)` regardless of the knot count.
//! The backward pass removes basis functions one at a time and keeps the
//! subset with the lowest generalized cross-validation score.

use std::cmp::Ordering;
use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BasisFunction, Hinge, MarsModel, Sign};
use crate::affine::AffineMap;
use crate::error::{Error, Result};

/// Training data `(x_i, y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    design: DMatrix<f64>,
    response: Vec<f64>,
}

impl DatasetSpec {
    pub fn new(design: DMatrix<f64>, response: Vec<f64>) -> Result<Self> {
        if design.nrows() == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if design.ncols() == 0 {
            return Err(Error::InvalidData("dataset has no input columns".into()));
        }
        if response.len() != design.nrows() {
            return Err(Error::DimensionMismatch {
                expected: design.nrows(),
                got: response.len(),
            });
        }
        if design.iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in dataset".into()));
        }
        Ok(DatasetSpec { design, response })
    }

    pub fn from_rows(rows: &[Vec<f64>], response: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidData("ragged design rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), p, |r, c| rows[r][c]), response)
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Per-column min/max map onto `[0, 1]`. Constant columns map to 0.5.
    pub fn unit_scaling(&self) -> AffineMap {
        let mut diag = Vec::with_capacity(self.p());
        let mut off = Vec::with_capacity(self.p());
        for c in 0..self.p() {
            let col = self.design.column(c);
            let lo = col.min();
            let hi = col.max();
            if hi > lo {
                let a = 1.0 / (hi - lo);
                diag.push(a);
                off.push(-a * lo);
            } else {
                diag.push(1.0);
                off.push(0.5 - lo);
            }
        }
        AffineMap::diagonal(diag, off).expect("nonzero finite scales")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Upper bound on the number of non-constant basis functions.
    pub max_basis: usize,
    /// Maximum interaction order `J`.
    pub max_interaction: usize,
    /// Cap on knot candidates per input (quantiles of the observed values).
    pub knot_grid_size: usize,
    /// Forward pass stops when the best RSS reduction falls below this
    /// fraction of the total sum of squares.
    pub min_improvement: f64,
    /// GCV cost per knot.
    pub gcv_penalty: f64,
    /// Map from native inputs to the unit scale, applied before fitting and
    /// recorded on the model.
    pub input_transform: Option<AffineMap>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_basis: 41,
            max_interaction: 3,
            knot_grid_size: 64,
            min_improvement: 1e-9,
            gcv_penalty: 2.0,
            input_transform: None,
        }
    }
}

const COLUMN_TOL: f64 = 1e-8;
const UNIT_SLACK: f64 = 1e-9;

struct Candidate {
    reduction: f64,
    input: usize,
    knot_idx: usize,
    parent: usize,
    pos: bool,
    neg: bool,
}

impl Candidate {
    /// Larger reduction first; ties broken by lowest input, knot, parent.
    fn better_than(&self, o: &Candidate) -> bool {
        match self.reduction.partial_cmp(&o.reduction) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => (self.input, self.knot_idx, self.parent) < (o.input, o.knot_idx, o.parent),
        }
    }
}

struct Forward<'a> {
    z: &'a [Vec<f64>],
    order: Vec<Vec<usize>>,
    knots: Vec<Vec<f64>>,
    /// parent columns: index 0 is the constant, then one per basis function
    columns: Vec<Vec<f64>>,
    basis: Vec<BasisFunction>,
    q: Vec<Vec<f64>>,
    resid: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Forward<'a> {
    fn new(z: &'a [Vec<f64>], y: &'a [f64], grid: usize) -> Self {
        let n = y.len();
        let order = z
            .iter()
            .map(|col| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let knots = z.iter().map(|col| knot_grid(col, grid)).collect();
        let q0 = vec![1.0 / (n as f64).sqrt(); n];
        let mean = y.iter().sum::<f64>() / n as f64;
        let resid = y.iter().map(|v| v - mean).collect();
        Forward {
            z,
            order,
            knots,
            columns: vec![vec![1.0; n]],
            basis: vec![],
            q: vec![q0],
            resid,
        }
    }

    fn rss(&self) -> f64 {
        dot(&self.resid, &self.resid)
    }

    /// Best knot for hinge pairs on `input` under parent column `parent`.
    fn score(&self, parent: usize, input: usize) -> Option<Candidate> {
        let pi = &self.columns[parent];
        let zc = &self.z[input];
        let order = &self.order[input];
        let knots = &self.knots[input];
        let nq = self.q.len();
        let e = &self.resid;

        // totals over all rows
        let mut t_s1 = vec![0.0; nq];
        let mut t_s0 = vec![0.0; nq];
        let (mut t_pp, mut t_ppz, mut t_ppzz, mut t_ep, mut t_epz) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..pi.len() {
            let w = pi[k];
            if w == 0.0 {
                continue;
            }
            let zk = zc[k];
            for (j, qj) in self.q.iter().enumerate() {
                t_s0[j] += qj[k] * w;
                t_s1[j] += qj[k] * w * zk;
            }
            t_pp += w * w;
            t_ppz += w * w * zk;
            t_ppzz += w * w * zk * zk;
            t_ep += e[k] * w;
            t_epz += e[k] * w * zk;
        }
        if t_pp == 0.0 {
            return None;
        }

        // running sums over rows with z > t
        let mut a_s1 = vec![0.0; nq];
        let mut a_s0 = vec![0.0; nq];
        let (mut a_pp, mut a_ppz, mut a_ppzz, mut a_ep, mut a_epz) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut qp = vec![0.0; nq];
        let mut qn = vec![0.0; nq];
        let mut ptr = 0;
        let mut best: Option<Candidate> = None;

        for (ki, &t) in knots.iter().enumerate().rev() {
            while ptr < order.len() && zc[order[ptr]] > t {
                let k = order[ptr];
                ptr += 1;
                let w = pi[k];
                if w == 0.0 {
                    continue;
                }
                let zk = zc[k];
                for (j, qj) in self.q.iter().enumerate() {
                    a_s0[j] += qj[k] * w;
                    a_s1[j] += qj[k] * w * zk;
                }
                a_pp += w * w;
                a_ppz += w * w * zk;
                a_ppzz += w * w * zk * zk;
                a_ep += e[k] * w;
                a_epz += e[k] * w * zk;
            }
            let (b_pp, b_ppz, b_ppzz) = (t_pp - a_pp, t_ppz - a_ppz, t_ppzz - a_ppzz);
            let (b_ep, b_epz) = (t_ep - a_ep, t_epz - a_epz);

            let cc_p = (a_ppzz - 2.0 * t * a_ppz + t * t * a_pp).max(0.0);
            let cc_n = (t * t * b_pp - 2.0 * t * b_ppz + b_ppzz).max(0.0);
            let ce_p = a_epz - t * a_ep;
            let ce_n = t * b_ep - b_epz;
            let (mut qq_p, mut qq_n, mut qq_pn) = (0.0, 0.0, 0.0);
            for j in 0..nq {
                qp[j] = a_s1[j] - t * a_s0[j];
                qn[j] = t * (t_s0[j] - a_s0[j]) - (t_s1[j] - a_s1[j]);
                qq_p += qp[j] * qp[j];
                qq_n += qn[j] * qn[j];
                qq_pn += qp[j] * qn[j];
            }
            let g11 = cc_p - qq_p;
            let g22 = cc_n - qq_n;
            let g12 = -qq_pn;
            let use_p = cc_p > 0.0 && g11 > COLUMN_TOL * cc_p;
            let use_n = cc_n > 0.0 && g22 > COLUMN_TOL * cc_n;

            let single_p = if use_p { ce_p * ce_p / g11 } else { 0.0 };
            let single_n = if use_n { ce_n * ce_n / g22 } else { 0.0 };
            let (reduction, pos, neg) = if use_p && use_n {
                let det = g11 * g22 - g12 * g12;
                if det > COLUMN_TOL * g11 * g22 {
                    (
                        (g22 * ce_p * ce_p - 2.0 * g12 * ce_p * ce_n + g11 * ce_n * ce_n) / det,
                        true,
                        true,
                    )
                } else if single_p >= single_n {
                    (single_p, true, false)
                } else {
                    (single_n, false, true)
                }
            } else if use_p {
                (single_p, true, false)
            } else if use_n {
                (single_n, false, true)
            } else {
                continue;
            };
            if !reduction.is_finite() {
                continue;
            }
            let cand = Candidate {
                reduction,
                input,
                knot_idx: ki,
                parent,
                pos,
                neg,
            };
            // iterating knots downward: ties go to the lower knot
            if best.as_ref().is_none_or(|b| cand.reduction >= b.reduction) {
                best = Some(cand);
            }
        }
        best
    }

    /// Orthogonalizes `col` against the current basis and appends it if it is
    /// not (numerically) in the span. Returns whether it was added.
    fn push_column(&mut self, col: Vec<f64>, bf: BasisFunction) -> bool {
        let norm0 = dot(&col, &col);
        if norm0 == 0.0 {
            return false;
        }
        let mut r = col.clone();
        for _ in 0..2 {
            for qj in &self.q {
                let c = dot(qj, &r);
                r.iter_mut().zip(qj).for_each(|(ri, qi)| *ri -= c * qi);
            }
        }
        let norm = dot(&r, &r);
        if norm <= COLUMN_TOL * norm0 {
            return false;
        }
        let inv = 1.0 / norm.sqrt();
        r.iter_mut().for_each(|v| *v *= inv);
        let c = dot(&r, &self.resid);
        self.resid
            .iter_mut()
            .zip(&r)
            .for_each(|(e, qi)| *e -= c * qi);
        self.q.push(r);
        self.columns.push(col);
        self.basis.push(bf);
        true
    }

    fn run(&mut self, cfg: &FitConfig, tss: f64) {
        let p = self.z.len();
        while self.basis.len() < cfg.max_basis {
            if self.rss() <= 1e-24 * tss {
                break;
            }
            let pairs: Vec<(usize, usize)> = (0..self.columns.len())
                .flat_map(|m| (0..p).map(move |v| (m, v)))
                .filter(|&(m, v)| {
                    if m == 0 {
                        return cfg.max_interaction >= 1;
                    }
                    let b = &self.basis[m - 1];
                    b.degree() < cfg.max_interaction && !b.uses(v)
                })
                .collect();
            let best = pairs
                .par_iter()
                .filter_map(|&(m, v)| self.score(m, v))
                .collect::<Vec<_>>()
                .into_iter()
                .fold(None::<Candidate>, |acc, c| match acc {
                    Some(a) if !c.better_than(&a) => Some(a),
                    _ => Some(c),
                });
            let Some(best) = best else { break };
            if best.reduction < cfg.min_improvement * tss {
                break;
            }
            let t = self.knots[best.input][best.knot_idx];
            let parent_basis = if best.parent == 0 {
                None
            } else {
                Some(self.basis[best.parent - 1].clone())
            };
            let mut added = false;
            for (want, sign) in [(best.pos, Sign::Pos), (best.neg, Sign::Neg)] {
                if !want || self.basis.len() >= cfg.max_basis {
                    continue;
                }
                let h = Hinge::new(best.input, sign, t);
                let bf = match &parent_basis {
                    None => BasisFunction::hinge(best.input, sign, t),
                    Some(pb) => pb.extend(h).expect("input not in parent"),
                };
                let col: Vec<f64> = self.columns[best.parent]
                    .iter()
                    .zip(&self.z[best.input])
                    .map(|(w, zk)| w * h.value(*zk))
                    .collect();
                added |= self.push_column(col, bf);
            }
            if !added {
                break;
            }
        }
    }
}

/// Up to `grid` equally spaced quantiles of the distinct observed values.
fn knot_grid(col: &[f64], grid: usize) -> Vec<f64> {
    let mut u: Vec<f64> = col.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if grid == 0 || u.len() <= grid {
        return u;
    }
    if grid == 1 {
        return vec![u[u.len() / 2]];
    }
    let last = (u.len() - 1) as f64;
    let mut out: Vec<f64> = (0..grid)
        .map(|i| u[((i as f64) * last / (grid - 1) as f64).round() as usize])
        .collect();
    out.dedup();
    out
}

/// Number of distinct knots introduced by the selected basis functions.
fn knot_count(basis: &[BasisFunction], subset: &[usize]) -> usize {
    let set: HashSet<(usize, u64)> = subset
        .iter()
        .filter_map(|&m| basis[m].terms().last().map(|h| (h.index, h.knot.to_bits())))
        .collect();
    set.len()
}

fn gcv(rss: f64, n: usize, n_terms: usize, knots: usize, penalty: f64) -> f64 {
    let c = (n_terms + 1) as f64 + penalty * knots as f64;
    let nf = n as f64;
    if c >= nf {
        return f64::INFINITY;
    }
    (rss / nf) / (1.0 - c / nf).powi(2)
}

/// RSS of the least-squares fit on centered columns `subset`.
fn subset_rss(gram: &DMatrix<f64>, xty: &DVector<f64>, syy: f64, subset: &[usize]) -> f64 {
    if subset.is_empty() {
        return syy;
    }
    let k = subset.len();
    let g = DMatrix::from_fn(k, k, |a, b| gram[(subset[a], subset[b])]);
    let b = DVector::from_fn(k, |a, _| xty[subset[a]]);
    match g.cholesky() {
        Some(ch) => {
            let sol = ch.solve(&b);
            (syy - b.dot(&sol)).max(0.0)
        }
        None => f64::INFINITY,
    }
}

fn backward(columns: &[Vec<f64>], basis: &[BasisFunction], y: &[f64], penalty: f64) -> Vec<usize> {
    let n = y.len();
    let m = basis.len();
    if m == 0 {
        return vec![];
    }
    let ybar = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let mu = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    let gram = DMatrix::from_fn(m, m, |a, b| dot(&centered[a], &centered[b]));
    let xty = DVector::from_fn(m, |a, _| dot(&centered[a], &yc));
    let syy = dot(&yc, &yc);

    let mut current: Vec<usize> = (0..m).collect();
    let score = |s: &[usize], rss: f64| gcv(rss, n, s.len(), knot_count(basis, s), penalty);
    let mut best_set = current.clone();
    let mut best_gcv = score(&current, subset_rss(&gram, &xty, syy, &current));
    while !current.is_empty() {
        let mut drop = None;
        let mut drop_rss = f64::INFINITY;
        for pos in 0..current.len() {
            let mut trial = current.clone();
            trial.remove(pos);
            let rss = subset_rss(&gram, &xty, syy, &trial);
            if rss < drop_rss || drop.is_none() {
                drop_rss = rss;
                drop = Some(pos);
            }
        }
        current.remove(drop.expect("non-empty"));
        let g = score(&current, drop_rss);
        if g <= best_gcv {
            best_gcv = g;
            best_set = current.clone();
        }
    }
    best_set
}

/// Fits a MARS surrogate by greedy forward selection and GCV pruning.
pub fn fit_greedy(data: &DatasetSpec, config: &FitConfig) -> Result<MarsModel> {
    let n = data.n();
    let p = data.p();
    if let Some(t) = &config.input_transform {
        if t.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: t.dim(),
            });
        }
    }
    let y = data.response();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();

    // columns of the design in model coordinates
    let mut z = vec![vec![0.0; n]; p];
    for r in 0..n {
        let row: Vec<f64> = data.design().row(r).iter().copied().collect();
        let zr = match &config.input_transform {
            Some(t) => t.apply(&row),
            None => row,
        };
        for (c, v) in zr.into_iter().enumerate() {
            if !(-UNIT_SLACK..=1.0 + UNIT_SLACK).contains(&v) {
                return Err(Error::InvalidData(format!(
                    "input {c} of row {r} is {v}, outside [0,1]; rescale or supply an input transform"
                )));
            }
            z[c][r] = v.clamp(0.0, 1.0);
        }
    }

    let constant =
        || MarsModel::constant(p, mean).with_input_transform(config.input_transform.clone());
    if n < 2 || tss <= 1e-300 || config.max_basis == 0 {
        return constant();
    }

    let mut fwd = Forward::new(&z, y, config.knot_grid_size);
    fwd.run(config, tss);
    let cols = fwd.columns[1..].to_vec();
    let keep = backward(&cols, &fwd.basis, y, config.gcv_penalty);
    if keep.is_empty() {
        return constant();
    }

    // final least squares on [1, selected columns]
    let k = keep.len();
    let x = DMatrix::from_fn(
        n,
        k + 1,
        |r, c| if c == 0 { 1.0 } else { cols[keep[c - 1]][r] },
    );
    let yv = DVector::from_column_slice(y);
    let sol = x
        .svd(true, true)
        .solve(&yv, 1e-12)
        .map_err(|e| Error::InvalidData(format!("least squares failed: {e}")))?;
    let basis = keep.iter().map(|&m| fwd.basis[m].clone()).collect();
    let coefficients = sol.iter().skip(1).copied().collect();
    MarsModel::new(
        p,
        sol[0],
        coefficients,
        basis,
        config.input_transform.clone(),
    )
}
