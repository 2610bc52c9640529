//! Disjoint box covers of regions cut out of a box by linear inequalities,
//! and the mixture-of-uniforms prior they induce.

mod io;

pub use io::{ConstraintFile, PartitionFile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{PriorSpec, UnivariateMeasure};

/// Default smallest box volume considered for splitting.
pub const DEFAULT_MIN_VOLUME: f64 = 1e-12;

/// `coeffs · x ≤ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// Intersection of a global box with half-spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraintSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<LinearConstraint>,
}

impl LinearConstraintSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, rows: Vec<LinearConstraint>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::Partition(format!(
                    "global box side [{l}, {u}] must be finite and non-empty"
                )));
            }
        }
        for r in &rows {
            if r.coeffs.len() != lower.len() {
                return Err(Error::DimensionMismatch {
                    expected: lower.len(),
                    got: r.coeffs.len(),
                });
            }
            if !(r.rhs.is_finite() && r.coeffs.iter().all(|c| c.is_finite())) {
                return Err(Error::Partition(
                    "constraint coefficients must be finite".into(),
                ));
            }
        }
        Ok(LinearConstraintSet { lower, upper, rows })
    }

    /// Constraints on the unit cube.
    pub fn unit_cube(p: usize, rows: Vec<LinearConstraint>) -> Result<Self> {
        Self::new(vec![0.0; p], vec![1.0; p], rows)
    }

    pub fn p(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rows(&self) -> &[LinearConstraint] {
        &self.rows
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.p()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
            && self.rows.iter().all(|r| dot(&r.coeffs, x) <= r.rhs)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperrect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Hyperrect {
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }

    /// Whether the interiors intersect.
    pub fn overlaps(&self, o: &Hyperrect) -> bool {
        (0..self.lower.len()).all(|k| self.lower[k] < o.upper[k] && o.lower[k] < self.upper[k])
    }

    fn halves(&self, k: usize) -> (Hyperrect, Hyperrect) {
        let mid = 0.5 * (self.lower[k] + self.upper[k]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[k] = mid;
        right.lower[k] = mid;
        (left, right)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Inside,
    Outside,
    Partial,
}

/// Classifies a box against the constraints by its vertices. For each
/// half-space only the extreme vertices matter, so the test is exact without
/// enumerating all `2^p` corners.
pub fn classify_box(b: &Hyperrect, constraints: &LinearConstraintSet) -> Result<Classification> {
    let p = constraints.p();
    if b.lower.len() != p || b.upper.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: b.lower.len(),
        });
    }
    let mut inside = true;
    for r in &constraints.rows {
        let (mut lo, mut hi) = (0.0, 0.0);
        for k in 0..p {
            let (a, c) = (r.coeffs[k] * b.lower[k], r.coeffs[k] * b.upper[k]);
            lo += a.min(c);
            hi += a.max(c);
        }
        if lo > r.rhs {
            return Ok(Classification::Outside);
        }
        if hi > r.rhs {
            inside = false;
        }
    }
    Ok(if inside {
        Classification::Inside
    } else {
        Classification::Partial
    })
}

/// Disjoint boxes inside the constrained region with mixture weights
/// proportional to volume.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxPartition {
    pub boxes: Vec<Hyperrect>,
    pub weights: Vec<f64>,
    pub covered_volume: f64,
    pub split_dims: Vec<usize>,
    pub min_volume: f64,
}

impl BoxPartition {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Recursive midpoint bisection of the global box, cycling through
/// `split_dims` (all coordinates when `None`). Boxes fully inside are kept,
/// boxes fully outside dropped, and partial boxes split while their halves
/// have volume at least `min_volume`.
pub fn partition(
    constraints: &LinearConstraintSet,
    min_volume: f64,
    split_dims: Option<&[usize]>,
) -> Result<BoxPartition> {
    if !(min_volume > 0.0 && min_volume.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "minimum volume must be positive, got {min_volume}"
        )));
    }
    let p = constraints.p();
    let dims: Vec<usize> = match split_dims {
        Some(d) => d.to_vec(),
        None => (0..p).collect(),
    };
    if dims.iter().any(|&k| k >= p) {
        return Err(Error::InvalidArgument(format!(
            "split dimensions must be below {p}"
        )));
    }
    let root = Hyperrect {
        lower: constraints.lower.clone(),
        upper: constraints.upper.clone(),
    };
    let mut boxes = Vec::new();
    let mut stack = vec![(root, 0usize)];
    while let Some((b, depth)) = stack.pop() {
        match classify_box(&b, constraints)? {
            Classification::Inside => boxes.push(b),
            Classification::Outside => {}
            Classification::Partial => {
                if dims.is_empty() || 0.5 * b.volume() < min_volume {
                    continue;
                }
                let (l, r) = b.halves(dims[depth % dims.len()]);
                stack.push((r, depth + 1));
                stack.push((l, depth + 1));
            }
        }
    }
    boxes.sort_by(|a, b| {
        a.lower
            .iter()
            .chain(&a.upper)
            .zip(b.lower.iter().chain(&b.upper))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let volumes: Vec<f64> = boxes.iter().map(Hyperrect::volume).collect();
    let covered_volume = volumes.iter().fold(0.0, |a, v| a + v);
    let weights = volumes.iter().map(|v| v / covered_volume).collect();
    Ok(BoxPartition {
        boxes,
        weights,
        covered_volume,
        split_dims: dims,
        min_volume,
    })
}

/// Mixture of uniform products, one component per box.
pub fn to_prior(partition: &BoxPartition) -> Result<PriorSpec> {
    let product = |b: &Hyperrect| -> Result<PriorSpec> {
        PriorSpec::product(
            b.lower
                .iter()
                .zip(&b.upper)
                .map(|(&l, &u)| UnivariateMeasure::uniform(l, u))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    match partition.boxes.as_slice() {
        [] => Err(Error::Partition(
            "empty region: no box lies inside the constraints".into(),
        )),
        [b] => product(b),
        boxes => PriorSpec::mixture(
            partition
                .weights
                .iter()
                .zip(boxes)
                .map(|(&w, b)| Ok((w, product(b)?)))
                .collect::<Result<Vec<_>>>()?,
        ),
    }
}
