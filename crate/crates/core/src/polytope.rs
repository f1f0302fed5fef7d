//! Halfspace polytopes `{v : A v <= b}`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::active_set::engine::{Constraints, DenseConstraints, Engine, EngineTolerances, Step};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Rows whose support value exceeds the bound by less than this are redundant.
pub const REDUNDANCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub a: Mat,
    pub b: Vector,
}

impl Polytope {
    pub fn new(a: Mat, b: Vector) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "polytope has {} rows but {} bounds",
                a.nrows(),
                b.len()
            )));
        }
        Ok(Self { a, b })
    }

    /// Axis-aligned box `lo <= v <= hi` written as `[I; -I] v <= [hi; -lo]`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        let n = lo.len();
        let mut a = Mat::zeros(2 * n, n);
        let mut b = Vector::zeros(2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(n + i, i)] = -1.0;
            b[i] = hi[i];
            b[n + i] = -lo[i];
        }
        Self { a, b }
    }

    /// Symmetric box `|v_i| <= r_i`.
    pub fn symmetric_box(radius: &[f64]) -> Self {
        let lo: Vec<f64> = radius.iter().map(|r| -r).collect();
        Self::from_box(&lo, radius)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        self.max_violation(v) <= tol
    }

    pub fn max_violation(&self, v: &Vector) -> f64 {
        let av = &self.a * v;
        av.iter()
            .zip(self.b.iter())
            .map(|(x, b)| x - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rescales every row to unit Euclidean norm. Zero rows are kept as is.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows() {
            let norm = self.a.row(i).norm();
            if norm > 0.0 {
                out.a.row_mut(i).scale_mut(1.0 / norm);
                out.b[i] /= norm;
            }
        }
        out
    }

    /// Stacks the rows of `other` under `self`.
    pub fn intersect(&self, other: &Polytope) -> Self {
        let a = crate::linalg::vstack(&[&self.a, &other.a]);
        let b = Vector::from_iterator(
            self.b.len() + other.b.len(),
            self.b.iter().chain(other.b.iter()).copied(),
        );
        Self { a, b }
    }

    /// Returns `(lo, hi)` when the polytope is an axis-aligned box given by
    /// unit coordinate rows.
    pub fn as_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for i in 0..self.rows() {
            let row = self.a.row(i);
            let nz: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let j = nz[0];
            let c = row[j];
            if c > 0.0 {
                hi[j] = hi[j].min(self.b[i] / c);
            } else {
                lo[j] = lo[j].max(self.b[i] / c);
            }
        }
        if lo.iter().chain(hi.iter()).all(|v| v.is_finite()) {
            Some((lo, hi))
        } else {
            None
        }
    }

    /// `max c'v` over the polytope. The origin must be feasible.
    pub fn support(&self, c: &[f64]) -> Result<f64> {
        support_over(&self.a, self.b.as_slice(), None, c)
    }

    /// Removes redundant rows one at a time (a row is redundant when its
    /// support over the remaining rows does not exceed its bound by more
    /// than [`REDUNDANCY_TOL`]). Row order of the survivors is preserved.
    pub fn remove_redundant(&self) -> Result<Self> {
        let p = self.normalized();
        let mut keep = vec![true; p.rows()];
        for i in 0..p.rows() {
            let row: Vec<f64> = p.a.row(i).iter().copied().collect();
            if row.iter().all(|v| *v == 0.0) {
                if p.b[i] >= 0.0 {
                    keep[i] = false;
                }
                continue;
            }
            keep[i] = false;
            let value = support_over(&p.a, p.b.as_slice(), Some(&keep), &row);
            match value {
                Ok(v) if v <= p.b[i] + REDUNDANCY_TOL => {}
                Ok(_) | Err(Error::Unbounded) => keep[i] = true,
                Err(e) => return Err(e),
            }
        }
        Ok(p.select_rows(&keep))
    }

    pub fn select_rows(&self, keep: &[bool]) -> Self {
        let idx: Vec<usize> = (0..self.rows()).filter(|&i| keep[i]).collect();
        let mut a = Mat::zeros(idx.len(), self.dim());
        let mut b = Vector::zeros(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            a.row_mut(r).copy_from(&self.a.row(i));
            b[r] = self.b[i];
        }
        Self { a, b }
    }

    /// Hit-and-run samples from the polytope, started at `start` (which must
    /// be strictly interior). `thin` chain steps are taken between samples.
    pub fn hit_and_run<R: Rng>(
        &self,
        start: &Vector,
        count: usize,
        burn_in: usize,
        thin: usize,
        rng: &mut R,
    ) -> Vec<Vector> {
        let n = self.dim();
        let mut x = start.clone();
        let mut out = Vec::with_capacity(count);
        let total = burn_in + count * thin.max(1);
        for step in 0..total {
            let d = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = &d / d.norm();
            let ad = &self.a * &d;
            let ax = &self.a * &x;
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..self.rows() {
                let slack = (self.b[i] - ax[i]).max(0.0);
                if ad[i] > 1e-14 {
                    hi = hi.min(slack / ad[i]);
                } else if ad[i] < -1e-14 {
                    lo = lo.max(slack / ad[i]);
                }
            }
            if lo.is_finite() && hi.is_finite() && hi > lo {
                let t = rng.gen_range(lo..hi);
                x += &d * t;
            }
            if step >= burn_in && (step - burn_in + 1) % thin.max(1) == 0 {
                out.push(x.clone());
            }
        }
        out
    }
}

/// Support LP over the rows flagged in `keep` (all rows when `None`).
fn support_over(a: &Mat, b: &[f64], keep: Option<&[bool]>, c: &[f64]) -> Result<f64> {
    let idx: Vec<usize> = (0..a.nrows()).filter(|&i| keep.map_or(true, |k| k[i])).collect();
    let n = a.ncols();
    let mut rows_t = DMatrix::zeros(n, idx.len());
    let mut rhs = Vec::with_capacity(idx.len());
    let mut norms = Vec::with_capacity(idx.len());
    for (col, &i) in idx.iter().enumerate() {
        for j in 0..n {
            rows_t[(j, col)] = a[(i, j)];
        }
        norms.push(a.row(i).norm());
        if b[i] < 0.0 {
            return Err(Error::InvalidArgument("support LP needs the origin to be feasible".into()));
        }
        rhs.push(b[i]);
    }
    let cons = DenseConstraints::new(&rows_t, rhs, &norms);
    let q: Vec<f64> = c.iter().map(|v| -v).collect();
    let mut engine = Engine::new(&cons, 0.0, q, vec![0.0; n], &[], EngineTolerances::default());
    let limit = 50 * (n + cons.len()).max(10);
    for _ in 0..limit {
        if engine.step()? == Step::Converged {
            return Ok(crate::linalg::dot(c, engine.point()));
        }
    }
    Err(Error::IterLimit { phase: "support LP", iterations: limit })
}
