//! Primal active-set iteration for problems of the form
//!
//! ```text
//!     minimize    rho/2 |v|^2 + q'v
//!     subject to  a_i'v <= b_i
//! ```
//!
//! with a scalar (possibly zero) curvature `rho`. The batch MPC problem is
//! brought into this form by eliminating the dynamics and whitening the
//! reduced Hessian, so a single engine serves Phase II (rho > 0), the
//! regularized elastic Phase I, and the support-function LPs (rho = 0).
//!
//! The null space of the working rows is tracked through a QR factorization
//! `[a_w1 .. a_wk] = Q R` that is updated on every add and drop and rebuilt
//! from scratch periodically.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, vec_norm2, vec_norm_inf};

/// A system of linear inequalities `a_i'v <= b_i`.
pub trait Constraints {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn rhs(&self, i: usize) -> f64;
    /// Writes row `i` into `out` (length `dim`).
    fn row(&self, i: usize, out: &mut [f64]);
    /// Writes `A v` into `out` (length `len`).
    fn products(&self, v: &[f64], out: &mut [f64]);
    /// Euclidean norm of row `i`.
    fn row_norm(&self, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Constraints + ?Sized> Constraints for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn len(&self) -> usize {
        (**self).len()
    }

    fn rhs(&self, i: usize) -> f64 {
        (**self).rhs(i)
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        (**self).row(i, out)
    }

    fn products(&self, v: &[f64], out: &mut [f64]) {
        (**self).products(v, out)
    }

    fn row_norm(&self, i: usize) -> f64 {
        (**self).row_norm(i)
    }
}

/// Dense constraints stored transposed so that each row is contiguous.
pub struct DenseConstraints<'a> {
    rows_t: &'a DMatrix<f64>,
    rhs: Vec<f64>,
    norms: &'a [f64],
}

impl<'a> DenseConstraints<'a> {
    /// `rows_t` is `dim × len`: column `i` holds row `i` of the system.
    pub fn new(rows_t: &'a DMatrix<f64>, rhs: Vec<f64>, norms: &'a [f64]) -> Self {
        assert_eq!(rows_t.ncols(), rhs.len());
        assert_eq!(norms.len(), rhs.len());
        Self { rows_t, rhs, norms }
    }

    pub fn rhs_vec(&self) -> &[f64] {
        &self.rhs
    }
}

impl Constraints for DenseConstraints<'_> {
    fn dim(&self) -> usize {
        self.rows_t.nrows()
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rhs[i]
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.rows_t.column(i).as_slice());
    }

    fn products(&self, v: &[f64], out: &mut [f64]) {
        let dim = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            let col = &self.rows_t.as_slice()[i * dim..(i + 1) * dim];
            *o = dot(col, v);
        }
    }

    fn row_norm(&self, i: usize) -> f64 {
        self.norms[i]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EngineTolerances {
    /// Relative bound on the projected gradient that counts as stationary.
    pub stationarity: f64,
    /// Multipliers above `-multiplier` are treated as nonnegative.
    pub multiplier: f64,
    /// Smallest `a_i'p` (scaled by `|a_i| |p|`) that can block a step.
    pub blocking: f64,
    /// Smallest relative residual for a row to count as independent.
    pub rank: f64,
    /// Rebuild the QR factors after this many updates.
    pub refactor_every: usize,
    /// Number of repeats of a zero-length step on the same working set
    /// before the degenerate right-hand sides are perturbed.
    pub cycle_repeats: usize,
    pub cycle_perturbation: f64,
}

impl Default for EngineTolerances {
    fn default() -> Self {
        Self {
            stationarity: 1e-9,
            multiplier: 1e-9,
            blocking: 1e-12,
            rank: 1e-10,
            refactor_every: 400,
            cycle_repeats: 3,
            cycle_perturbation: 1e-10,
        }
    }
}

/// Outcome of a single active-set iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// Full step to the minimizer on the current working set.
    MovedFull,
    /// Step cut short by a constraint that joined the working set.
    Blocked(usize),
    /// Working-set row released because of a negative multiplier.
    Dropped(usize),
    /// Stationary on the working set with nonnegative multipliers.
    Converged,
}

pub struct Engine<C: Constraints> {
    cons: C,
    rho: f64,
    q: Vec<f64>,
    tol: EngineTolerances,
    v: Vec<f64>,
    av: Vec<f64>,
    shift: Vec<f64>,
    working: Vec<usize>,
    in_working: Vec<bool>,
    // Orthonormal basis of span{a_w}; qcols[j] has length dim.
    qcols: Vec<Vec<f64>>,
    // Upper-triangular factor, column-major: rcols[j][i] = R[i, j] for i <= j.
    rcols: Vec<Vec<f64>>,
    updates: usize,
    degenerate_visits: HashMap<Vec<usize>, usize>,
    perturbations: usize,
    // scratch
    grad: Vec<f64>,
    dir: Vec<f64>,
    ap: Vec<f64>,
    row_buf: Vec<f64>,
    last_multipliers: Vec<f64>,
}

impl<C: Constraints> Engine<C> {
    /// Starts from a point `v0` assumed feasible (up to tolerance) and a list
    /// of candidate working rows. Candidates that are linearly dependent on
    /// earlier ones are skipped.
    pub fn new(
        cons: C,
        rho: f64,
        q: Vec<f64>,
        v0: Vec<f64>,
        candidates: &[usize],
        tol: EngineTolerances,
    ) -> Self {
        let dim = cons.dim();
        let len = cons.len();
        assert_eq!(q.len(), dim);
        assert_eq!(v0.len(), dim);
        let mut av = vec![0.0; len];
        cons.products(&v0, &mut av);
        let mut engine = Self {
            cons,
            rho,
            q,
            tol,
            v: v0,
            av,
            shift: vec![0.0; len],
            working: Vec::new(),
            in_working: vec![false; len],
            qcols: Vec::new(),
            rcols: Vec::new(),
            updates: 0,
            degenerate_visits: HashMap::new(),
            perturbations: 0,
            grad: vec![0.0; dim],
            dir: vec![0.0; dim],
            ap: vec![0.0; len],
            row_buf: vec![0.0; dim],
            last_multipliers: Vec::new(),
        };
        for &i in candidates {
            if engine.working.len() >= dim {
                break;
            }
            if !engine.in_working[i] {
                // Dependent candidates are simply left out.
                let _ = engine.try_add(i);
            }
        }
        engine
    }

    pub fn point(&self) -> &[f64] {
        &self.v
    }

    pub fn point_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn working_set(&self) -> &[usize] {
        &self.working
    }

    pub fn perturbations(&self) -> usize {
        self.perturbations
    }

    /// Multipliers of the working rows from the last `Converged` or `Dropped`
    /// outcome, in working-set order.
    pub fn multipliers(&self) -> &[f64] {
        &self.last_multipliers
    }

    /// Current slack `b_i - a_i'v` (including any anti-cycling shift).
    pub fn slack(&self, i: usize) -> f64 {
        self.cons.rhs(i) + self.shift[i] - self.av[i]
    }

    pub fn objective(&self) -> f64 {
        0.5 * self.rho * dot(&self.v, &self.v) + dot(&self.q, &self.v)
    }

    /// Overwrites one coordinate of the iterate and refreshes the products.
    pub fn set_coordinate(&mut self, j: usize, value: f64) {
        self.v[j] = value;
        self.refresh_products();
    }

    fn refresh_products(&mut self) {
        self.cons.products(&self.v, &mut self.av);
    }

    fn try_add(&mut self, i: usize) -> Result<()> {
        let dim = self.cons.dim();
        let mut a = vec![0.0; dim];
        self.cons.row(i, &mut a);
        let norm = vec_norm2(&a);
        let mut coeffs = vec![0.0; self.qcols.len() + 1];
        for _ in 0..2 {
            for (j, qj) in self.qcols.iter().enumerate() {
                let c = dot(qj, &a);
                coeffs[j] += c;
                axpy(-c, qj, &mut a);
            }
        }
        let resid = vec_norm2(&a);
        if norm == 0.0 || resid <= self.tol.rank * norm {
            return Err(Error::RankLoss { row: i });
        }
        for x in a.iter_mut() {
            *x /= resid;
        }
        let k = self.qcols.len();
        coeffs[k] = resid;
        self.qcols.push(a);
        self.rcols.push(coeffs);
        self.working.push(i);
        self.in_working[i] = true;
        self.updates += 1;
        Ok(())
    }

    fn drop_at(&mut self, pos: usize) {
        let row = self.working.remove(pos);
        self.in_working[row] = false;
        self.rcols.remove(pos);
        // Columns pos.. of R are now upper Hessenberg; restore triangularity
        // with Givens rotations acting on rows (j, j+1) of R and on the
        // matching columns of Q.
        let k = self.rcols.len();
        for j in pos..k {
            let a = self.rcols[j][j];
            let b = self.rcols[j][j + 1];
            let r = a.hypot(b);
            if r == 0.0 {
                continue;
            }
            let (c, s) = (a / r, b / r);
            for col in self.rcols.iter_mut().skip(j) {
                let (x, y) = (col[j], col[j + 1]);
                col[j] = c * x + s * y;
                col[j + 1] = -s * x + c * y;
            }
            let (left, right) = self.qcols.split_at_mut(j + 1);
            let qa = &mut left[j];
            let qb = &mut right[0];
            for (x, y) in qa.iter_mut().zip(qb.iter_mut()) {
                let (u, w) = (*x, *y);
                *x = c * u + s * w;
                *y = -s * u + c * w;
            }
        }
        self.qcols.pop();
        for (j, col) in self.rcols.iter_mut().enumerate() {
            col.truncate(j + 1);
        }
        self.updates += 1;
    }

    fn refactor(&mut self) -> Result<()> {
        let rows = std::mem::take(&mut self.working);
        for &i in &rows {
            self.in_working[i] = false;
        }
        self.qcols.clear();
        self.rcols.clear();
        for &i in &rows {
            self.try_add(i)?;
        }
        self.updates = 0;
        self.refresh_products();
        Ok(())
    }

    fn compute_gradient(&mut self) {
        for ((g, v), q) in self.grad.iter_mut().zip(&self.v).zip(&self.q) {
            *g = self.rho * v + q;
        }
    }

    /// Projected gradient `(I - QQ')g` into `dir`.
    fn project_gradient(&mut self) {
        self.dir.copy_from_slice(&self.grad);
        for _ in 0..2 {
            for qj in &self.qcols {
                let c = dot(qj, &self.dir);
                axpy(-c, qj, &mut self.dir);
            }
        }
    }

    /// Multipliers solving `R mu = -Q'g`.
    fn compute_multipliers(&mut self) {
        let k = self.qcols.len();
        let mut rhs: Vec<f64> = self.qcols.iter().map(|qj| -dot(qj, &self.grad)).collect();
        for i in (0..k).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..k {
                s -= self.rcols[j][i] * rhs[j];
            }
            rhs[i] = s / self.rcols[i][i];
        }
        self.last_multipliers = rhs;
    }

    /// Performs one iteration.
    pub fn step(&mut self) -> Result<Step> {
        if self.updates >= self.tol.refactor_every {
            self.refactor()?;
        }
        self.compute_gradient();
        self.project_gradient();
        let gscale = 1.0 + vec_norm_inf(&self.grad);
        if vec_norm_inf(&self.dir) <= self.tol.stationarity * gscale {
            self.compute_multipliers();
            let mut worst: Option<(usize, f64)> = None;
            for (pos, &mu) in self.last_multipliers.iter().enumerate() {
                if mu < -self.tol.multiplier * gscale && worst.map_or(true, |(_, w)| mu < w) {
                    worst = Some((pos, mu));
                }
            }
            return Ok(match worst {
                None => Step::Converged,
                Some((pos, _)) => {
                    let row = self.working[pos];
                    self.drop_at(pos);
                    Step::Dropped(row)
                }
            });
        }

        // Search direction.
        let (alpha_max, scale) = if self.rho > 0.0 { (1.0, -1.0 / self.rho) } else { (f64::INFINITY, -1.0) };
        for d in self.dir.iter_mut() {
            *d *= scale;
        }
        self.cons.products(&self.dir, &mut self.ap);
        let pnorm = vec_norm2(&self.dir);

        // Drift check on the working rows.
        let drift = self
            .working
            .iter()
            .any(|&i| self.ap[i].abs() > 1e-9 * (1.0 + pnorm * self.cons.row_norm(i)));
        if drift && self.updates > 0 {
            self.refactor()?;
            return self.step();
        }

        let mut alpha = alpha_max;
        let mut blocking = None;
        for i in 0..self.cons.len() {
            if self.in_working[i] {
                continue;
            }
            let api = self.ap[i];
            if api <= self.tol.blocking * (1.0 + pnorm * self.cons.row_norm(i)) {
                continue;
            }
            let ratio = self.slack(i).max(0.0) / api;
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(i);
            }
        }
        if blocking.is_none() && alpha.is_infinite() {
            return Err(Error::Unbounded);
        }

        axpy(alpha, &self.dir.clone(), &mut self.v);
        let ap = std::mem::take(&mut self.ap);
        axpy(alpha, &ap, &mut self.av);
        self.ap = ap;

        match blocking {
            None => Ok(Step::MovedFull),
            Some(i) => {
                if alpha == 0.0 {
                    self.note_degenerate_step();
                }
                self.try_add(i)?;
                Ok(Step::Blocked(i))
            }
        }
    }

    fn note_degenerate_step(&mut self) {
        let mut key = self.working.clone();
        key.sort_unstable();
        let count = self.degenerate_visits.entry(key).or_insert(0);
        *count += 1;
        if *count >= self.tol.cycle_repeats {
            *count = 0;
            // Relax every degenerate (zero-slack) row outside the working set.
            for i in 0..self.cons.len() {
                if !self.in_working[i] && self.slack(i) <= 0.0 {
                    let b = self.cons.rhs(i);
                    self.shift[i] += self.tol.cycle_perturbation * (1.0 + b.abs());
                }
            }
            self.perturbations += 1;
        }
    }

    /// Checks that the working rows are linearly independent by rebuilding
    /// the factorization; used by tests.
    pub fn working_rank_ok(&mut self) -> bool {
        self.refactor().is_ok()
    }

    /// Row `i` of the constraint system, for diagnostics.
    pub fn constraints(&self) -> &C {
        &self.cons
    }

    pub fn in_working_set(&self, i: usize) -> bool {
        self.in_working[i]
    }

    pub fn constraint_row(&mut self, i: usize) -> Vec<f64> {
        self.cons.row(i, &mut self.row_buf);
        self.row_buf.clone()
    }
}
