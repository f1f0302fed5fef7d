//! Phase I: elastic feasibility problem in the reduced coordinates.

use nalgebra::DMatrix;

use super::engine::{Constraints, DenseConstraints, Engine, Step};
use super::{SlackMode, SolverOptions};
use crate::batch_qp::BatchQp;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Base rows `c_i'w <= d_i`, relaxed to `c_i'w - y_j <= d_i` for the rows
/// listed in `elastic`, followed by the bounds `-y_j <= 0`. With a shared
/// slack every elastic row uses the same `y_0`.
pub struct ElasticConstraints<'a> {
    base: DenseConstraints<'a>,
    r: usize,
    elastic: Vec<usize>,
    slot: Vec<Option<usize>>,
    slacks: usize,
}

impl<'a> ElasticConstraints<'a> {
    pub fn new(ct_t: &'a DMatrix<f64>, rhs: Vec<f64>, norms: &'a [f64], elastic: Vec<usize>) -> Self {
        Self::with_mode(ct_t, rhs, norms, elastic, SlackMode::PerRow)
    }

    pub fn with_mode(ct_t: &'a DMatrix<f64>, rhs: Vec<f64>, norms: &'a [f64], elastic: Vec<usize>, mode: SlackMode) -> Self {
        let base = DenseConstraints::new(ct_t, rhs, norms);
        let mut slot = vec![None; base.len()];
        for (j, &i) in elastic.iter().enumerate() {
            slot[i] = Some(if mode == SlackMode::Shared { 0 } else { j });
        }
        let slacks = match mode {
            SlackMode::Shared => usize::from(!elastic.is_empty()),
            SlackMode::PerRow => elastic.len(),
        };
        Self { r: ct_t.nrows(), base, elastic, slot, slacks }
    }

    pub fn slack_count(&self) -> usize {
        self.slacks
    }

    pub fn elastic_rows(&self) -> &[usize] {
        &self.elastic
    }
}

impl Constraints for ElasticConstraints<'_> {
    fn dim(&self) -> usize {
        self.r + self.slacks
    }

    fn len(&self) -> usize {
        self.base.len() + self.slacks
    }

    fn rhs(&self, i: usize) -> f64 {
        if i < self.base.len() {
            self.base.rhs(i)
        } else {
            0.0
        }
    }

    fn row(&self, i: usize, out: &mut [f64]) {
        out.fill(0.0);
        let nb = self.base.len();
        if i < nb {
            self.base.row(i, &mut out[..self.r]);
            if let Some(j) = self.slot[i] {
                out[self.r + j] = -1.0;
            }
        } else {
            out[self.r + i - nb] = -1.0;
        }
    }

    fn products(&self, v: &[f64], out: &mut [f64]) {
        let nb = self.base.len();
        let (w, y) = v.split_at(self.r);
        self.base.products(w, &mut out[..nb]);
        for &i in &self.elastic {
            out[i] -= y[self.slot[i].unwrap_or(0)];
        }
        for (j, yj) in y.iter().enumerate() {
            out[nb + j] = -yj;
        }
    }

    fn row_norm(&self, i: usize) -> f64 {
        let nb = self.base.len();
        if i < nb {
            let b = self.base.row_norm(i);
            if self.slot[i].is_some() {
                (b * b + 1.0).sqrt()
            } else {
                b
            }
        } else {
            1.0
        }
    }
}

pub struct Phase1Outcome {
    /// Feasible reduced coordinates.
    pub w: Vec<f64>,
    pub iterations: usize,
}

/// Finds a feasible point of the reduced system `c_i'w <= d_i` starting
/// from `w_init`. A feasible start is returned unchanged.
pub fn phase1_reduced(qp: &BatchQp, rhs: &[f64], w_init: Vec<f64>, opts: &SolverOptions) -> Result<Phase1Outcome> {
    let red = &qp.reduced;
    let d_in = rhs.len();
    let mut av = vec![0.0; d_in];
    DenseConstraints::new(&red.ct_t, rhs.to_vec(), &red.ct_norms).products(&w_init, &mut av);

    let mut elastic = Vec::new();
    let mut y0 = Vec::new();
    for i in 0..d_in {
        let viol = av[i] - rhs[i];
        if red.ct_norms[i] <= 1e-14 {
            if viol > opts.feas_tol {
                return Err(Error::Infeasible);
            }
            continue;
        }
        if viol > 0.0 {
            elastic.push(i);
            y0.push(viol);
        }
    }
    if elastic.iter().all(|&i| av[i] - rhs[i] <= opts.feas_tol) {
        return Ok(Phase1Outcome { w: w_init, iterations: 0 });
    }

    let r = red.r;
    let shared = opts.phase1_slack == SlackMode::Shared;
    if shared {
        let worst = y0.iter().fold(0.0f64, |a, v| a.max(*v));
        y0 = vec![worst];
    }
    let k = y0.len();
    let eps = opts.phase1_regularization;
    let mut q = vec![0.0; r + k];
    for (qi, wi) in q.iter_mut().zip(&w_init) {
        *qi = -2.0 * eps * wi;
    }
    q[r..].fill(1.0);
    let mut v0 = w_init.clone();
    v0.extend_from_slice(&y0);
    let cons = ElasticConstraints::with_mode(&red.ct_t, rhs.to_vec(), &red.ct_norms, elastic, opts.phase1_slack);
    // With a shared slack only the most violated rows start active.
    let candidates: Vec<usize> = if shared {
        cons.elastic_rows().iter().copied().filter(|&i| av[i] - rhs[i] >= y0[0] * (1.0 - 1e-12)).collect()
    } else {
        cons.elastic_rows().to_vec()
    };
    let mut engine = Engine::new(cons, 2.0 * eps, q, v0, &candidates, opts.engine);

    let threshold = if shared { opts.feas_tol } else { d_in as f64 * opts.feas_tol };
    let limit = opts.iteration_factor * (r + k + d_in);
    let mut iterations = 0;
    loop {
        let y = &engine.point()[r..];
        let y_max = y.iter().fold(0.0f64, |a, v| a.max(*v));
        if y_max <= 1e-3 * opts.feas_tol {
            break;
        }
        if iterations >= limit {
            return Err(Error::IterLimit { phase: "phase I", iterations });
        }
        match engine.step()? {
            Step::Converged => {
                let total: f64 = engine.point()[r..].iter().map(|v| v.max(0.0)).sum();
                if total > threshold {
                    return Err(Error::Infeasible);
                }
                break;
            }
            _ => iterations += 1,
        }
    }
    let w = engine.point()[..r].to_vec();
    Ok(Phase1Outcome { w, iterations })
}

/// Phase I in the original variables: returns a primal-feasible `z0` and
/// the number of Phase I iterations, or [`Error::Infeasible`].
pub fn phase1(qp: &BatchQp, x: &Vector, z_init: &Vector, opts: &SolverOptions) -> Result<(Vector, usize)> {
    if qp.check_primal_feasible(z_init, x, opts.feas_tol).feasible {
        return Ok((z_init.clone(), 0));
    }
    let rhs = qp.reduced.rhs(&qp.w_in, x);
    let w_init = qp.reduced.to_w(x, z_init);
    let out = phase1_reduced(qp, &rhs, w_init, opts)?;
    Ok((qp.reduced.to_z(x, &out.w), out.iterations))
}
