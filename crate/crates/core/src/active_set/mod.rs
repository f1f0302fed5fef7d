//! Primal active-set QP solver for the batch problem.
//!
//! The dynamics equalities are eliminated once per problem (see
//! [`crate::batch_qp::ReducedForm`]); Phase I and Phase II then run the
//! [`engine::Engine`] on the reduced inequality system.

pub mod engine;
pub mod phase1;

use std::fmt;
use std::str::FromStr;

use engine::{DenseConstraints, Engine, EngineTolerances, Step};

use crate::batch_qp::{BatchQp, PrimalDualPoint, FEAS_TOL};
use crate::certificates::{self, Certificate, CertifyOptions};
use crate::error::{Error, Result};
use crate::linalg::Vector;

pub use phase1::{phase1, ElasticConstraints};

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Absolute primal feasibility tolerance.
    pub feas_tol: f64,
    /// Slack below which a row joins the initial working set.
    pub active_tol: f64,
    /// Curvature `ε` added to the elastic Phase I objective.
    pub phase1_regularization: f64,
    /// Phase II iteration limit is `iteration_factor · d_p`.
    pub iteration_factor: usize,
    pub phase1_slack: SlackMode,
    pub engine: EngineTolerances,
    pub certify: CertifyOptions,
}

/// How violated rows are relaxed in Phase I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlackMode {
    /// One slack per violated row; minimizes the total violation.
    #[default]
    PerRow,
    /// One slack shared by all violated rows; minimizes the largest
    /// violation. Much smaller subproblems, used for pure feasibility tests.
    Shared,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: FEAS_TOL,
            active_tol: 1e-9,
            phase1_regularization: 1e-8,
            iteration_factor: 50,
            phase1_slack: SlackMode::PerRow,
            engine: EngineTolerances::default(),
            certify: CertifyOptions::default(),
        }
    }
}

/// When to stop iterating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// Stop as soon as Phase I has produced a feasible point.
    PrimalFeasible,
    /// Stop once the duality gap is at most `x'Qx`.
    FeasibleAndSuboptimal,
    /// Stop once the duality gap is at most the threshold.
    FixedGap(f64),
    /// Solve to optimality.
    Optimal,
}

impl Termination {
    pub fn new_fixed_gap(threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!("gap threshold must be finite and >= 0, got {threshold}")));
        }
        Ok(Termination::FixedGap(threshold))
    }

    fn gap_threshold(&self, qp: &BatchQp, x: &Vector) -> Option<f64> {
        match *self {
            Termination::FeasibleAndSuboptimal => Some(qp.state_cost(x)),
            Termination::FixedGap(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::PrimalFeasible => write!(f, "pf"),
            Termination::FeasibleAndSuboptimal => write!(f, "pfsub"),
            Termination::FixedGap(t) => write!(f, "gap:{t}"),
            Termination::Optimal => write!(f, "optimal"),
        }
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pf" => Ok(Termination::PrimalFeasible),
            "pfsub" | "pf+sub" => Ok(Termination::FeasibleAndSuboptimal),
            "optimal" | "opt" => Ok(Termination::Optimal),
            other => match other.strip_prefix("gap:") {
                Some(t) => {
                    let v: f64 = t
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad gap threshold '{t}'")))?;
                    Termination::new_fixed_gap(v)
                }
                None => Err(Error::InvalidArgument(format!(
                    "unknown criterion '{s}' (expected pf, pfsub, gap:<t>, optimal)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SolveStatus {
    Running,
    Feasible,
    Certified,
    Optimal,
}

/// Inequality rows treated as equalities.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorkingSet {
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    MovedFull,
    Blocked(usize),
    Dropped(usize),
    Converged,
}

impl From<Step> for StepOutcome {
    fn from(s: Step) -> Self {
        match s {
            Step::MovedFull => StepOutcome::MovedFull,
            Step::Blocked(i) => StepOutcome::Blocked(i),
            Step::Dropped(i) => StepOutcome::Dropped(i),
            Step::Converged => StepOutcome::Converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub status: SolveStatus,
    /// Duality gap of the returned point when it was certified.
    pub eta: Option<f64>,
    pub perturbations: usize,
}

impl SolveStats {
    pub fn total_iters(&self) -> usize {
        self.phase1_iters + self.phase2_iters
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub point: PrimalDualPoint,
    pub stats: SolveStats,
    /// Final working set, usable as a hint for nearby problems.
    pub working_set: Vec<usize>,
}

/// Rows with slack at most `tol` at `z0`, filtered greedily (ascending
/// index) to stay linearly independent in the reduced space.
pub fn init_working_set(qp: &BatchQp, x: &Vector, z0: &Vector, tol: f64) -> WorkingSet {
    let rhs = qp.reduced.rhs(&qp.w_in, x);
    let w0 = qp.reduced.to_w(x, z0);
    let indices = initial_candidates(qp, &rhs, &w0, tol, &[]);
    let cons = DenseConstraints::new(&qp.reduced.ct_t, rhs, &qp.reduced.ct_norms);
    let engine = Engine::new(&cons, 2.0, vec![0.0; qp.reduced.r], w0, &indices, EngineTolerances::default());
    WorkingSet { indices: engine.working_set().to_vec() }
}

fn initial_candidates(qp: &BatchQp, rhs: &[f64], w0: &[f64], tol: f64, hint: &[usize]) -> Vec<usize> {
    let red = &qp.reduced;
    let tight = |i: usize| {
        let slack = rhs[i] - crate::linalg::dot(red.ct_t.column(i).as_slice(), w0);
        red.ct_norms[i] > 0.0 && slack <= tol * (1.0 + rhs[i].abs())
    };
    let mut out: Vec<usize> = hint.iter().copied().filter(|&i| i < rhs.len() && tight(i)).collect();
    let mut seen = vec![false; rhs.len()];
    for &i in &out {
        seen[i] = true;
    }
    out.extend((0..rhs.len()).filter(|&i| !seen[i] && tight(i)));
    out
}

/// Live Phase II state: the current iterate, working set and counters.
pub struct SolverState<'q> {
    qp: &'q BatchQp,
    x: Vector,
    engine: Engine<DenseConstraints<'q>>,
    /// A feasible initial plan, reported verbatim until the first move.
    unmoved: Option<Vector>,
    pub phase1_iters: usize,
    pub iter: usize,
    pub status: SolveStatus,
}

impl<'q> SolverState<'q> {
    /// Runs Phase I from `z_init` and prepares Phase II. `hint` lists rows
    /// to try first when building the initial working set.
    pub fn start(qp: &'q BatchQp, x: &Vector, z_init: &Vector, hint: &[usize], opts: &SolverOptions) -> Result<Self> {
        check_dims(qp, x, z_init)?;
        let rhs = qp.reduced.rhs(&qp.w_in, x);
        let feasible_start = qp.check_primal_feasible(z_init, x, opts.feas_tol).feasible;
        let (w0, phase1_iters) = if feasible_start {
            (qp.reduced.to_w(x, z_init), 0)
        } else {
            let w = qp.reduced.to_w(x, z_init);
            let out = phase1::phase1_reduced(qp, &rhs, w, opts)?;
            (out.w, out.iterations)
        };
        let candidates = initial_candidates(qp, &rhs, &w0, opts.active_tol, hint);
        let q: Vec<f64> = qp.reduced.linear_term(x).iter().map(|c| 2.0 * c).collect();
        let cons = DenseConstraints::new(&qp.reduced.ct_t, rhs, &qp.reduced.ct_norms);
        let engine = Engine::new(cons, 2.0, q, w0, &candidates, opts.engine);
        let unmoved = feasible_start.then(|| z_init.clone());
        Ok(Self { qp, x: x.clone(), engine, unmoved, phase1_iters, iter: 0, status: SolveStatus::Feasible })
    }

    pub fn z(&self) -> Vector {
        if let Some(z) = &self.unmoved {
            return z.clone();
        }
        self.qp.reduced.to_z(&self.x, self.engine.point())
    }

    pub fn working_set(&self) -> WorkingSet {
        WorkingSet { indices: self.engine.working_set().to_vec() }
    }

    pub fn perturbations(&self) -> usize {
        self.engine.perturbations()
    }

    /// One Phase II iteration.
    pub fn phase2_step(&mut self) -> Result<StepOutcome> {
        let out = self.engine.step()?;
        if matches!(out, Step::MovedFull | Step::Blocked(_)) {
            self.unmoved = None;
        }
        if out == Step::Converged {
            self.status = SolveStatus::Optimal;
        } else {
            self.iter += 1;
        }
        Ok(out.into())
    }

    /// Multipliers at a converged point: `λ` from the working rows (clamped
    /// at zero) and `ν` from the equality block of the stationarity system.
    pub fn optimal_duals(&self) -> (Vector, Vector) {
        let mut lambda = Vector::zeros(self.qp.dims.d_in);
        for (&row, &mu) in self.engine.working_set().iter().zip(self.engine.multipliers()) {
            lambda[row] = mu.max(0.0);
        }
        let nu = certificates::nu_given_lambda(self.qp, &lambda, &self.x);
        (nu, lambda)
    }
}

fn check_dims(qp: &BatchQp, x: &Vector, z: &Vector) -> Result<()> {
    if x.len() != qp.dims.n || z.len() != qp.dims.d_p {
        return Err(Error::DimensionMismatch(format!(
            "expected x of length {} and z of length {}, got {} and {}",
            qp.dims.n,
            qp.dims.d_p,
            x.len(),
            z.len()
        )));
    }
    Ok(())
}

/// Solves the QP at `x` from `z_init` until `criterion` is met, certifying
/// with [`certificates::certify`].
pub fn solve(
    qp: &BatchQp,
    x: &Vector,
    z_init: &Vector,
    hint: &[usize],
    criterion: Termination,
    opts: &SolverOptions,
) -> Result<Solution> {
    let certify_opts = opts.certify;
    solve_with(qp, x, z_init, hint, criterion, opts, &mut |z| certificates::certify_with(qp, z, x, &certify_opts), &mut |_| {})
}

/// Like [`solve`] with a caller-supplied certifier and an observer that sees
/// every primal-feasible iterate (the Phase I output and each Phase II point).
#[allow(clippy::too_many_arguments)]
pub fn solve_with(
    qp: &BatchQp,
    x: &Vector,
    z_init: &Vector,
    hint: &[usize],
    criterion: Termination,
    opts: &SolverOptions,
    certifier: &mut dyn FnMut(&Vector) -> Certificate,
    observer: &mut dyn FnMut(&Vector),
) -> Result<Solution> {
    let mut state = SolverState::start(qp, x, z_init, hint, opts)?;
    let threshold = criterion.gap_threshold(qp, x);
    let limit = opts.iteration_factor * qp.dims.d_p.max(1);

    let finish_certified = |state: &SolverState, z: Vector, cert: Certificate, status: SolveStatus| Solution {
        point: PrimalDualPoint { z, nu: cert.nu, lambda: cert.lambda },
        stats: SolveStats {
            phase1_iters: state.phase1_iters,
            phase2_iters: state.iter,
            status,
            eta: Some(cert.eta),
            perturbations: state.perturbations(),
        },
        working_set: state.engine.working_set().to_vec(),
    };

    let mut z = state.z();
    observer(&z);
    if criterion == Termination::PrimalFeasible {
        let cert = certificates::certify_with(qp, &z, x, &opts.certify);
        return Ok(finish_certified(&state, z, cert, SolveStatus::Feasible));
    }
    let passes = |cert: &Certificate, t: f64| cert.feasible && cert.eta <= t.max(opts.certify.eps_abs);
    if let Some(t) = threshold {
        let cert = certifier(&z);
        if passes(&cert, t) {
            return Ok(finish_certified(&state, z, cert, SolveStatus::Certified));
        }
    }
    loop {
        if state.iter >= limit {
            return Err(Error::IterLimit { phase: "phase II", iterations: state.iter });
        }
        let outcome = state.phase2_step()?;
        match outcome {
            StepOutcome::Converged => break,
            StepOutcome::Dropped(_) => continue,
            StepOutcome::MovedFull | StepOutcome::Blocked(_) => {
                z = state.z();
                observer(&z);
                if let Some(t) = threshold {
                    let cert = certifier(&z);
                    if passes(&cert, t) {
                        return Ok(finish_certified(&state, z, cert, SolveStatus::Certified));
                    }
                }
            }
        }
    }
    let z = state.z();
    let (nu, lambda) = state.optimal_duals();
    let eta = qp.duality_gap(&z, &nu, &lambda, x).ok();
    Ok(Solution {
        point: PrimalDualPoint { z, nu, lambda },
        stats: SolveStats {
            phase1_iters: state.phase1_iters,
            phase2_iters: state.iter,
            status: SolveStatus::Optimal,
            eta,
            perturbations: state.perturbations(),
        },
        working_set: state.engine.working_set().to_vec(),
    })
}
