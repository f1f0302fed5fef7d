//! Explicit-implicit planner, receding-horizon simulation with the LQR
//! handoff inside the terminal set, and open/closed-loop metrics.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;

use crate::active_set::{self, SolveStatus, SolverOptions, Termination};
use crate::batch_qp::{BatchQp, FEAS_TOL};
use crate::datagen::SampleRecord;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::neural::MlpModel;
use crate::systems::{lqr_gain, LtiProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanStats {
    pub nn_used: bool,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub eta: Option<f64>,
    pub certified: bool,
}

impl PlanStats {
    pub fn total_iters(&self) -> usize {
        self.phase1_iters + self.phase2_iters
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub z: Vector,
    pub u0: Vector,
    pub stats: PlanStats,
}

/// Network prediction (or zero) corrected by the active-set solver until
/// `criterion` holds.
pub fn explicit_implicit_plan(
    qp: &BatchQp,
    x: &Vector,
    model: Option<&MlpModel>,
    criterion: Termination,
    opts: &SolverOptions,
) -> Result<PlanResult> {
    let z_init = match model {
        Some(m) => m.forward(x)?,
        None => Vector::zeros(qp.dims.d_p),
    };
    let sol = active_set::solve(qp, x, &z_init, &[], criterion, opts)?;
    let certified = match sol.stats.eta {
        Some(eta) => eta <= qp.state_cost(x).max(opts.certify.eps_abs),
        None => false,
    };
    let u0 = qp.first_input(&sol.point.z);
    Ok(PlanResult {
        u0,
        stats: PlanStats {
            nn_used: model.is_some(),
            phase1_iters: sol.stats.phase1_iters,
            phase2_iters: sol.stats.phase2_iters,
            eta: sol.stats.eta,
            certified: certified || sol.stats.status == SolveStatus::Optimal,
        },
        z: sol.point.z,
    })
}

/// The LQR controller used inside the terminal set.
#[derive(Debug, Clone)]
pub struct Lqr {
    pub k: Mat,
    pub p: Mat,
}

impl Lqr {
    pub fn from_spec(spec: &LtiProblemSpec) -> Result<Self> {
        let k = lqr_gain(&spec.model.a, &spec.model.b, &spec.r, &spec.p)?;
        Ok(Self { k, p: spec.p.clone() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub steps: Vec<PlanStats>,
    pub entered_xf_at: Option<usize>,
    /// Stage costs before the terminal set plus `x'Px` at entry.
    pub j_cl: f64,
    /// Largest state or input constraint violation seen.
    pub max_violation: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn closed_loop_simulate(
    spec: &LtiProblemSpec,
    qp: &BatchQp,
    lqr: &Lqr,
    x0: &Vector,
    model: Option<&MlpModel>,
    criterion: Termination,
    opts: &SolverOptions,
    max_steps: usize,
) -> Result<Trajectory> {
    let mut x = x0.clone();
    let mut traj = Trajectory {
        states: vec![x.clone()],
        inputs: Vec::new(),
        steps: Vec::new(),
        entered_xf_at: None,
        j_cl: 0.0,
        max_violation: spec.x_set.max_violation(&x).max(0.0),
    };
    for t in 0..=max_steps {
        if spec.xf_set.contains(&x, 0.0) {
            traj.entered_xf_at = Some(t);
            traj.j_cl += x.dot(&(&lqr.p * &x));
            return Ok(traj);
        }
        if t == max_steps {
            break;
        }
        let plan = match explicit_implicit_plan(qp, &x, model, criterion, opts) {
            Ok(p) => p,
            Err(Error::Infeasible) if t == 0 => return Err(Error::Infeasible),
            Err(Error::Infeasible) => return Err(Error::RecursiveFeasibility { step: t }),
            Err(e) => return Err(e),
        };
        let u = plan.u0;
        traj.j_cl += x.dot(&(&spec.q * &x)) + u.dot(&(&spec.r * &u));
        traj.max_violation = traj.max_violation.max(spec.u_set.max_violation(&u));
        x = spec.model.step(&x, &u);
        traj.max_violation = traj.max_violation.max(spec.x_set.max_violation(&x));
        traj.states.push(x.clone());
        traj.inputs.push(u);
        traj.steps.push(plan.stats);
    }
    Ok(traj)
}

/// How the solver is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitMode {
    Cold,
    Network,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Cold => "cold",
            InitMode::Network => "nn",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopRow {
    pub init: InitMode,
    pub criterion: Termination,
    pub records: usize,
    pub mean_iters: f64,
    pub worst_iters: usize,
    pub mean_sigma: f64,
    pub worst_sigma: f64,
    /// Records with `|J*| <= 1e-9`, left out of the σ statistics.
    pub excluded: usize,
    pub failures: usize,
    pub iterations: Vec<usize>,
}

/// Iteration counts and relative suboptimality `σ_ol = (J - J*)/J*` per
/// initialization and criterion over the test records.
pub fn open_loop_eval(
    qp: &BatchQp,
    records: &[SampleRecord],
    model: Option<&MlpModel>,
    criteria: &[Termination],
    opts: &SolverOptions,
) -> Vec<OpenLoopRow> {
    let mut modes = vec![InitMode::Cold];
    if model.is_some() {
        modes.push(InitMode::Network);
    }
    let mut rows = Vec::new();
    for &criterion in criteria {
        for &init in &modes {
            let m = if init == InitMode::Network { model } else { None };
            let results: Vec<Option<(usize, Option<f64>)>> = records
                .par_iter()
                .map(|r| {
                    let plan = explicit_implicit_plan(qp, &r.x, m, criterion, opts).ok()?;
                    let j_star = qp.objective(&r.z, &r.x);
                    let sigma = if j_star.abs() <= 1e-9 {
                        None
                    } else {
                        Some((qp.objective(&plan.z, &r.x) - j_star) / j_star)
                    };
                    Some((plan.stats.total_iters(), sigma))
                })
                .collect();
            let mut row = OpenLoopRow {
                init,
                criterion,
                records: records.len(),
                mean_iters: 0.0,
                worst_iters: 0,
                mean_sigma: 0.0,
                worst_sigma: 0.0,
                excluded: 0,
                failures: 0,
                iterations: Vec::with_capacity(records.len()),
            };
            let mut sig_sum = 0.0;
            let mut sig_n = 0usize;
            for res in results {
                match res {
                    None => row.failures += 1,
                    Some((it, sigma)) => {
                        row.iterations.push(it);
                        row.worst_iters = row.worst_iters.max(it);
                        match sigma {
                            None => row.excluded += 1,
                            Some(s) => {
                                sig_sum += s;
                                sig_n += 1;
                                row.worst_sigma = row.worst_sigma.max(s);
                            }
                        }
                    }
                }
            }
            if !row.iterations.is_empty() {
                row.mean_iters = row.iterations.iter().sum::<usize>() as f64 / row.iterations.len() as f64;
            }
            if sig_n > 0 {
                row.mean_sigma = sig_sum / sig_n as f64;
            }
            rows.push(row);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRow {
    pub init: InitMode,
    pub criterion: Termination,
    pub trajectories: usize,
    pub mean_iters_first: f64,
    pub worst_iters_first: usize,
    pub mean_iters_rest: f64,
    pub worst_iters_rest: usize,
    pub mean_sigma: f64,
    pub worst_sigma: f64,
    pub reached_xf: usize,
    pub failures: usize,
    pub max_violation: f64,
    pub wall_seconds: f64,
    /// Per-trajectory closed-loop cost (NaN for failed runs).
    pub costs: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_method(
    spec: &LtiProblemSpec,
    qp: &BatchQp,
    lqr: &Lqr,
    x0s: &[Vector],
    model: Option<&MlpModel>,
    criterion: Termination,
    opts: &SolverOptions,
    max_steps: usize,
) -> Vec<Result<Trajectory>> {
    x0s.par_iter()
        .map(|x0| closed_loop_simulate(spec, qp, lqr, x0, model, criterion, opts, max_steps))
        .collect()
}

/// Closed-loop statistics per method, with `σ_cl` measured against the
/// cold-start optimal controller on the same initial states.
pub fn closed_loop_eval(
    spec: &LtiProblemSpec,
    qp: &BatchQp,
    model: Option<&MlpModel>,
    methods: &[(InitMode, Termination)],
    x0s: &[Vector],
    opts: &SolverOptions,
    max_steps: usize,
) -> Result<Vec<ClosedLoopRow>> {
    if methods.is_empty() || x0s.is_empty() {
        return Ok(Vec::new());
    }
    let lqr = Lqr::from_spec(spec)?;
    let reference: Vec<f64> = run_method(spec, qp, &lqr, x0s, None, Termination::Optimal, opts, max_steps)
        .into_iter()
        .map(|t| t.map(|t| t.j_cl).unwrap_or(f64::NAN))
        .collect();
    let mut rows = Vec::new();
    for &(init, criterion) in methods {
        if init == InitMode::Network && model.is_none() {
            return Err(Error::Config("network initialization requested without a model".into()));
        }
        let m = if init == InitMode::Network { model } else { None };
        let start = Instant::now();
        let trajs = run_method(spec, qp, &lqr, x0s, m, criterion, opts, max_steps);
        let wall_seconds = start.elapsed().as_secs_f64();
        let mut row = ClosedLoopRow {
            init,
            criterion,
            trajectories: x0s.len(),
            mean_iters_first: 0.0,
            worst_iters_first: 0,
            mean_iters_rest: 0.0,
            worst_iters_rest: 0,
            mean_sigma: 0.0,
            worst_sigma: 0.0,
            reached_xf: 0,
            failures: 0,
            max_violation: 0.0,
            wall_seconds,
            costs: Vec::with_capacity(x0s.len()),
        };
        let (mut first_sum, mut first_n, mut rest_sum, mut rest_n) = (0usize, 0usize, 0usize, 0usize);
        let (mut sig_sum, mut sig_n) = (0.0, 0usize);
        for (t, j_ref) in trajs.iter().zip(&reference) {
            let t = match t {
                Ok(t) => t,
                Err(_) => {
                    row.failures += 1;
                    row.costs.push(f64::NAN);
                    continue;
                }
            };
            row.costs.push(t.j_cl);
            row.max_violation = row.max_violation.max(t.max_violation);
            if t.entered_xf_at.is_some() {
                row.reached_xf += 1;
            }
            for (k, s) in t.steps.iter().enumerate() {
                let it = s.total_iters();
                if k == 0 {
                    first_sum += it;
                    first_n += 1;
                    row.worst_iters_first = row.worst_iters_first.max(it);
                } else {
                    rest_sum += it;
                    rest_n += 1;
                    row.worst_iters_rest = row.worst_iters_rest.max(it);
                }
            }
            if j_ref.is_finite() && *j_ref > 1e-12 {
                let s = (t.j_cl - j_ref) / j_ref;
                sig_sum += s;
                sig_n += 1;
                row.worst_sigma = row.worst_sigma.max(s);
            }
        }
        if first_n > 0 {
            row.mean_iters_first = first_sum as f64 / first_n as f64;
        }
        if rest_n > 0 {
            row.mean_iters_rest = rest_sum as f64 / rest_n as f64;
        }
        if sig_n > 0 {
            row.mean_sigma = sig_sum / sig_n as f64;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Whether every state and input of the trajectory meets its constraints.
pub fn trajectory_feasible(traj: &Trajectory) -> bool {
    traj.max_violation <= FEAS_TOL
}
