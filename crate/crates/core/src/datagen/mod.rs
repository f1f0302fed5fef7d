//! Dataset generation by hot-started random walks toward Sobol goals, and a
//! rejection-sampling estimate of the feasible fraction of the state box.

pub mod io;
pub mod sobol;

use std::collections::HashSet;

use rand::Rng;

use crate::active_set::{self, phase1, SlackMode, SolverOptions, Termination};
use crate::batch_qp::BatchQp;
use crate::error::{Error, Result};
use crate::linalg::{vec_norm2, Vector};
use crate::polytope::Polytope;
use crate::systems::LtiProblemSpec;

pub use io::{read_dataset, write_dataset, DatasetHeader, Manifest};
pub use sobol::{sobol, Sobol};

/// One optimal primal-dual tuple and the working set that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub x: Vector,
    pub z: Vector,
    pub nu: Vector,
    pub lambda: Vector,
    /// Final working set of the solve, used to hot start neighbours.
    pub aux: Vec<u32>,
}

impl SampleRecord {
    pub fn working_set(&self) -> Vec<usize> {
        self.aux.iter().map(|&i| i as usize).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub n_train: usize,
    pub n_buffer: usize,
    pub n_test: usize,
    pub step_d: f64,
    pub seed: u64,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_d > 0.0 && self.step_d.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step_d)));
        }
        Ok(())
    }
}

/// Counters collected while walking.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WalkStats {
    pub probes: usize,
    pub infeasible_stops: usize,
    pub iter_limit_stops: usize,
    pub empty_walks: usize,
    pub solver_iterations: usize,
}

/// 1/20 of the shortest edge of the state box.
pub fn default_step(x_set: &Polytope) -> Result<f64> {
    let (lo, hi) = bounding_box(x_set)?;
    let shortest = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
    Ok(shortest / 20.0)
}

/// Axis-aligned bounding box (exact for box polytopes).
pub fn bounding_box(set: &Polytope) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(b) = set.as_box() {
        return Ok(b);
    }
    let n = set.dim();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        hi[i] = set.support(&e)?;
        e[i] = -1.0;
        lo[i] = -set.support(&e)?;
    }
    Ok((lo, hi))
}

fn record_from(x: Vector, sol: active_set::Solution) -> SampleRecord {
    SampleRecord {
        x,
        z: sol.point.z,
        nu: sol.point.nu,
        lambda: sol.point.lambda,
        aux: sol.working_set.iter().map(|&i| i as u32).collect(),
    }
}

/// Optimal record at `x` from a cold start.
pub fn solve_record(qp: &BatchQp, x: &Vector, opts: &SolverOptions) -> Result<SampleRecord> {
    let sol = active_set::solve(qp, x, &Vector::zeros(qp.dims.d_p), &[], Termination::Optimal, opts)?;
    Ok(record_from(x.clone(), sol))
}

/// Walks from `seed.x` toward `goal` in steps of `step_d` (the last step is
/// clamped to the goal), solving each probe hot-started from the previous
/// record, until the goal or the first infeasible probe.
pub fn line_solve(
    seed: &SampleRecord,
    goal: &Vector,
    step_d: f64,
    qp: &BatchQp,
    opts: &SolverOptions,
    stats: &mut WalkStats,
) -> Result<Vec<SampleRecord>> {
    let delta = goal - &seed.x;
    let dist = vec_norm2(delta.as_slice());
    let mut out: Vec<SampleRecord> = Vec::new();
    if dist == 0.0 {
        return Ok(out);
    }
    let dir = delta / dist;
    let steps = (dist / step_d).ceil() as usize;
    for i in 1..=steps {
        let t = (i as f64 * step_d).min(dist);
        let x = if i == steps { goal.clone() } else { &seed.x + &dir * t };
        let prev = out.last().unwrap_or(seed);
        stats.probes += 1;
        match active_set::solve(qp, &x, &prev.z, &prev.working_set(), Termination::Optimal, opts) {
            Ok(sol) => {
                stats.solver_iterations += sol.stats.total_iters();
                out.push(record_from(x, sol));
            }
            Err(Error::Infeasible) => {
                stats.infeasible_stops += 1;
                break;
            }
            Err(Error::IterLimit { .. }) => {
                log::warn!("iteration limit at probe {i} of a walk; stopping the walk");
                stats.iter_limit_stops += 1;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// For each goal, walks from a uniformly drawn seed and adds the walk's last
/// record to the seed pool.
pub fn random_walk<R: Rng>(
    goals: &[Vector],
    seeds: &mut Vec<SampleRecord>,
    step_d: f64,
    qp: &BatchQp,
    opts: &SolverOptions,
    rng: &mut R,
    stats: &mut WalkStats,
) -> Result<Vec<SampleRecord>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("random walk needs at least one seed".into()));
    }
    let mut records = Vec::new();
    for goal in goals {
        let pick = rng.gen_range(0..seeds.len());
        let walk = line_solve(&seeds[pick], goal, step_d, qp, opts, stats)?;
        match walk.last() {
            Some(last) => seeds.push(last.clone()),
            None => {
                stats.empty_walks += 1;
                log::debug!("empty walk toward a goal; seed pool unchanged");
            }
        }
        records.extend(walk);
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    pub buffer_count: usize,
    pub stats: WalkStats,
    pub manifest: Manifest,
}

/// Train, buffer and test stages chained through their seed pools. Goals
/// are contiguous blocks of one Sobol stream over the state box.
pub fn generate_data(spec: &LtiProblemSpec, qp: &BatchQp, config: &WalkConfig, opts: &SolverOptions) -> Result<GeneratedData> {
    use rand::SeedableRng;
    config.validate()?;
    let n = spec.n();
    let s0 = match solve_record(qp, &Vector::zeros(n), opts) {
        Ok(r) => r,
        Err(Error::Infeasible) => return Err(Error::Config("the origin is not a feasible initial state".into())),
        Err(e) => return Err(e),
    };
    let (lo, hi) = bounding_box(&spec.x_set)?;
    let total = config.n_train + config.n_buffer + config.n_test;
    let goals: Vec<Vector> = sobol(n, total, &lo, &hi)?.into_iter().map(Vector::from_vec).collect();
    let (g_train, rest) = goals.split_at(config.n_train);
    let (g_buffer, g_test) = rest.split_at(config.n_buffer);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = WalkStats::default();

    let mut seeds_train = vec![s0.clone()];
    let mut train = vec![s0];
    train.extend(random_walk(g_train, &mut seeds_train, config.step_d, qp, opts, &mut rng, &mut stats)?);

    let mut seeds_buffer = seeds_train.clone();
    let buffer = random_walk(g_buffer, &mut seeds_buffer, config.step_d, qp, opts, &mut rng, &mut stats)?;

    let mut seeds_test: Vec<SampleRecord> = seeds_buffer[seeds_train.len()..].to_vec();
    if seeds_test.is_empty() {
        log::warn!("buffer stage added no seeds; test walks start from the train seed pool");
        seeds_test = seeds_buffer;
    }
    let mut test = random_walk(g_test, &mut seeds_test, config.step_d, qp, opts, &mut rng, &mut stats)?;
    let train_keys: HashSet<Vec<u64>> = train.iter().map(|r| state_key(&r.x)).collect();
    test.retain(|r| !train_keys.contains(&state_key(&r.x)));

    let manifest = Manifest {
        spec_hash: crate::formats::spec_hash(spec),
        seed: config.seed,
        step_d: config.step_d,
        goals: [config.n_train, config.n_buffer, config.n_test],
        train_count: train.len(),
        buffer_count: buffer.len(),
        test_count: test.len(),
        generated_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    Ok(GeneratedData { train, test, buffer_count: buffer.len(), stats, manifest })
}

fn state_key(x: &Vector) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Feasible fraction with its binomial 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionEstimate {
    pub samples: usize,
    pub feasible: usize,
    pub fraction: f64,
    pub half_width: f64,
}

/// Whether the QP at `x` has a feasible point, with Phase I started from
/// `z_init`.
pub fn is_feasible_from(qp: &BatchQp, x: &Vector, z_init: &Vector, opts: &SolverOptions) -> Result<bool> {
    match phase1(qp, x, z_init, opts) {
        Ok(_) => Ok(true),
        Err(Error::Infeasible) => Ok(false),
        Err(e) => Err(e),
    }
}

pub fn is_feasible(qp: &BatchQp, x: &Vector, opts: &SolverOptions) -> Result<bool> {
    is_feasible_from(qp, x, &Vector::zeros(qp.dims.d_p), opts)
}

/// Plan from the LQR law `u = -Kx`, with inputs clipped to the input box
/// when the input set is a box.
pub fn lqr_rollout(spec: &LtiProblemSpec, qp: &BatchQp, k: &crate::linalg::Mat, x: &Vector) -> Vector {
    let bounds = spec.u_set.as_box();
    let mut states = Vec::with_capacity(spec.horizon);
    let mut inputs = Vec::with_capacity(spec.horizon);
    let mut xk = x.clone();
    for _ in 0..spec.horizon {
        let mut u = -(k * &xk);
        if let Some((lo, hi)) = &bounds {
            for (i, v) in u.iter_mut().enumerate() {
                *v = v.clamp(lo[i], hi[i]);
            }
        }
        xk = spec.model.step(&xk, &u);
        states.push(xk.clone());
        inputs.push(u);
    }
    qp.stack(&states, &inputs)
}

/// Samples states uniformly in the state constraint set and counts the
/// feasible ones. Boxes are sampled exactly; other polytopes by hit-and-run.
pub fn rejection_rate<R: Rng>(
    spec: &LtiProblemSpec,
    qp: &BatchQp,
    sample_count: usize,
    rng: &mut R,
    opts: &SolverOptions,
) -> Result<RejectionEstimate> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let n = spec.n();
    let samples: Vec<Vector> = match spec.x_set.as_box() {
        Some((lo, hi)) => (0..sample_count)
            .map(|_| Vector::from_fn(n, |i, _| rng.gen_range(lo[i]..hi[i])))
            .collect(),
        None => spec.x_set.hit_and_run(&Vector::zeros(n), sample_count, 10 * n, n.max(1), rng),
    };
    let k = spec.lqr()?;
    let oracle = SolverOptions { phase1_slack: SlackMode::Shared, ..*opts };
    let mut feasible = 0;
    for x in &samples {
        if is_feasible_from(qp, x, &lqr_rollout(spec, qp, &k, x), &oracle)? {
            feasible += 1;
        }
    }
    let fraction = feasible as f64 / sample_count as f64;
    let half_width = 1.96 * (fraction * (1.0 - fraction) / sample_count as f64).sqrt();
    Ok(RejectionEstimate { samples: sample_count, feasible, fraction, half_width })
}
