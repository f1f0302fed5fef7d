//! Linear time-invariant models, discretization, the Riccati terminal cost,
//! the LQR gain, the maximal positively invariant terminal set, and the four
//! benchmark problems.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{self, expm, kron, lower_shift, norm_inf, Mat, Vector};
use crate::polytope::{Polytope, REDUNDANCY_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLti {
    pub a: Mat,
    pub b: Mat,
}

impl ContinuousLti {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A_c is {}x{}, B_c is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLti {
    pub a: Mat,
    pub b: Mat,
    /// Sampling time the model was obtained with (1 for natively discrete models).
    pub tau: f64,
}

impl DiscreteLti {
    pub fn new(a: Mat, b: Mat, tau: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, tau })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }
}

/// Finite-horizon constrained LQ problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiProblemSpec {
    pub name: String,
    pub model: DiscreteLti,
    pub x_set: Polytope,
    pub u_set: Polytope,
    pub xf_set: Polytope,
    pub q: Mat,
    pub r: Mat,
    pub p: Mat,
    pub horizon: usize,
}

impl LtiProblemSpec {
    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn m(&self) -> usize {
        self.model.m()
    }

    /// Checks dimensions, symmetry, definiteness, and positivity of the bounds.
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        let dims_ok = self.x_set.dim() == n
            && self.xf_set.dim() == n
            && self.u_set.dim() == m
            && self.q.shape() == (n, n)
            && self.p.shape() == (n, n)
            && self.r.shape() == (m, m);
        if !dims_ok {
            return Err(Error::DimensionMismatch(format!("problem '{}' has inconsistent dimensions", self.name)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        for (mat, label) in [(&self.q, "Q"), (&self.r, "R"), (&self.p, "P")] {
            if !linalg::is_symmetric(mat, 1e-12) {
                return Err(Error::InvalidArgument(format!("{label} is not symmetric")));
            }
            linalg::cholesky(mat, label)?;
        }
        for (set, label) in [(&self.x_set, "X"), (&self.u_set, "U"), (&self.xf_set, "X_f")] {
            if set.b.iter().any(|b| *b <= 0.0) {
                return Err(Error::InvalidArgument(format!("{label} bounds must be strictly positive")));
            }
        }
        Ok(())
    }

    /// LQR gain for the problem's model and weights.
    pub fn lqr(&self) -> Result<Mat> {
        let p_inf = solve_dare(&self.model.a, &self.model.b, &self.q, &self.r)?;
        lqr_gain(&self.model.a, &self.model.b, &self.r, &p_inf)
    }
}

pub fn discretize_euler(sys: &ContinuousLti, tau: f64) -> Result<DiscreteLti> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {tau}")));
    }
    let n = sys.a.nrows();
    DiscreteLti::new(Mat::identity(n, n) + &sys.a * tau, &sys.b * tau, tau)
}

/// Triangle-hold (first-order hold) discretization.
///
/// With `E = exp([[A τ, B τ, 0], [0, 0, I], [0, 0, 0]])` and blocks
/// `Φ = E11`, `Γ1 = E12`, `Γ2 = E13`, the returned model is
/// `A = Φ`, `B = Γ1 + Φ Γ2 - Γ2`.
pub fn discretize_foh(sys: &ContinuousLti, tau: f64) -> Result<DiscreteLti> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {tau}")));
    }
    let n = sys.a.nrows();
    let m = sys.b.ncols();
    let size = n + 2 * m;
    let mut aug = Mat::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&sys.a * tau));
    aug.view_mut((0, n), (n, m)).copy_from(&(&sys.b * tau));
    aug.view_mut((n, n + m), (m, m)).copy_from(&Mat::identity(m, m));
    let e = expm(&aug);
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix exponential overflowed".into()));
    }
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma1 = e.view((0, n), (n, m)).into_owned();
    let gamma2 = e.view((0, n + m), (n, m)).into_owned();
    let b = &gamma1 + &phi * &gamma2 - &gamma2;
    DiscreteLti::new(phi, b, tau)
}

const DARE_MAX_ITERS: usize = 10_000;

/// Stabilizing solution of the discrete algebraic Riccati equation by
/// fixed-point iteration of the Riccati map from `P = Q`.
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITERS {
        let next = riccati_map(a, b, q, r, &p)?;
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        let delta = norm_inf(&(&next - &p));
        p = next;
        if delta <= 1e-12 * (1.0 + norm_inf(&p)) {
            linalg::cholesky(&p, "P_inf")?;
            return Ok(p);
        }
    }
    Err(Error::RiccatiNonConvergence { iterations: DARE_MAX_ITERS })
}

/// `A'PA + Q - A'PB (B'PB + R)^-1 B'PA`, symmetrized.
pub fn riccati_map(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let pa = p * a;
    let pb = p * b;
    let s = b.transpose() * &pb + r;
    let chol = linalg::cholesky(&s, "B'PB + R")?;
    let k = chol.solve(&(b.transpose() * &pa));
    let next = a.transpose() * &pa + q - (a.transpose() * &pb) * k;
    Ok((&next + next.transpose()) * 0.5)
}

pub fn dare_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<f64> {
    Ok(norm_inf(&(riccati_map(a, b, q, r, p)? - p)))
}

/// `K = (B'PB + R)^-1 B'PA`, for the regulator `u = -K x`.
pub fn lqr_gain(a: &Mat, b: &Mat, r: &Mat, p_inf: &Mat) -> Result<Mat> {
    let s = b.transpose() * p_inf * b + r;
    let chol = linalg::cholesky(&s, "B'PB + R")?;
    Ok(chol.solve(&(b.transpose() * p_inf * a)))
}

const MAX_SWEEPS: usize = 500;

/// Maximal positively invariant subset of `s` for `x+ = A_cl x`.
///
/// Each sweep maps the rows added in the previous sweep through `A_cl` and
/// keeps the images that cut the current set; the iteration stops when a
/// sweep adds nothing. The result has unit-norm rows and no redundant rows.
pub fn max_pos_invariant_set(a_cl: &Mat, s: &Polytope) -> Result<Polytope> {
    if !a_cl.is_square() || a_cl.nrows() != s.dim() {
        return Err(Error::DimensionMismatch("A_cl does not match the polytope dimension".into()));
    }
    if s.b.iter().any(|b| *b <= 0.0) {
        return Err(Error::InvalidArgument("the origin must be strictly inside the constraint set".into()));
    }
    let mut omega = s.remove_redundant()?;
    let mut frontier = omega.clone();
    for _ in 0..MAX_SWEEPS {
        let candidates = Polytope::new(&frontier.a * a_cl, frontier.b.clone())?.normalized();
        let mut added = Vec::new();
        for i in 0..candidates.rows() {
            let row: Vec<f64> = candidates.a.row(i).iter().copied().collect();
            if row.iter().all(|v| v.abs() == 0.0) {
                continue;
            }
            let support = omega.support(&row)?;
            if support > candidates.b[i] + REDUNDANCY_TOL {
                let single = candidates.select_rows(&(0..candidates.rows()).map(|j| j == i).collect::<Vec<_>>());
                omega = omega.intersect(&single);
                added.push(i);
            }
        }
        if added.is_empty() {
            return omega.remove_redundant();
        }
        let mask: Vec<bool> = (0..candidates.rows()).map(|j| added.contains(&j)).collect();
        frontier = candidates.select_rows(&mask);
    }
    Err(Error::InvariantSetNonConvergence { sweeps: MAX_SWEEPS })
}

/// LQR terminal ingredients: `(P_inf, K, O_inf)`.
pub fn lqr_terminal(model: &DiscreteLti, x_set: &Polytope, u_set: &Polytope, q: &Mat, r: &Mat) -> Result<(Mat, Mat, Polytope)> {
    let p_inf = solve_dare(&model.a, &model.b, q, r)?;
    let k = lqr_gain(&model.a, &model.b, r, &p_inf)?;
    let a_cl = &model.a - &model.b * &k;
    // {x : A_x x <= b_x, A_u (-K x) <= b_u}
    let input_rows = Polytope::new(-(&u_set.a * &k), u_set.b.clone())?;
    let s = x_set.intersect(&input_rows);
    let xf = max_pos_invariant_set(&a_cl, &s)?;
    Ok((p_inf, k, xf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    /// Double integrator.
    Sys1,
    /// Quadrotor flat-output jerk chain.
    Sys2,
    /// Six oscillating masses.
    Sys3,
    /// Eighteen oscillating masses.
    Sys4,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [Benchmark::Sys1, Benchmark::Sys2, Benchmark::Sys3, Benchmark::Sys4];

    pub fn index(self) -> u8 {
        match self {
            Benchmark::Sys1 => 1,
            Benchmark::Sys2 => 2,
            Benchmark::Sys3 => 3,
            Benchmark::Sys4 => 4,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|b| b.index() == i)
    }

    /// Layer widths of the planner network used for this benchmark.
    pub fn default_widths(self) -> Vec<usize> {
        match self {
            Benchmark::Sys1 => vec![2, 32, 32, 30],
            Benchmark::Sys2 => vec![12, 32, 32, 300],
            Benchmark::Sys3 => vec![12, 32, 64, 128, 256, 450],
            Benchmark::Sys4 => vec![36, 128, 128, 256, 256, 512, 512, 2250],
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sys{}", self.index())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix("sys").unwrap_or(&t);
        t.parse::<u8>()
            .ok()
            .and_then(Benchmark::from_index)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown benchmark '{s}' (expected 1-4)")))
    }
}

/// Continuous-time model of the quadrotor flat outputs: position, velocity,
/// acceleration, and jerk chains in three axes, driven through the jerk
/// derivative.
pub fn quadrotor_continuous() -> ContinuousLti {
    // Each block integrates the next one, so the coupling sits above the
    // block diagonal: d/dt pos = vel, ..., d/dt jerk = u.
    let chain = lower_shift(4).transpose();
    let a = kron(&chain, &Mat::identity(3, 3));
    let b = kron(&linalg::basis_column(4, 3), &Mat::identity(3, 3));
    ContinuousLti { a, b }
}

/// Force distribution of the six-mass chain: three actuators acting on
/// mass pairs (1,2), (3,5), and (4,6).
pub fn oscillating_force_matrix() -> Mat {
    let mut f = Mat::zeros(6, 3);
    f[(0, 0)] = 1.0;
    f[(1, 0)] = -1.0;
    f[(2, 1)] = 1.0;
    f[(3, 2)] = 1.0;
    f[(4, 1)] = -1.0;
    f[(5, 2)] = 1.0;
    f
}

/// Chain of `masses` unit masses with spring constant `c` and damping `d`.
pub fn oscillating_masses_continuous(masses: usize, force: &Mat) -> ContinuousLti {
    let (c, d) = (1.0, 0.1);
    let (a_coef, b_coef) = (-2.0 * c, -2.0);
    let l = lower_shift(masses);
    let lt = l.transpose();
    let eye = Mat::identity(masses, masses);
    let stiffness = &eye * a_coef + &l * c + &lt * c;
    let damping = &eye * b_coef + &l * d + &lt * d;
    let mut a = Mat::zeros(2 * masses, 2 * masses);
    a.view_mut((0, masses), (masses, masses)).copy_from(&eye);
    a.view_mut((masses, 0), (masses, masses)).copy_from(&stiffness);
    a.view_mut((masses, masses), (masses, masses)).copy_from(&damping);
    let mut b = Mat::zeros(2 * masses, force.ncols());
    b.view_mut((masses, 0), (masses, force.ncols())).copy_from(force);
    ContinuousLti { a, b }
}

/// Assembles one of the four benchmark problems, including the LQR terminal
/// cost and the maximal positively invariant terminal set.
pub fn build_benchmark(id: Benchmark) -> Result<LtiProblemSpec> {
    let (model, x_bounds, u_bounds, horizon) = match id {
        Benchmark::Sys1 => {
            let a = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
            let b = Mat::from_row_slice(2, 1, &[0.5, 0.1]);
            (DiscreteLti::new(a, b, 1.0)?, vec![5.0, 1.0], vec![2.0], 10)
        }
        Benchmark::Sys2 => {
            let model = discretize_euler(&quadrotor_continuous(), 0.1)?;
            let mut xb = Vec::with_capacity(12);
            for bound in [10.0, 5.0, 3.0, 1.0] {
                xb.extend_from_slice(&[bound; 3]);
            }
            (model, xb, vec![1.0; 3], 20)
        }
        Benchmark::Sys3 => {
            let sys = oscillating_masses_continuous(6, &oscillating_force_matrix());
            (discretize_foh(&sys, 0.5)?, vec![4.0; 12], vec![0.5; 3], 30)
        }
        Benchmark::Sys4 => {
            let force = kron(&Mat::identity(3, 3), &oscillating_force_matrix());
            let sys = oscillating_masses_continuous(18, &force);
            (discretize_foh(&sys, 0.5)?, vec![4.0; 36], vec![0.5; 9], 50)
        }
    };
    let n = model.n();
    let m = model.m();
    let q = Mat::identity(n, n);
    let r = Mat::identity(m, m);
    let x_set = Polytope::symmetric_box(&x_bounds);
    let u_set = Polytope::symmetric_box(&u_bounds);
    let (p, _k, xf_set) = lqr_terminal(&model, &x_set, &u_set, &q, &r)?;
    let spec = LtiProblemSpec {
        name: id.to_string(),
        model,
        x_set,
        u_set,
        xf_set,
        q,
        r,
        p,
        horizon,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn euler_rejects_nonpositive_step() {
        let sys = ContinuousLti::new(Mat::zeros(1, 1), Mat::zeros(1, 1)).unwrap();
        assert!(discretize_euler(&sys, 0.0).is_err());
        assert!(discretize_foh(&sys, -1.0).is_err());
    }

    #[test]
    fn euler_zero_dynamics() {
        let b = Mat::from_row_slice(2, 1, &[1.0, -3.0]);
        let d = discretize_euler(&ContinuousLti::new(Mat::zeros(2, 2), b.clone()).unwrap(), 0.1).unwrap();
        assert_eq!(d.a, Mat::identity(2, 2));
        assert_abs_diff_eq!(d.b, b * 0.1, epsilon = 1e-16);
    }

    #[test]
    fn euler_scalar() {
        let sys = ContinuousLti::new(Mat::from_element(1, 1, -1.0), Mat::from_element(1, 1, 1.0)).unwrap();
        let d = discretize_euler(&sys, 0.5).unwrap();
        assert_eq!(d.a[(0, 0)], 0.5);
        assert_eq!(d.b[(0, 0)], 0.5);
    }

    #[test]
    fn euler_quadrotor_chain() {
        let sys = quadrotor_continuous();
        let d = discretize_euler(&sys, 0.1).unwrap();
        let expected = Mat::identity(12, 12) + kron(&lower_shift(4).transpose(), &Mat::identity(3, 3)) * 0.1;
        assert_abs_diff_eq!(d.a, expected, epsilon = 1e-16);
    }

    #[test]
    fn foh_zero_dynamics_is_scaled_input() {
        let b = Mat::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.25]);
        let d = discretize_foh(&ContinuousLti::new(Mat::zeros(2, 2), b.clone()).unwrap(), 0.3).unwrap();
        assert_abs_diff_eq!(d.a, Mat::identity(2, 2), epsilon = 1e-15);
        assert_abs_diff_eq!(d.b, b * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn foh_small_step_limit() {
        let sys = oscillating_masses_continuous(6, &oscillating_force_matrix());
        let d = discretize_foh(&sys, 1e-8).unwrap();
        assert_abs_diff_eq!(d.a, Mat::identity(12, 12), epsilon = 1e-6);
        assert!(d.b.amax() < 1e-6);
    }

    #[test]
    fn dare_zero_dynamics() {
        let q = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = solve_dare(&Mat::zeros(2, 2), &Mat::from_row_slice(2, 1, &[1.0, 0.0]), &q, &Mat::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(p, q, epsilon = 1e-14);
    }

    #[test]
    fn dare_scalar_golden_ratio() {
        let one = Mat::from_element(1, 1, 1.0);
        let p = solve_dare(&one, &one, &one, &one).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p[(0, 0)] - golden).abs() < 1e-10);
        let k = lqr_gain(&one, &one, &one, &p).unwrap();
        assert!((k[(0, 0)] - 1.0 / golden).abs() < 1e-10);
    }

    #[test]
    fn lqr_gain_zero_dynamics() {
        let p = Mat::identity(2, 2);
        let k = lqr_gain(&Mat::zeros(2, 2), &Mat::from_row_slice(2, 1, &[1.0, 1.0]), &Mat::identity(1, 1), &p).unwrap();
        assert_eq!(k, Mat::zeros(1, 2));
    }

    #[test]
    fn dare_reports_unstabilizable_pair() {
        // unstable mode that the input cannot reach
        let a = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = solve_dare(&a, &b, &Mat::identity(2, 2), &Mat::identity(1, 1)).unwrap_err();
        assert!(matches!(err, Error::RiccatiNonConvergence { .. } | Error::NotPositiveDefinite(_)));
    }

    #[test]
    fn invariant_set_of_zero_map_is_constraint_set() {
        let s = Polytope::new(
            Mat::from_row_slice(3, 2, &[1.0, 1.0, -2.0, 0.0, 0.0, -1.0]),
            Vector::from_vec(vec![1.0, 2.0, 3.0]),
        )
        .unwrap();
        let omega = max_pos_invariant_set(&Mat::zeros(2, 2), &s).unwrap();
        let expected = s.normalized();
        assert_abs_diff_eq!(omega.a, expected.a, epsilon = 1e-15);
        assert_abs_diff_eq!(omega.b, expected.b, epsilon = 1e-15);
    }

    #[test]
    fn invariant_set_of_scalar_contraction() {
        let s = Polytope::symmetric_box(&[1.0]);
        let omega = max_pos_invariant_set(&Mat::from_element(1, 1, 0.5), &s).unwrap();
        assert_eq!(omega.rows(), 2);
        assert_abs_diff_eq!(omega.b, Vector::from_vec(vec![1.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn invariant_set_cuts_rotating_dynamics() {
        // A rotation by 45 degrees scaled by 0.9 makes the square's corners
        // leave the square, so the invariant set needs extra facets.
        let (c, s) = (std::f64::consts::FRAC_PI_4.cos() * 0.9, std::f64::consts::FRAC_PI_4.sin() * 0.9);
        let a = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
        let omega = max_pos_invariant_set(&a, &Polytope::symmetric_box(&[1.0, 1.0])).unwrap();
        assert!(omega.rows() > 4);
        for corner in [[1.0, 1.0], [-1.0, 1.0]] {
            assert!(!omega.contains(&Vector::from_vec(corner.to_vec()), 1e-9));
        }
    }

    #[test]
    fn benchmark_parsing() {
        assert_eq!("3".parse::<Benchmark>().unwrap(), Benchmark::Sys3);
        assert_eq!("sys1".parse::<Benchmark>().unwrap(), Benchmark::Sys1);
        assert!("5".parse::<Benchmark>().is_err());
    }

    // Reference rows from an independent computation: stack H A_cl^k for
    // k < 80, normalize, and drop rows whose LP support over the others stays
    // within 1e-9 of their bound.
    #[test]
    fn sys1_terminal_set_matches_reference() {
        let spec = build_benchmark(Benchmark::Sys1).unwrap();
        let reference: [([f64; 2], f64); 8] = [
            ([0.0, 1.0], 1.0),
            ([0.0, -1.0], 1.0),
            ([-0.37362866, -0.92757837], 1.02774022),
            ([0.37362866, 0.92757837], 1.02774022),
            ([-0.08837707, 0.99608709], 1.21549386),
            ([0.08837707, -0.99608709], 1.21549386),
            ([-0.15732866, 0.9875463], 1.48619301),
            ([0.15732866, -0.9875463], 1.48619301),
        ];
        let xf = &spec.xf_set;
        assert_eq!(xf.rows(), reference.len());
        for (row, b) in reference {
            let hit = (0..xf.rows()).any(|i| {
                (xf.a[(i, 0)] - row[0]).abs() < 1e-7 && (xf.a[(i, 1)] - row[1]).abs() < 1e-7 && (xf.b[i] - b).abs() < 1e-7
            });
            assert!(hit, "missing facet {row:?} <= {b}");
        }
    }
}
