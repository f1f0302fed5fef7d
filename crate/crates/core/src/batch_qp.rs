//! Condensed batch QP
//!
//! ```text
//!     minimize    z'Hz + x'Qx
//!     subject to  G_eq z  = E_eq x
//!                 G_in z <= w_in + E_in x
//! ```
//!
//! with `z = [x_1 .. x_N, u_0 .. u_{N-1}]`, together with the evaluations
//! used by the certificates (Lagrangian, dual function, duality gap).

use std::sync::OnceLock;

use nalgebra::{Cholesky, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{self, kron, lower_shift, vec_norm_inf, Mat, Vector};
use crate::systems::LtiProblemSpec;

/// Default absolute feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchDims {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub d_p: usize,
    pub d_eq: usize,
    pub d_in: usize,
}

/// One diagonal block of `H` with its Cholesky factor.
#[derive(Clone)]
struct HBlock {
    offset: usize,
    chol: Cholesky<f64, Dyn>,
    mat: Mat,
}

/// Equality-eliminated, whitened form of the QP used by the solver.
///
/// Every `z` satisfying the equalities is `z = zp_x x + zt w`, with
/// `zt' H zt = I`, so that `z'Hz = w'w + 2 c(x)'w + const`.
#[derive(Clone)]
pub struct ReducedForm {
    pub r: usize,
    /// `d_p × n`: particular solution of the equalities.
    pub zp_x: Mat,
    /// `d_p × r`: whitened null-space basis.
    pub zt: Mat,
    /// `r × d_in`: column `i` is the reduced image of inequality row `i`.
    pub ct_t: Mat,
    pub ct_norms: Vec<f64>,
    /// `d_in × n`: reduced right-hand side `d(x) = w_in + dx x`.
    pub dx: Mat,
    /// `r × n`: linear term `c(x) = cx x`.
    pub cx: Mat,
    /// `r × d_p`: maps `z - zp_x x` to the reduced coordinates.
    pub restore: Mat,
}

impl ReducedForm {
    pub fn rhs(&self, w_in: &Vector, x: &Vector) -> Vec<f64> {
        (w_in + &self.dx * x).iter().copied().collect()
    }

    pub fn linear_term(&self, x: &Vector) -> Vector {
        &self.cx * x
    }

    pub fn to_z(&self, x: &Vector, w: &[f64]) -> Vector {
        &self.zp_x * x + &self.zt * Vector::from_column_slice(w)
    }

    /// Reduced coordinates of the equality-consistent point closest (in the
    /// sense of the restore map) to `z`.
    pub fn to_w(&self, x: &Vector, z: &Vector) -> Vec<f64> {
        let w = &self.restore * (z - &self.zp_x * x);
        w.iter().copied().collect()
    }
}

#[derive(Clone)]
pub struct BatchQp {
    pub dims: BatchDims,
    pub h: Mat,
    pub qx: Mat,
    pub g_eq: Mat,
    pub e_eq: Mat,
    pub g_in: Mat,
    pub e_in: Mat,
    pub w_in: Vector,
    /// `½ H⁻¹ [G_eq; G_in]'`.
    pub h_inv_gt: Mat,
    pub g_in_norms: Vec<f64>,
    pub reduced: ReducedForm,
    h_blocks: Vec<HBlock>,
    k_chol: OnceLock<Cholesky<f64, Dyn>>,
}

impl std::fmt::Debug for BatchQp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchQp").field("dims", &self.dims).finish_non_exhaustive()
    }
}

/// Primal and dual variables of the batch QP.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub z: Vector,
    pub nu: Vector,
    pub lambda: Vector,
}

impl PrimalDualPoint {
    pub fn dual_feasible(&self) -> bool {
        self.lambda.iter().all(|l| *l >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Largest raw violation over equality residuals and inequality rows.
    pub max_violation: f64,
    /// Same with inequality violations divided by the row norms.
    pub max_scaled_violation: f64,
}

/// Assembles the batch QP of a problem spec.
pub fn assemble_batch(spec: &LtiProblemSpec) -> Result<BatchQp> {
    spec.validate()?;
    let (n, m, big_n) = (spec.n(), spec.m(), spec.horizon);
    let (a, b) = (&spec.model.a, &spec.model.b);
    let (c_x, c_u, c_f) = (spec.x_set.rows(), spec.u_set.rows(), spec.xf_set.rows());
    let d_p = big_n * (n + m);
    let d_eq = big_n * n;
    let d_in = big_n * c_x + c_f + big_n * c_u;

    let eye_n = Mat::identity(big_n, big_n);
    let mut g_eq = Mat::zeros(d_eq, d_p);
    g_eq.view_mut((0, 0), (d_eq, d_eq))
        .copy_from(&(Mat::identity(d_eq, d_eq) - kron(&lower_shift(big_n), a)));
    g_eq.view_mut((0, d_eq), (d_eq, big_n * m)).copy_from(&(-kron(&eye_n, b)));
    let e_eq = kron(&linalg::basis_column(big_n, 0), a);

    let mut g_in = Mat::zeros(d_in, d_p);
    let (ax, au, af) = (&spec.x_set.a, &spec.u_set.a, &spec.xf_set.a);
    // Rows 0..c_x constrain x_0 and have no z entries.
    for k in 1..big_n {
        g_in.view_mut((k * c_x, (k - 1) * n), (c_x, n)).copy_from(ax);
    }
    let f_row = big_n * c_x;
    g_in.view_mut((f_row, (big_n - 1) * n), (c_f, n)).copy_from(af);
    let u_row = f_row + c_f;
    for k in 0..big_n {
        g_in.view_mut((u_row + k * c_u, d_eq + k * m), (c_u, m)).copy_from(au);
    }
    let mut e_in = Mat::zeros(d_in, n);
    e_in.view_mut((0, 0), (c_x, n)).copy_from(&(-ax));
    let mut w_in = Vector::zeros(d_in);
    for k in 0..big_n {
        w_in.rows_mut(k * c_x, c_x).copy_from(&spec.x_set.b);
        w_in.rows_mut(u_row + k * c_u, c_u).copy_from(&spec.u_set.b);
    }
    w_in.rows_mut(f_row, c_f).copy_from(&spec.xf_set.b);

    let mut blocks = Vec::with_capacity(2 * big_n);
    for k in 0..big_n {
        let mat = if k + 1 == big_n { spec.p.clone() } else { spec.q.clone() };
        blocks.push((k * n, mat));
    }
    for k in 0..big_n {
        blocks.push((d_eq + k * m, spec.r.clone()));
    }
    let h_blocks = factor_blocks(blocks)?;
    let h = dense_from_blocks(&h_blocks, d_p);

    // Structured null space: x_{k+1} = A^{k+1} x + sum_{j<=k} A^{k-j} B u_j.
    let r = big_n * m;
    let mut powers = vec![Mat::identity(n, n)];
    for k in 1..=big_n {
        let next = a * &powers[k - 1];
        powers.push(next);
    }
    let mut zp_x = Mat::zeros(d_p, n);
    let mut z_basis = Mat::zeros(d_p, r);
    for k in 0..big_n {
        zp_x.view_mut((k * n, 0), (n, n)).copy_from(&powers[k + 1]);
        for j in 0..=k {
            z_basis.view_mut((k * n, j * m), (n, m)).copy_from(&(&powers[k - j] * b));
        }
    }
    z_basis.view_mut((d_eq, 0), (r, r)).copy_from(&Mat::identity(r, r));
    let mut left_inv = Mat::zeros(r, d_p);
    left_inv.view_mut((0, d_eq), (r, r)).copy_from(&Mat::identity(r, r));

    let dims = BatchDims { n, m, horizon: big_n, d_p, d_eq, d_in };
    BatchQp::build(dims, h, h_blocks, spec.q.clone(), g_eq, e_eq, g_in, e_in, w_in, zp_x, z_basis, left_inv)
}

fn factor_blocks(blocks: Vec<(usize, Mat)>) -> Result<Vec<HBlock>> {
    blocks
        .into_iter()
        .map(|(offset, mat)| {
            let chol = linalg::cholesky(&mat, "H")?;
            Ok(HBlock { offset, chol, mat })
        })
        .collect()
}

fn dense_from_blocks(blocks: &[HBlock], d_p: usize) -> Mat {
    let mut h = Mat::zeros(d_p, d_p);
    for blk in blocks {
        let s = blk.mat.nrows();
        h.view_mut((blk.offset, blk.offset), (s, s)).copy_from(&blk.mat);
    }
    h
}

impl BatchQp {
    /// Builds a QP from raw data (general `H`, any full-row-rank `G_eq`).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        h: Mat,
        qx: Mat,
        g_eq: Mat,
        e_eq: Mat,
        g_in: Mat,
        e_in: Mat,
        w_in: Vector,
    ) -> Result<Self> {
        let d_p = h.nrows();
        let n = qx.nrows();
        let d_eq = g_eq.nrows();
        let d_in = g_in.nrows();
        let ok = h.is_square()
            && qx.is_square()
            && g_eq.ncols() == d_p
            && e_eq.shape() == (d_eq, n)
            && g_in.ncols() == d_p
            && e_in.shape() == (d_in, n)
            && w_in.len() == d_in;
        if !ok {
            return Err(Error::DimensionMismatch("inconsistent QP data".into()));
        }
        if !linalg::is_symmetric(&h, 1e-12) {
            return Err(Error::InvalidArgument("H is not symmetric".into()));
        }
        let h_blocks = factor_blocks(vec![(0, h.clone())])?;

        // Orthonormal null space of G_eq and the minimum-norm particular solution.
        let (z_basis, zp_x) = if d_eq == 0 {
            (Mat::identity(d_p, d_p), Mat::zeros(d_p, n))
        } else {
            let gram = &g_eq * g_eq.transpose();
            let gram_chol = Cholesky::new(gram)
                .ok_or_else(|| Error::InvalidArgument("equality constraints are not full row rank".into()))?;
            let eig = (g_eq.transpose() * &g_eq).symmetric_eigen();
            let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let null: Vec<usize> =
                (0..d_p).filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * max.max(1.0)).collect();
            if null.len() != d_p - d_eq {
                return Err(Error::InvalidArgument("equality constraints are not full row rank".into()));
            }
            let mut z = Mat::zeros(d_p, null.len());
            for (c, &i) in null.iter().enumerate() {
                z.set_column(c, &eig.eigenvectors.column(i));
            }
            (z, g_eq.transpose() * gram_chol.solve(&e_eq))
        };
        let left_inv = z_basis.transpose();
        let dims = BatchDims { n, m: 0, horizon: 0, d_p, d_eq, d_in };
        Self::build(dims, h, h_blocks, qx, g_eq, e_eq, g_in, e_in, w_in, zp_x, z_basis, left_inv)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        dims: BatchDims,
        h: Mat,
        h_blocks: Vec<HBlock>,
        qx: Mat,
        g_eq: Mat,
        e_eq: Mat,
        g_in: Mat,
        e_in: Mat,
        w_in: Vector,
        zp_x: Mat,
        z_basis: Mat,
        left_inv: Mat,
    ) -> Result<Self> {
        let d_p = dims.d_p;
        let r = z_basis.ncols();
        let hz = block_mul(&h_blocks, &z_basis);
        let hr = z_basis.transpose() * &hz;
        let hr = (&hr + hr.transpose()) * 0.5;
        let l = linalg::cholesky(&hr, "reduced Hessian")?.unpack();
        // zt' = L⁻¹ Z'
        let zt_t = l
            .solve_lower_triangular(&z_basis.transpose())
            .ok_or_else(|| Error::NotPositiveDefinite("reduced Hessian".into()))?;
        let zt = zt_t.transpose();
        let ct_t = &zt_t * g_in.transpose();
        let ct_norms = (0..dims.d_in).map(|i| ct_t.column(i).norm()).collect();
        let dx = &e_in - &g_in * &zp_x;
        let cx = &zt_t * block_mul(&h_blocks, &zp_x);
        let restore = l.transpose() * left_inv;
        let reduced = ReducedForm { r, zp_x, zt, ct_t, ct_norms, dx, cx, restore };

        let g_all_t = {
            let mut g = Mat::zeros(d_p, dims.d_eq + dims.d_in);
            g.view_mut((0, 0), (d_p, dims.d_eq)).copy_from(&g_eq.transpose());
            g.view_mut((0, dims.d_eq), (d_p, dims.d_in)).copy_from(&g_in.transpose());
            g
        };
        let h_inv_gt = block_solve(&h_blocks, &g_all_t) * 0.5;
        let g_in_norms = (0..dims.d_in).map(|i| g_in.row(i).norm()).collect();
        Ok(Self {
            dims,
            h,
            qx,
            g_eq,
            e_eq,
            g_in,
            e_in,
            w_in,
            h_inv_gt,
            g_in_norms,
            reduced,
            h_blocks,
            k_chol: OnceLock::new(),
        })
    }

    /// `H⁻¹ v` through the cached block factors.
    pub fn h_solve(&self, v: &Vector) -> Vector {
        let mut out = v.clone();
        for blk in &self.h_blocks {
            let s = blk.mat.nrows();
            let seg = blk.chol.solve(&v.rows(blk.offset, s).into_owned());
            out.rows_mut(blk.offset, s).copy_from(&seg);
        }
        out
    }

    pub fn h_mul(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(v.len());
        for blk in &self.h_blocks {
            let s = blk.mat.nrows();
            let seg = &blk.mat * v.rows(blk.offset, s);
            out.rows_mut(blk.offset, s).copy_from(&seg);
        }
        out
    }

    /// Cholesky factor of `G_eq H⁻¹ G_eq'`, built on first use.
    pub(crate) fn k_chol(&self) -> &Cholesky<f64, Dyn> {
        self.k_chol.get_or_init(|| {
            let d_eq = self.dims.d_eq;
            let k = &self.g_eq * self.h_inv_gt.columns(0, d_eq) * 2.0;
            let k = (&k + k.transpose()) * 0.5;
            Cholesky::new(k).expect("G_eq has full row rank")
        })
    }

    /// Relative residual of `2 H · H_inv_Gt = [G_eq; G_in]'`.
    pub fn precompute_residual(&self) -> f64 {
        let lhs = block_mul(&self.h_blocks, &self.h_inv_gt) * 2.0;
        let mut worst: f64 = 0.0;
        let scale = 1.0 + self.g_eq.amax().max(self.g_in.amax());
        for j in 0..self.dims.d_eq {
            worst = worst.max((lhs.column(j) - self.g_eq.row(j).transpose()).amax());
        }
        for j in 0..self.dims.d_in {
            worst = worst.max((lhs.column(self.dims.d_eq + j) - self.g_in.row(j).transpose()).amax());
        }
        worst / scale
    }

    pub fn state_cost(&self, x: &Vector) -> f64 {
        x.dot(&(&self.qx * x))
    }

    /// `J(z|x) = z'Hz + x'Qx`.
    pub fn objective(&self, z: &Vector, x: &Vector) -> f64 {
        z.dot(&self.h_mul(z)) + self.state_cost(x)
    }

    pub fn eq_residual(&self, z: &Vector, x: &Vector) -> Vector {
        &self.g_eq * z - &self.e_eq * x
    }

    /// `G_in z - w_in - E_in x`.
    pub fn in_residual(&self, z: &Vector, x: &Vector) -> Vector {
        &self.g_in * z - &self.w_in - &self.e_in * x
    }

    pub fn lagrangian(&self, z: &Vector, nu: &Vector, lambda: &Vector, x: &Vector) -> f64 {
        self.objective(z, x) + nu.dot(&self.eq_residual(z, x)) + lambda.dot(&self.in_residual(z, x))
    }

    /// `∇_z L = 2Hz + G_eq'ν + G_in'λ`.
    pub fn lagrangian_gradient(&self, z: &Vector, nu: &Vector, lambda: &Vector) -> Vector {
        self.h_mul(z) * 2.0 + self.g_eq.tr_mul(nu) + self.g_in.tr_mul(lambda)
    }

    /// Dual function value and whether `λ >= 0`.
    pub fn dual_objective(&self, nu: &Vector, lambda: &Vector, x: &Vector) -> (f64, bool) {
        let (d_eq, d_in) = (self.dims.d_eq, self.dims.d_in);
        let mut y = Vector::zeros(d_eq + d_in);
        y.rows_mut(0, d_eq).copy_from(nu);
        y.rows_mut(d_eq, d_in).copy_from(lambda);
        let g = self.g_eq.tr_mul(nu) + self.g_in.tr_mul(lambda);
        // ¼ g'H⁻¹g = ½ g'(H_inv_Gt y)
        let quad = 0.5 * g.dot(&(&self.h_inv_gt * &y));
        let d = -quad + self.state_cost(x)
            - nu.dot(&(&self.e_eq * x))
            - lambda.dot(&(&self.w_in + &self.e_in * x));
        (d, lambda.iter().all(|l| *l >= 0.0))
    }

    pub fn check_primal_feasible(&self, z: &Vector, x: &Vector, tol: f64) -> Feasibility {
        let eq = vec_norm_inf(self.eq_residual(z, x).as_slice());
        let res = self.in_residual(z, x);
        let mut raw: f64 = eq;
        let mut scaled: f64 = eq;
        for (i, v) in res.iter().enumerate() {
            raw = raw.max(*v);
            let norm = self.g_in_norms[i];
            scaled = scaled.max(if norm > 0.0 { v / norm } else { *v });
        }
        let raw = raw.max(0.0);
        let scaled = scaled.max(0.0);
        Feasibility { feasible: raw <= tol, max_violation: raw, max_scaled_violation: scaled }
    }

    /// `η = J(z|x) - d(ν, λ|x)` for a primal-feasible `z` and `λ >= 0`.
    pub fn duality_gap(&self, z: &Vector, nu: &Vector, lambda: &Vector, x: &Vector) -> Result<f64> {
        let feas = self.check_primal_feasible(z, x, FEAS_TOL);
        if !feas.feasible {
            return Err(Error::CertificatePrecondition(format!(
                "primal point violates the constraints by {:.3e}",
                feas.max_violation
            )));
        }
        let (d, dual_ok) = self.dual_objective(nu, lambda, x);
        if !dual_ok {
            return Err(Error::CertificatePrecondition("multipliers have negative entries".into()));
        }
        Ok(self.objective(z, x) - d)
    }

    /// `σ = J(z|x) - J(z*|x)` for feasible `z` and `z*`.
    pub fn suboptimality(&self, z: &Vector, x: &Vector, z_star: &Vector) -> Result<f64> {
        for (p, label) in [(z, "z"), (z_star, "z*")] {
            let feas = self.check_primal_feasible(p, x, FEAS_TOL);
            if !feas.feasible {
                return Err(Error::CertificatePrecondition(format!(
                    "{label} violates the constraints by {:.3e}",
                    feas.max_violation
                )));
            }
        }
        Ok(self.objective(z, x) - self.objective(z_star, x))
    }

    /// Stacks a state/input rollout into `z`.
    pub fn stack(&self, states: &[Vector], inputs: &[Vector]) -> Vector {
        let (n, m) = (self.dims.n, self.dims.m);
        let mut z = Vector::zeros(self.dims.d_p);
        for (k, s) in states.iter().enumerate() {
            z.rows_mut(k * n, n).copy_from(s);
        }
        for (k, u) in inputs.iter().enumerate() {
            z.rows_mut(self.dims.d_eq + k * m, m).copy_from(u);
        }
        z
    }

    /// First input `u_0` of a plan.
    pub fn first_input(&self, z: &Vector) -> Vector {
        z.rows(self.dims.d_eq, self.dims.m).into_owned()
    }
}

fn block_mul(blocks: &[HBlock], m: &Mat) -> Mat {
    let mut out = Mat::zeros(m.nrows(), m.ncols());
    for blk in blocks {
        let s = blk.mat.nrows();
        let seg = &blk.mat * m.rows(blk.offset, s);
        out.rows_mut(blk.offset, s).copy_from(&seg);
    }
    out
}

fn block_solve(blocks: &[HBlock], m: &Mat) -> Mat {
    let mut out = m.clone();
    for blk in blocks {
        let s = blk.mat.nrows();
        let seg = blk.chol.solve(&m.rows(blk.offset, s).into_owned());
        out.rows_mut(blk.offset, s).copy_from(&seg);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{build_benchmark, Benchmark};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sys1() -> BatchQp {
        assemble_batch(&build_benchmark(Benchmark::Sys1).unwrap()).unwrap()
    }

    #[test]
    fn sys1_dimensions() {
        let qp = sys1();
        let c_f = build_benchmark(Benchmark::Sys1).unwrap().xf_set.rows();
        assert_eq!((qp.dims.d_p, qp.dims.d_in, qp.dims.d_eq), (30, 10 * 4 + c_f + 10 * 2, 20));
    }

    #[test]
    fn rollout_satisfies_equalities() {
        let spec = build_benchmark(Benchmark::Sys1).unwrap();
        let qp = assemble_batch(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = Vector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let mut states = Vec::new();
            let mut inputs = Vec::new();
            let mut s = x.clone();
            for _ in 0..spec.horizon {
                let u = Vector::from_fn(1, |_, _| rng.gen_range(-2.0..2.0));
                s = spec.model.step(&s, &u);
                states.push(s.clone());
                inputs.push(u);
            }
            let z = qp.stack(&states, &inputs);
            assert!(qp.eq_residual(&z, &x).amax() < 1e-12);
        }
    }

    #[test]
    fn objective_at_zero_is_state_cost() {
        let qp = sys1();
        let x = Vector::from_vec(vec![1.0, -2.0]);
        assert_eq!(qp.objective(&Vector::zeros(30), &x), 5.0);
        assert_eq!(qp.objective(&Vector::zeros(30), &Vector::zeros(2)), 0.0);
    }

    #[test]
    fn dual_objective_at_zero_multipliers() {
        let qp = sys1();
        let x = Vector::from_vec(vec![0.5, 0.25]);
        let (d, ok) = qp.dual_objective(&Vector::zeros(qp.dims.d_eq), &Vector::zeros(qp.dims.d_in), &x);
        assert!(ok);
        assert!((d - qp.state_cost(&x)).abs() < 1e-15);
    }

    #[test]
    fn precompute_is_consistent() {
        assert!(sys1().precompute_residual() < 1e-10);
    }

    #[test]
    fn scaled_plan_is_infeasible() {
        let qp = sys1();
        let x = Vector::from_vec(vec![1.0, 0.0]);
        let z = Vector::from_element(30, 100.0);
        let f = qp.check_primal_feasible(&z, &x, FEAS_TOL);
        assert!(!f.feasible && f.max_violation > 0.0);
    }

    #[test]
    fn reduced_form_reproduces_objective() {
        let qp = sys1();
        let x = Vector::from_vec(vec![1.0, 0.5]);
        let w: Vec<f64> = (0..qp.reduced.r).map(|i| (i as f64 * 0.37).sin()).collect();
        let z = qp.reduced.to_z(&x, &w);
        assert!(qp.eq_residual(&z, &x).amax() < 1e-12);
        let back = qp.reduced.to_w(&x, &z);
        for (a, b) in back.iter().zip(&w) {
            assert!((a - b).abs() < 1e-10);
        }
        // J(z) - J(z(0)) = w'w + 2c'w
        let c = qp.reduced.linear_term(&x);
        let z0 = qp.reduced.to_z(&x, &vec![0.0; qp.reduced.r]);
        let lhs = qp.objective(&z, &x) - qp.objective(&z0, &x);
        let wv = Vector::from_vec(w);
        let rhs = wv.dot(&wv) + 2.0 * c.dot(&wv);
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn generic_qp_null_space() {
        let h = Mat::identity(2, 2);
        let g_eq = Mat::from_row_slice(1, 2, &[1.0, 1.0]);
        let e_eq = Mat::from_element(1, 1, 1.0);
        let qp = BatchQp::from_parts(h, Mat::zeros(1, 1), g_eq, e_eq, Mat::zeros(0, 2), Mat::zeros(0, 1), Vector::zeros(0))
            .unwrap();
        let x = Vector::from_element(1, 1.0);
        let z = qp.reduced.to_z(&x, &[0.3]);
        assert!((z[0] + z[1] - 1.0).abs() < 1e-14);
    }
}
