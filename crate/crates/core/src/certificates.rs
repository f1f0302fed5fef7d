//! Dual recovery from a primal point and the duality-gap certificate.

use crate::batch_qp::{BatchQp, FEAS_TOL};
use crate::linalg::{self, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    /// Slack below which an inequality row counts as active.
    pub active_tol: f64,
    pub feas_tol: f64,
    /// Floor on the acceptance threshold (`η <= max(x'Qx, eps_abs)`).
    pub eps_abs: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { active_tol: 1e-7, feas_tol: FEAS_TOL, eps_abs: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// Duality gap, `+∞` when the primal point is infeasible.
    pub eta: f64,
    /// `x'Qx`.
    pub threshold: f64,
    pub passed: bool,
    pub feasible: bool,
    pub nu: Vector,
    pub lambda: Vector,
}

/// Inequality rows with `|G_in z - w_in - E_in x| <= tol`.
pub fn active_rows(qp: &BatchQp, z: &Vector, x: &Vector, tol: f64) -> Vec<usize> {
    qp.in_residual(z, x)
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Maximizer of the dual function over `ν` for fixed `λ`:
/// `G_eq H⁻¹ G_eq' ν = -2 E_eq x - G_eq H⁻¹ G_in' λ`.
pub fn nu_given_lambda(qp: &BatchQp, lambda: &Vector, x: &Vector) -> Vector {
    let d_eq = qp.dims.d_eq;
    if d_eq == 0 {
        return Vector::zeros(0);
    }
    // H⁻¹ G_in' λ = 2 H_inv_Gt[:, d_eq..] λ, skipping zero multipliers.
    let mut h_inv_g = Vector::zeros(qp.dims.d_p);
    for (i, l) in lambda.iter().enumerate() {
        if *l != 0.0 {
            h_inv_g.axpy(2.0 * l, &qp.h_inv_gt.column(d_eq + i), 1.0);
        }
    }
    let rhs = -(&qp.e_eq * x) * 2.0 - &qp.g_eq * h_inv_g;
    qp.k_chol().solve(&rhs)
}

/// Multipliers consistent with stationarity on the rows in `active`.
///
/// The inequality multipliers solve the least-squares stationarity system
/// restricted to the active rows (in the metric of `H⁻¹`, after eliminating
/// the equality multipliers), are clamped at zero, and the equality
/// multipliers are then chosen to maximize the dual function.
pub fn recover_duals(qp: &BatchQp, z: &Vector, active: &[usize], x: &Vector) -> (Vector, Vector) {
    let red = &qp.reduced;
    let mut lambda = Vector::zeros(qp.dims.d_in);
    if !active.is_empty() {
        let k = active.len();
        let mut c = Mat::zeros(red.r, k);
        for (j, &i) in active.iter().enumerate() {
            c.set_column(j, &red.ct_t.column(i));
        }
        // Reduced gradient zt'(2Hz).
        let g = red.zt.tr_mul(&(qp.h_mul(z) * 2.0));
        let gram = c.tr_mul(&c);
        let rhs = -c.tr_mul(&g);
        let sol = match nalgebra::Cholesky::new(gram.clone()) {
            Some(ch) if ch.l_dirty().diagonal().iter().all(|d| *d > 1e-10 * gram.diagonal().amax().sqrt()) => ch.solve(&rhs),
            _ => linalg::psd_pinv_solve(&gram, &rhs, 1e-12),
        };
        for (j, &i) in active.iter().enumerate() {
            lambda[i] = sol[j].max(0.0);
        }
    }
    let nu = nu_given_lambda(qp, &lambda, x);
    (nu, lambda)
}

/// Certificate with default options.
pub fn certify(qp: &BatchQp, z: &Vector, x: &Vector) -> Certificate {
    certify_with(qp, z, x, &CertifyOptions::default())
}

pub fn certify_with(qp: &BatchQp, z: &Vector, x: &Vector, opts: &CertifyOptions) -> Certificate {
    let threshold = qp.state_cost(x);
    let feasible = qp.check_primal_feasible(z, x, opts.feas_tol).feasible;
    if !feasible {
        return Certificate {
            eta: f64::INFINITY,
            threshold,
            passed: false,
            feasible,
            nu: Vector::zeros(qp.dims.d_eq),
            lambda: Vector::zeros(qp.dims.d_in),
        };
    }
    let active = active_rows(qp, z, x, opts.active_tol);
    let (nu, lambda) = recover_duals(qp, z, &active, x);
    let (d, _) = qp.dual_objective(&nu, &lambda, x);
    let eta = qp.objective(z, x) - d;
    Certificate { eta, threshold, passed: eta <= threshold.max(opts.eps_abs), feasible, nu, lambda }
}
