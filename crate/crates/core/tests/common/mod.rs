//! Independent oracles shared by the integration tests. Nothing here calls
//! the solver under test.

#![allow(dead_code)]

use mpc_warmstart::{BatchQp, Mat, Vector};
use nalgebra::DMatrix;
use rand::Rng;

pub struct OracleSolution {
    pub z: Vector,
    pub nu: Vector,
    pub lambda: Vector,
    pub j: f64,
    pub active: Vec<usize>,
}

/// Equality-constrained minimizer of `z'Hz` subject to `A z = b`, with the
/// multipliers of `2Hz + A'mu = 0`. `None` when `A` is rank deficient.
fn eq_qp(h: &Mat, a: &Mat, b: &Vector) -> Option<(Vector, Vector)> {
    let (k, d) = a.shape();
    if k > 0 {
        let sv = a.clone().svd(false, false).singular_values;
        let max = sv.max();
        if sv.min() <= 1e-9 * max.max(1.0) {
            return None;
        }
    }
    let mut kkt = DMatrix::zeros(d + k, d + k);
    kkt.view_mut((0, 0), (d, d)).copy_from(&(h * 2.0));
    kkt.view_mut((0, d), (d, k)).copy_from(&a.transpose());
    kkt.view_mut((d, 0), (k, d)).copy_from(a);
    let mut rhs = Vector::zeros(d + k);
    rhs.rows_mut(d, k).copy_from(b);
    let sol = kkt.lu().solve(&rhs)?;
    Some((sol.rows(0, d).into_owned(), sol.rows(d, k).into_owned()))
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if cur.len() == k {
        return out(cur);
    }
    for i in start..n {
        cur.push(i);
        if subsets(n, k, i + 1, cur, out) {
            return true;
        }
        cur.pop();
    }
    false
}

/// Brute-force active-set enumeration: tries every subset of inequality rows
/// (by size), solves the equality-constrained QP, and keeps the candidates
/// that are primal feasible with nonnegative multipliers. Strict convexity
/// makes the KKT point unique, so the cheapest valid candidate is returned.
pub fn enumerate_qp(qp: &BatchQp, x: &Vector) -> Option<OracleSolution> {
    let d_p = qp.dims.d_p;
    let d_eq = qp.dims.d_eq;
    let d_in = qp.dims.d_in;
    let beq = &qp.e_eq * x;
    let bin = &qp.w_in + &qp.e_in * x;
    let max_k = (d_p - d_eq).min(d_in);
    let mut best: Option<OracleSolution> = None;
    for k in 0..=max_k {
        let mut cur = Vec::new();
        subsets(d_in, k, 0, &mut cur, &mut |set| {
            let mut a = Mat::zeros(d_eq + set.len(), d_p);
            let mut b = Vector::zeros(d_eq + set.len());
            a.view_mut((0, 0), (d_eq, d_p)).copy_from(&qp.g_eq);
            b.rows_mut(0, d_eq).copy_from(&beq);
            for (r, &i) in set.iter().enumerate() {
                a.row_mut(d_eq + r).copy_from(&qp.g_in.row(i));
                b[d_eq + r] = bin[i];
            }
            let Some((z, mu)) = eq_qp(&qp.h, &a, &b) else { return false };
            let resid = &qp.g_in * &z - &bin;
            let scale = 1.0 + z.amax();
            if resid.iter().any(|v| *v > 1e-9 * scale) {
                return false;
            }
            if mu.rows(d_eq, set.len()).iter().any(|v| *v < -1e-9 * scale) {
                return false;
            }
            let j = z.dot(&(&qp.h * &z)) + x.dot(&(&qp.qx * x));
            let mut lambda = Vector::zeros(d_in);
            for (r, &i) in set.iter().enumerate() {
                lambda[i] = mu[d_eq + r].max(0.0);
            }
            let cand = OracleSolution { z, nu: mu.rows(0, d_eq).into_owned(), lambda, j, active: set.to_vec() };
            if best.as_ref().map_or(true, |b| cand.j < b.j) {
                best = Some(cand);
            }
            // The KKT point is unique; the first valid candidate is optimal.
            true
        });
        if best.is_some() {
            break;
        }
    }
    best
}

/// Whether the feasible set at `x` is empty: enumeration finds no KKT point.
pub fn oracle_infeasible(qp: &BatchQp, x: &Vector) -> bool {
    enumerate_qp(qp, x).is_none()
}

fn random_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// A random strictly convex QP with a known feasible point, and a state.
pub fn random_qp<R: Rng>(rng: &mut R, max_dp: usize, max_din: usize) -> (BatchQp, Vector) {
    let d_p = rng.gen_range(2..=max_dp);
    let d_eq = rng.gen_range(0..=(d_p / 3));
    let d_in = rng.gen_range(1..=max_din);
    let n = 2;
    let m = random_matrix(rng, d_p, d_p);
    let h = &m * m.transpose() + Mat::identity(d_p, d_p) * 0.1;
    let h = (&h + h.transpose()) * 0.5;
    let qx = Mat::identity(n, n);
    let g_eq = random_matrix(rng, d_eq, d_p);
    let e_in = random_matrix(rng, d_in, n);
    let g_in = random_matrix(rng, d_in, d_p);
    let x = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let z_f = Vector::from_fn(d_p, |_, _| rng.gen_range(-2.0..2.0));
    // E_eq chosen so that z_f satisfies the equalities at this x.
    let e_eq = if d_eq > 0 {
        let target = &g_eq * &z_f;
        let xn = x.norm_squared();
        &target * x.transpose() / xn
    } else {
        Mat::zeros(0, n)
    };
    let slack = Vector::from_fn(d_in, |_, _| rng.gen_range(0.0..1.0));
    let w_in = &g_in * &z_f - &e_in * &x + slack;
    let qp = BatchQp::from_parts(h, qx, g_eq, e_eq, g_in, e_in, w_in).expect("random QP data");
    (qp, x)
}

/// Classical RK4 for `x' = A x + B u(t)` over `[0, tau]`.
pub fn rk4(a: &Mat, b: &Mat, x0: &Vector, u: &dyn Fn(f64) -> Vector, tau: f64, steps: usize) -> Vector {
    let h = tau / steps as f64;
    let f = |t: f64, x: &Vector| a * x + b * u(t);
    let mut x = x0.clone();
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(t, &x);
        let k2 = f(t + h / 2.0, &(&x + &k1 * (h / 2.0)));
        let k3 = f(t + h / 2.0, &(&x + &k2 * (h / 2.0)));
        let k4 = f(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Triangle-hold discretization from numerically integrated responses:
/// `Phi` (free response), `G1` (unit step input), `G2` (unit ramp input
/// reaching 1 at `tau`), combined as `(Phi, G1 + Phi G2 - G2)`.
pub fn triangle_hold_rk(a: &Mat, b: &Mat, tau: f64, steps: usize) -> (Mat, Mat) {
    let (n, m) = (a.nrows(), b.ncols());
    let zero_u = |_t: f64| Vector::zeros(m);
    let mut phi = Mat::zeros(n, n);
    for i in 0..n {
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        phi.set_column(i, &rk4(a, b, &e, &zero_u, tau, steps));
    }
    let mut g1 = Mat::zeros(n, m);
    let mut g2 = Mat::zeros(n, m);
    for j in 0..m {
        let step = move |_t: f64| {
            let mut u = Vector::zeros(m);
            u[j] = 1.0;
            u
        };
        let ramp = move |t: f64| {
            let mut u = Vector::zeros(m);
            u[j] = t / tau;
            u
        };
        g1.set_column(j, &rk4(a, b, &Vector::zeros(n), &step, tau, steps));
        g2.set_column(j, &rk4(a, b, &Vector::zeros(n), &ramp, tau, steps));
    }
    let bd = &g1 + &phi * &g2 - &g2;
    (phi, bd)
}

/// Second oracle for problems too large to enumerate: scaled ADMM on
/// `min z'Hz s.t. G_eq z = b_eq, G_in z <= b_in`, followed by a polish step
/// that re-solves the equality QP on the rows ADMM reports as active and
/// checks the KKT conditions exactly. `None` when the polish fails.
pub fn admm_qp(qp: &BatchQp, x: &Vector, iterations: usize) -> Option<OracleSolution> {
    let (d_p, d_eq, d_in) = (qp.dims.d_p, qp.dims.d_eq, qp.dims.d_in);
    let k = d_eq + d_in;
    let mut a = Mat::zeros(k, d_p);
    a.view_mut((0, 0), (d_eq, d_p)).copy_from(&qp.g_eq);
    a.view_mut((d_eq, 0), (d_in, d_p)).copy_from(&qp.g_in);
    let beq = &qp.e_eq * x;
    let bin = &qp.w_in + &qp.e_in * x;
    let sigma = 1e-6;
    let build = |scale: f64| -> Option<(Vec<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let rho: Vec<f64> = (0..k).map(|i| if i < d_eq { 1e3 * scale } else { scale }).collect();
        let mut lhs = &qp.h * 2.0 + Mat::identity(d_p, d_p) * sigma;
        let mut ar = a.clone();
        for i in 0..k {
            ar.row_mut(i).scale_mut(rho[i]);
        }
        lhs += a.tr_mul(&ar);
        Some((rho, lhs.cholesky()?))
    };
    let mut scale = 1.0;
    let (mut rho, mut chol) = build(scale)?;
    let clip = |i: usize, v: f64| if i < d_eq { beq[i] } else { v.min(bin[i - d_eq]) };
    let mut z = Vector::zeros(d_p);
    let mut s = Vector::zeros(k);
    let mut y = Vector::zeros(k);
    let multipliers = |y: &Vector, rho: &[f64]| -> Vec<f64> { (0..d_in).map(|i| rho[d_eq + i] * y[d_eq + i]).collect() };
    for it in 1..=iterations {
        let rhs_k = Vector::from_fn(k, |i, _| rho[i] * (s[i] - y[i]));
        z = chol.solve(&(a.tr_mul(&rhs_k) + &z * sigma));
        let az = &a * &z;
        for i in 0..k {
            s[i] = clip(i, az[i] + y[i]);
            y[i] += az[i] - s[i];
        }
        if it % 200 == 0 {
            if let Some(sol) = polish(qp, x, &z, &multipliers(&y, &rho), &[1e-6]) {
                return Some(sol);
            }
            // Rebalance the penalty so primal and dual residuals shrink together.
            let lam = Vector::from_fn(k, |i, _| rho[i] * y[i]);
            let primal = (&az - &s).amax() / (1e-12 + az.amax().max(s.amax()));
            let hz = &qp.h * &z * 2.0;
            let atl = a.tr_mul(&lam);
            let dual = (&hz + &atl).amax() / (1e-12 + hz.amax().max(atl.amax()));
            let ratio = (primal / dual.max(1e-300)).sqrt();
            if !(0.2..=5.0).contains(&ratio) {
                let new_scale = (scale * ratio).clamp(1e-6, 1e6);
                let (r2, c2) = build(new_scale)?;
                for i in 0..k {
                    y[i] *= rho[i] / r2[i];
                }
                scale = new_scale;
                rho = r2;
                chol = c2;
            }
        }
    }
    polish(qp, x, &z, &multipliers(&y, &rho), &[1e-6, 1e-5, 1e-4, 1e-7, 1e-8])
}

/// Builds a linearly independent active set from the rows with the largest
/// multipliers (then the tightest slacks) and accepts the equality-QP
/// solution on it only if it is feasible with nonnegative multipliers.
fn polish(qp: &BatchQp, x: &Vector, z: &Vector, lambda: &[f64], cuts: &[f64]) -> Option<OracleSolution> {
    let (d_p, d_eq, d_in) = (qp.dims.d_p, qp.dims.d_eq, qp.dims.d_in);
    let beq = &qp.e_eq * x;
    let bin = &qp.w_in + &qp.e_in * x;
    let slack = &bin - &qp.g_in * z;
    let scale = 1.0 + lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for &cut in cuts {
        let mut cand: Vec<usize> = (0..d_in).filter(|&i| lambda[i] > cut * scale || slack[i].abs() < cut * 1e-2).collect();
        cand.sort_by(|&i, &j| lambda[j].partial_cmp(&lambda[i]).unwrap());
        // Gram-Schmidt on the rows keeps the chosen set linearly independent.
        let mut basis: Vec<Vector> = Vec::new();
        let mut independent = |r: Vector| {
            let norm = r.norm();
            let mut v = r;
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&v);
                    v -= q * c;
                }
            }
            let left = v.norm();
            if left > 1e-9 * norm.max(1e-300) && norm > 0.0 {
                basis.push(v / left);
                true
            } else {
                false
            }
        };
        for i in 0..d_eq {
            independent(qp.g_eq.row(i).transpose());
        }
        let mut set: Vec<usize> = Vec::new();
        for &i in &cand {
            if independent(qp.g_in.row(i).transpose()) {
                set.push(i);
            }
        }
        let mut rows = Mat::zeros(d_eq + set.len(), d_p);
        rows.view_mut((0, 0), (d_eq, d_p)).copy_from(&qp.g_eq);
        for (r, &i) in set.iter().enumerate() {
            rows.row_mut(d_eq + r).copy_from(&qp.g_in.row(i));
        }
        let mut b = Vector::zeros(rows.nrows());
        b.rows_mut(0, d_eq).copy_from(&beq);
        for (r, &i) in set.iter().enumerate() {
            b[d_eq + r] = bin[i];
        }
        let Some((zp, mu)) = eq_qp(&qp.h, &rows, &b) else { continue };
        let zs = 1.0 + zp.amax();
        if (&qp.g_in * &zp - &bin).iter().any(|v| *v > 1e-9 * zs) {
            continue;
        }
        if mu.rows(d_eq, set.len()).iter().any(|v| *v < -1e-9 * (1.0 + mu.amax())) {
            continue;
        }
        let mut lam = Vector::zeros(d_in);
        for (r, &i) in set.iter().enumerate() {
            lam[i] = mu[d_eq + r].max(0.0);
        }
        let j = zp.dot(&(&qp.h * &zp)) + x.dot(&(&qp.qx * x));
        set.sort_unstable();
        return Some(OracleSolution { z: zp, nu: mu.rows(0, d_eq).into_owned(), lambda: lam, j, active: set });
    }
    None
}

/// Rows with `|G_in z - w_in - E_in x| <= tol`.
pub fn tight_rows(qp: &BatchQp, z: &Vector, x: &Vector, tol: f64) -> Vec<usize> {
    let res = &qp.g_in * z - &qp.w_in - &qp.e_in * x;
    (0..res.len()).filter(|&i| res[i].abs() <= tol).collect()
}
