//! Lagrangian loss and its gradient.
//!
//! For a record `(x, z*, ν*, λ*)` the per-sample term is
//! `δ(z̃)² = (L(z̃, ν*, λ*|x) - L(z*, ν*, λ*|x))²`. Since `L` is quadratic in
//! `z`, `δ(z̃) = z̃'Hz̃ + g'z̃ - c` with `g = G_eq'ν* + G_in'λ*` and
//! `c = z*'Hz* + g'z*`.

use rayon::prelude::*;

use super::mlp::{MlpGradient, MlpModel};
use crate::batch_qp::BatchQp;
use crate::datagen::SampleRecord;
use crate::linalg::Mat;

/// Records prepared for loss evaluation.
#[derive(Debug, Clone)]
pub struct LossData {
    /// `n × count`, one state per column.
    pub xs: Mat,
    /// `d_p × count`, the Lagrangian's linear term per record.
    pub gs: Mat,
    pub cs: Vec<f64>,
    /// `d_p × count`, optimal plans (kept for diagnostics).
    pub zs: Mat,
}

impl LossData {
    pub fn new(qp: &BatchQp, records: &[SampleRecord]) -> Self {
        let count = records.len();
        let (n, d_p) = (qp.dims.n, qp.dims.d_p);
        let mut xs = Mat::zeros(n, count);
        let mut gs = Mat::zeros(d_p, count);
        let mut zs = Mat::zeros(d_p, count);
        let mut cs = Vec::with_capacity(count);
        for (j, r) in records.iter().enumerate() {
            let g = qp.g_eq.tr_mul(&r.nu) + qp.g_in.tr_mul(&r.lambda);
            cs.push(r.z.dot(&qp.h_mul(&r.z)) + g.dot(&r.z));
            xs.set_column(j, &r.x);
            gs.set_column(j, &g);
            zs.set_column(j, &r.z);
        }
        Self { xs, gs, cs, zs }
    }

    pub fn len(&self) -> usize {
        self.cs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cs.is_empty()
    }

    fn columns(&self, idx: &[usize]) -> (Mat, Mat, Vec<f64>) {
        let xs = Mat::from_fn(self.xs.nrows(), idx.len(), |i, j| self.xs[(i, idx[j])]);
        let gs = Mat::from_fn(self.gs.nrows(), idx.len(), |i, j| self.gs[(i, idx[j])]);
        let cs = idx.iter().map(|&j| self.cs[j]).collect();
        (xs, gs, cs)
    }
}

/// `δ` for each column of `zt` and `2Hz̃ + g` (the gradient of `δ`).
fn deltas(qp: &BatchQp, zt: &Mat, gs: &Mat, cs: &[f64]) -> (Vec<f64>, Mat) {
    let mut dgrad = Mat::zeros(zt.nrows(), zt.ncols());
    let mut out = Vec::with_capacity(cs.len());
    for j in 0..zt.ncols() {
        let z = zt.column(j).into_owned();
        let hz = qp.h_mul(&z);
        let g = gs.column(j);
        out.push(z.dot(&hz) + g.dot(&z) - cs[j]);
        dgrad.set_column(j, &(hz * 2.0 + g));
    }
    (out, dgrad)
}

/// `Σ_i δ_i²` over the records selected by `idx` (all when `None`).
pub fn lagrangian_loss_on(model: &MlpModel, data: &LossData, qp: &BatchQp, idx: Option<&[usize]>) -> f64 {
    let all: Vec<usize>;
    let idx = match idx {
        Some(i) => i,
        None => {
            all = (0..data.len()).collect();
            &all
        }
    };
    let mut total = 0.0;
    for chunk in idx.chunks(1024) {
        let (xs, gs, cs) = data.columns(chunk);
        let zt = model.forward_batch(&xs);
        let (d, _) = deltas(qp, &zt, &gs, &cs);
        total += d.iter().map(|v| v * v).sum::<f64>();
    }
    total
}

pub fn lagrangian_loss(model: &MlpModel, records: &[SampleRecord], qp: &BatchQp) -> f64 {
    lagrangian_loss_on(model, &LossData::new(qp, records), qp, None)
}

/// Loss and exact gradient over the records in `idx`.
pub fn loss_and_gradient_on(model: &MlpModel, data: &LossData, qp: &BatchQp, idx: &[usize]) -> (f64, MlpGradient) {
    let (xs, gs, cs) = data.columns(idx);
    let (acts, pre) = model.forward_cached(&xs);
    let zt = acts.last().unwrap();
    let (d, dgrad) = deltas(qp, zt, &gs, &cs);
    let loss = d.iter().map(|v| v * v).sum();
    // ∂(δ²)/∂z̃ = 2δ(2Hz̃ + g)
    let mut delta = dgrad;
    for (j, dj) in d.iter().enumerate() {
        delta.column_mut(j).scale_mut(2.0 * dj);
    }
    let mut grad = MlpGradient::zeros_like(model);
    for l in (0..model.layers()).rev() {
        grad.weights[l] = &delta * acts[l].transpose();
        grad.biases[l] = delta.column_sum();
        if l > 0 {
            let mut back = model.weights[l].tr_mul(&delta);
            let s = &pre[l - 1];
            back.zip_apply(s, |b, sv| {
                if sv <= 0.0 {
                    *b = 0.0
                }
            });
            delta = back;
        }
    }
    (loss, grad)
}

/// Loss and gradient with the batch split into `shards` pieces evaluated in
/// parallel and summed in shard order.
pub fn loss_and_gradient_sharded(
    model: &MlpModel,
    data: &LossData,
    qp: &BatchQp,
    idx: &[usize],
    shards: usize,
) -> (f64, MlpGradient) {
    if shards <= 1 || idx.len() < 2 * shards {
        return loss_and_gradient_on(model, data, qp, idx);
    }
    let size = idx.len().div_ceil(shards);
    let parts: Vec<(f64, MlpGradient)> =
        idx.par_chunks(size).map(|c| loss_and_gradient_on(model, data, qp, c)).collect();
    let mut iter = parts.into_iter();
    let (mut loss, mut grad) = iter.next().unwrap();
    for (l, g) in iter {
        loss += l;
        grad.add_assign(&g);
    }
    (loss, grad)
}

pub fn loss_gradient(model: &MlpModel, records: &[SampleRecord], qp: &BatchQp) -> MlpGradient {
    let data = LossData::new(qp, records);
    let idx: Vec<usize> = (0..data.len()).collect();
    loss_and_gradient_on(model, &data, qp, &idx).1
}

/// Primal ℓ2 discrepancy `Σ |z̃ - z*|²`, kept as a baseline.
pub fn primal_loss(model: &MlpModel, data: &LossData) -> f64 {
    let zt = model.forward_batch(&data.xs);
    (zt - &data.zs).norm_squared()
}
