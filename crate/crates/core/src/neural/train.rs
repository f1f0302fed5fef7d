use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::loss::{lagrangian_loss_on, loss_and_gradient_sharded, LossData};
use super::mlp::MlpModel;
use crate::batch_qp::BatchQp;
use crate::datagen::SampleRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub widths: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Gradient shards evaluated in parallel (1 = sequential).
    pub threads: usize,
}

impl TrainConfig {
    pub fn new(widths: Vec<usize>) -> Self {
        Self {
            widths,
            batch_size: 128,
            epochs: 100,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
            validation_fraction: 0.1,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..=0.25).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 0.25]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sample loss on the training split.
    pub train_loss: f64,
    /// Mean per-sample loss on the validation split (NaN when empty).
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub config: TrainConfig,
    pub train_count: usize,
    pub val_count: usize,
    pub steps: usize,
    /// Entry 0 holds the losses of the initial parameters.
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    /// Whitespace-separated columns `epoch train_loss val_loss`.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let widths: Vec<String> = c.widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(
            s,
            "# widths={} batch={} epochs={} lr={} betas={},{} eps={} seed={} val_fraction={} train={} val={}",
            widths.join(","),
            c.batch_size,
            c.epochs,
            c.learning_rate,
            c.adam_betas.0,
            c.adam_betas.1,
            c.adam_eps,
            c.seed,
            c.validation_fraction,
            self.train_count,
            self.val_count
        );
        let _ = writeln!(s, "epoch train_loss val_loss");
        for e in &self.epochs {
            let _ = writeln!(s, "{} {:.9e} {:.9e}", e.epoch, e.train_loss, e.val_loss);
        }
        s
    }
}

fn mean_loss(model: &MlpModel, data: &LossData, qp: &BatchQp, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        f64::NAN
    } else {
        lagrangian_loss_on(model, data, qp, Some(idx)) / idx.len() as f64
    }
}

/// Mini-batch Adam on the Lagrangian loss. Deterministic given the seed.
pub fn train(records: &[SampleRecord], qp: &BatchQp, config: &TrainConfig) -> Result<(MlpModel, TrainingLog)> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let (n, d_p) = (qp.dims.n, qp.dims.d_p);
    if config.widths.first() != Some(&n) || config.widths.last() != Some(&d_p) {
        return Err(Error::Config(format!(
            "network widths {:?} must start at {n} and end at {d_p}",
            config.widths
        )));
    }
    let data = LossData::new(qp, records);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let val_count = ((data.len() as f64) * config.validation_fraction).floor() as usize;
    let val_count = val_count.min(data.len() - 1);
    let split = data.len() - val_count;
    let val_idx = order[split..].to_vec();
    let mut train_idx = order[..split].to_vec();

    let mut model = MlpModel::new(&config.widths, config.seed)?;
    let mut adam = Adam::new(config.learning_rate, config.adam_betas.0, config.adam_betas.1, config.adam_eps);
    let mut epochs = vec![EpochLog {
        epoch: 0,
        train_loss: mean_loss(&model, &data, qp, &train_idx),
        val_loss: mean_loss(&model, &data, qp, &val_idx),
    }];
    let mut steps = 0;
    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let (loss, grad) = loss_and_gradient_sharded(&model, &data, qp, batch, config.threads);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            total += loss;
            adam.step(&mut model, &grad);
            steps += 1;
        }
        let val_loss = mean_loss(&model, &data, qp, &val_idx);
        if !val_loss.is_finite() && !val_idx.is_empty() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let entry = EpochLog { epoch, train_loss: total / train_idx.len() as f64, val_loss };
        log::debug!("epoch {epoch}: train {:.4e} val {:.4e}", entry.train_loss, entry.val_loss);
        epochs.push(entry);
    }
    let log = TrainingLog {
        config: config.clone(),
        train_count: train_idx.len(),
        val_count: val_idx.len(),
        steps,
        epochs,
    };
    Ok((model, log))
}
