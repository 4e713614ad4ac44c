use crate::autograd::{Graph, Var};
use crate::data::{Batch, PatchDataset};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;

use super::adam::Adam;
use super::checkpoint::Checkpoint;
use super::schedule::{cosine_lr, TrainSchedule};

/// Optimization hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Weight of the group-lasso term during condensing stages.
    pub lasso_weight: f64,
    pub charbonnier_eps: f64,
    /// Global gradient-norm ceiling, if any.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 180,
            lr: 1e-4,
            batch_size: 16,
            lasso_weight: 1e-5,
            charbonnier_eps: 1e-3,
            clip_norm: None,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.lr) || !finite_pos(self.charbonnier_eps) || !finite_pos(self.adam_eps) {
            return Err(Error::config("lr, charbonnier_eps and adam_eps must be finite and positive"));
        }
        if !(self.lasso_weight.is_finite() && self.lasso_weight >= 0.0) {
            return Err(Error::config("lasso_weight must be finite and non-negative"));
        }
        if self.clip_norm.is_some_and(|c| !finite_pos(c)) {
            return Err(Error::config("clip_norm must be finite and positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Mean Charbonnier penalty `mean(sqrt((a − b)² + eps²))` of two tensors.
pub fn charbonnier_loss<T: Scalar>(pred: &crate::Tensor<T>, target: &crate::Tensor<T>, eps: f64) -> Result<f64> {
    pred.expect_same_shape(target, "charbonnier")?;
    let e2 = eps * eps;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| {
            let d = (a - b).to_f64().unwrap_or(f64::NAN);
            (d * d + e2).sqrt()
        })
        .sum();
    Ok(total / pred.numel().max(1) as f64)
}

/// Summary of one finished epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-indexed.
    pub epoch: usize,
    /// Mean Charbonnier loss over the epoch's batches.
    pub loss: f64,
    /// Mean of the full objective, including the group-lasso term.
    pub objective: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Mean retained connection fraction over the learned group convs.
    pub retained: f64,
    pub condensed: bool,
}

impl EpochStats {
    pub fn to_line(&self) -> String {
        format!(
            "epoch={} loss={:.8e} objective={:.8e} lr={:.6e} retained={:.4} condensed={}",
            self.epoch, self.loss, self.objective, self.lr, self.retained, self.condensed
        )
    }
}

/// Owns the model and optimizer state across epochs.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub model: Model<T>,
    pub adam: Adam<T>,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if model.is_frozen() {
            return Err(Error::config("cannot train a model frozen for inference"));
        }
        let adam = Adam::new(config.beta1, config.beta2, config.adam_eps);
        Ok(Trainer { model, adam, config, epoch: 0, step: 0 })
    }

    /// Continues from a checkpoint. Optimizer hyperparameters come from the
    /// checkpoint; the rest from `config`.
    pub fn resume(ckpt: Checkpoint<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if ckpt.epoch > config.epochs {
            return Err(Error::config(format!("checkpoint epoch {} exceeds planned {}", ckpt.epoch, config.epochs)));
        }
        Ok(Trainer { model: ckpt.model, adam: ckpt.adam, config, epoch: ckpt.epoch, step: ckpt.step })
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule::new(self.config.epochs, self.config.lr, self.model.config().condense_factor)
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint { model: self.model.clone(), adam: self.adam.clone(), epoch: self.epoch, step: self.step }
    }

    /// Shuffle seed of 1-indexed `epoch`.
    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        self.config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    fn total_steps(&self, data_len: usize) -> u64 {
        (self.config.epochs * data_len.div_ceil(self.config.batch_size)) as u64
    }

    /// Runs epochs until the plan is finished, calling `sink` after each.
    pub fn run<F>(&mut self, data: &PatchDataset<T>, mut sink: F) -> Result<()>
    where
        F: FnMut(&Self, &EpochStats) -> Result<()>,
    {
        while !self.is_done() {
            let stats = self.run_epoch(data)?;
            sink(self, &stats)?;
        }
        Ok(())
    }

    /// Trains one epoch, condensing afterwards when a stage ends.
    pub fn run_epoch(&mut self, data: &PatchDataset<T>) -> Result<EpochStats> {
        if data.is_empty() {
            return Err(Error::config("training set is empty"));
        }
        if data.scale != self.model.scale() {
            return Err(Error::config(format!("dataset scale {} != model scale {}", data.scale, self.model.scale())));
        }
        let epoch = self.epoch + 1;
        let schedule = self.schedule();
        let lasso = schedule.is_condensing(epoch) && self.config.lasso_weight > 0.0;
        let total_steps = self.total_steps(data.len());
        let (mut loss_sum, mut obj_sum, mut lr) = (0.0, 0.0, self.config.lr);
        let batches = data.batches(self.config.batch_size, self.epoch_seed(epoch));
        for (bi, batch) in batches.iter().enumerate() {
            lr = cosine_lr(self.step, total_steps, self.config.lr);
            let (loss, objective) = self.train_step(batch, lr, lasso).map_err(|e| match e {
                Error::NonFiniteLoss { value, .. } => Error::NonFiniteLoss { epoch, batch: bi, value },
                other => other,
            })?;
            loss_sum += loss;
            obj_sum += objective;
        }
        let condensed = schedule.condense_epochs().contains(&epoch);
        if condensed {
            self.model.condense()?;
            for l in self.model.lgc_layers() {
                self.adam.apply_mask(&l.weight);
            }
        }
        self.epoch = epoch;
        let n = batches.len() as f64;
        Ok(EpochStats { epoch, loss: loss_sum / n, objective: obj_sum / n, lr, retained: self.retained_fraction(), condensed })
    }

    /// Mean retained fraction over the learned group convs (1 if none).
    pub fn retained_fraction(&self) -> f64 {
        let layers = self.model.lgc_layers();
        if layers.is_empty() {
            return 1.0;
        }
        layers.iter().map(|l| l.retained_fraction()).sum::<f64>() / layers.len() as f64
    }

    /// One optimizer step; returns (Charbonnier loss, full objective).
    pub fn train_step(&mut self, batch: &Batch<T>, lr: f64, lasso: bool) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let x = g.constant(batch.lr.clone());
        let y = g.constant(batch.hr.clone());
        let pred = self.model.forward(&mut g, x)?;
        let data_loss = g.charbonnier(pred, y, T::lit(self.config.charbonnier_eps))?;
        let mut objective: Var = data_loss;
        if lasso {
            if let Some(p) = self.model.group_lasso(&mut g)? {
                let p = g.scale(p, T::lit(self.config.lasso_weight));
                objective = g.add(objective, p)?;
            }
        }
        let loss = g.value(data_loss).data()[0].to_f64().unwrap_or(f64::NAN);
        let obj = g.value(objective).data()[0].to_f64().unwrap_or(f64::NAN);
        if !loss.is_finite() || !obj.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: self.epoch + 1, batch: 0, value: if loss.is_finite() { obj } else { loss } });
        }
        let grads = g.backward(objective)?;
        let mut scale = 1.0;
        if let Some(max) = self.config.clip_norm {
            let sq: f64 = self
                .model
                .parameters()
                .iter()
                .filter_map(|p| grads.param(&p.name))
                .flat_map(|t| t.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN).powi(2)))
                .sum();
            let norm = sq.sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: self.epoch + 1, batch: 0, value: norm });
            }
            if norm > max {
                scale = max / norm;
            }
        }
        self.adam.begin_step();
        for p in self.model.parameters_mut() {
            if let Some(gr) = grads.param(&p.name) {
                self.adam.update(p, gr, lr, scale);
            }
        }
        self.step += 1;
        Ok((loss, obj))
    }
}
