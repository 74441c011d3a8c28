//! Epoch-based training loop with learning-rate decay, momentum ramp and
//! resumable state.

use crate::data::{minibatches, Dataset, Targets};
use crate::error::{Error, Result};
use crate::netgraph::{forward, NetworkGraph, ParamVector};
use crate::optim::{classification_error, ddp_norm_effective_weights, loss_and_grad, LossKind, Method, Optimizer, OptimizerConfig};
use crate::pathnorm::path_reg_dp;
use serde::{Deserialize, Serialize};

fn default_decay() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size at epoch e is lr·lr_decay^e.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    /// Momentum moves linearly from `optimizer.momentum` to this value over `momentum_ramp_epochs`.
    #[serde(default)]
    pub momentum_final: Option<f64>,
    #[serde(default)]
    pub momentum_ramp_epochs: usize,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig, loss: LossKind, epochs: usize, batch_size: usize) -> Self {
        TrainConfig { optimizer, loss, epochs, batch_size, lr_decay: 1.0, momentum_final: None, momentum_ramp_epochs: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::Invalid(format!("lr decay {} must be positive", self.lr_decay)));
        }
        if let Some(m) = self.momentum_final {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Invalid(format!("momentum {m} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.optimizer.lr * self.lr_decay.powi(epoch as i32)
    }

    pub fn momentum_at(&self, epoch: usize) -> f64 {
        let start = self.optimizer.momentum;
        match self.momentum_final {
            None => start,
            Some(end) if self.momentum_ramp_epochs == 0 => end,
            Some(end) => {
                let t = (epoch as f64 / self.momentum_ramp_epochs as f64).min(1.0);
                start + (end - start) * t
            }
        }
    }
}

/// One metrics row, written after each epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    /// Classification error, or mean squared error for real-valued targets.
    pub train_err: f64,
    pub test_err: Option<f64>,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub gamma2_net: f64,
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub theta: Vec<f64>,
    pub velocity: Vec<f64>,
    pub step: usize,
    pub epoch: usize,
}

/// Mean loss and error of θ on the full dataset.
pub fn evaluate(net: &NetworkGraph, theta: &[f64], ds: &Dataset, loss: LossKind) -> Result<(f64, f64)> {
    let scores = forward(net, theta, ds.inputs.view())?.outputs(net);
    let (l, _) = loss_and_grad(loss, scores.view(), ds.labels())?;
    let err = match &ds.targets {
        Targets::Classes { labels, .. } => classification_error(scores.view(), labels),
        Targets::Values(y) => {
            if y.dim() != scores.dim() {
                return Err(Error::ContractViolation("target shape differs from net outputs".into()));
            }
            (&scores - y).mapv(|d| d * d).mean().unwrap_or(0.0)
        }
    };
    Ok((l, err))
}

pub struct Trainer<'a> {
    pub net: &'a NetworkGraph,
    pub cfg: TrainConfig,
    optimizer: Optimizer,
    theta: ParamVector,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(net: &'a NetworkGraph, cfg: TrainConfig, theta: ParamVector) -> Result<Self> {
        cfg.validate()?;
        net.check_theta(&theta)?;
        let optimizer = Optimizer::new(cfg.optimizer.clone(), cfg.loss, net.n_params())?;
        Ok(Trainer { net, cfg, optimizer, theta, epoch: 0 })
    }

    pub fn resume(net: &'a NetworkGraph, cfg: TrainConfig, state: TrainState) -> Result<Self> {
        let mut t = Trainer::new(net, cfg, ParamVector::new(state.theta)?)?;
        t.optimizer.resume(state.velocity, state.step)?;
        t.epoch = state.epoch;
        Ok(t)
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            theta: self.theta.to_vec(),
            velocity: self.optimizer.velocity().to_vec(),
            step: self.optimizer.steps_taken(),
            epoch: self.epoch,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn done(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    /// Raw optimizer parameters (the unnormalized w̃ under DDP-Norm).
    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    /// Weights of the plain network that computes the current function.
    /// Under DDP-Norm the normalizers are taken from `reference` (the training inputs).
    pub fn eval_params(&self, reference: &Dataset) -> Result<ParamVector> {
        let o = &self.cfg.optimizer;
        match o.method {
            Method::DdpNorm => ddp_norm_effective_weights(self.net, &self.theta, reference.inputs.view(), o.alpha, o.stat),
            _ => Ok(self.theta.clone()),
        }
    }

    /// Runs one epoch of minibatch updates and evaluates on the full sets.
    pub fn run_epoch(&mut self, train: &Dataset, test: Option<&Dataset>) -> Result<EpochMetrics> {
        self.optimizer.cfg.lr = self.cfg.lr_at(self.epoch);
        self.optimizer.cfg.momentum = self.cfg.momentum_at(self.epoch);
        let batches = minibatches(train.len(), self.cfg.batch_size, self.cfg.optimizer.seed, self.epoch as u64)?;
        let (mut kmin, mut kmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for idx in batches {
            let b = train.gather(&idx);
            let r = self.optimizer.step(self.net, &mut self.theta, b.view())?;
            kmin = kmin.min(r.kappa_min);
            kmax = kmax.max(r.kappa_max);
        }
        self.epoch += 1;
        let w = self.eval_params(train)?;
        let (train_loss, train_err) = evaluate(self.net, &w, train, self.cfg.loss)?;
        let test_err = match test {
            Some(t) => Some(evaluate(self.net, &w, t, self.cfg.loss)?.1),
            None => None,
        };
        Ok(EpochMetrics {
            step: self.optimizer.steps_taken(),
            epoch: self.epoch,
            train_loss,
            train_err,
            test_err,
            kappa_min: kmin,
            kappa_max: kmax,
            gamma2_net: path_reg_dp(self.net, &w).net,
        })
    }

    /// Runs the remaining epochs.
    pub fn run(&mut self, train: &Dataset, test: Option<&Dataset>) -> Result<Vec<EpochMetrics>> {
        let mut rows = Vec::new();
        while !self.done() {
            rows.push(self.run_epoch(train, test)?);
        }
        Ok(rows)
    }
}
