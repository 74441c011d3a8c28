//! Losses and update rules: SGD, Path-SGD, DDP-SGD, DDP-normalized SGD and the
//! diagonal natural gradient, plus exact and Monte-Carlo Fisher diagonals.

mod ddp_norm;
mod fisher;
mod loss;

pub use ddp_norm::{ddp_norm_effective_weights, ddp_norm_forward_backward, DdpNormPass};
pub use fisher::{fisher_diag, fisher_diag_mc};
pub use loss::{argmax, classification_error, loss_and_grad, Labels, LossKind};

use crate::error::{Error, Result};
use crate::netgraph::{backward, forward, NetworkGraph, ParamVector};
use crate::pathnorm::{ddp_kappa, kappa, Stat};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sgd,
    PathSgd,
    DdpSgd,
    DdpNorm,
    DiagNg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub lr: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub stat: Stat,
    #[serde(default)]
    pub use_kappa2: bool,
    /// Lower bound on κ; `None` means 1e-8·max(max κ, 1).
    #[serde(default)]
    pub kappa_floor: Option<f64>,
    #[serde(default)]
    pub momentum: f64,
    /// Rescales the preconditioned step to at most this ℓ₂ norm before momentum.
    #[serde(default)]
    pub max_step_norm: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(method: Method, lr: f64) -> Self {
        OptimizerConfig { method, lr, alpha: 0.0, stat: Stat::Variance, use_kappa2: false, kappa_floor: None, momentum: 0.0, max_step_norm: None, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Invalid(format!("step size {} must be finite and positive", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if let Some(f) = self.kappa_floor {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::Invalid(format!("kappa floor {f} must be non-negative")));
            }
        }
        if let Some(c) = self.max_step_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Invalid(format!("step norm bound {c} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

/// Inputs (rows are examples) with their targets.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub labels: Labels<'a>,
}

/// Mean loss and its gradient on a batch.
pub fn loss_gradient(net: &NetworkGraph, theta: &[f64], batch: Batch, loss: LossKind) -> Result<(f64, Vec<f64>)> {
    let trace = forward(net, theta, batch.inputs)?;
    let scores = trace.outputs(net);
    let (l, d) = loss_and_grad(loss, scores.view(), batch.labels)?;
    Ok((l, backward(net, theta, &trace, d.view())?))
}

/// κ with the floor applied: max(κ_i, ε_κ).
pub fn floored(kappa: &[f64], floor: Option<f64>) -> Vec<f64> {
    let eps = floor.unwrap_or_else(|| 1e-8 * kappa.iter().cloned().fold(1.0, f64::max));
    kappa.iter().map(|&k| k.max(eps)).collect()
}

fn apply(theta: &[f64], grad: &[f64], scale: &[f64], lr: f64) -> Result<ParamVector> {
    ParamVector::new(theta.iter().zip(grad).zip(scale).map(|((t, g), s)| t - lr / s * g).collect())
}

/// θ' = θ − η∇L.
pub fn sgd_step(net: &NetworkGraph, theta: &[f64], batch: Batch, loss: LossKind, cfg: &OptimizerConfig) -> Result<ParamVector> {
    let (_, g) = loss_gradient(net, theta, batch, loss)?;
    apply(theta, &g, &vec![1.0; g.len()], cfg.lr)
}

/// θ'_i = θ_i − η/max(κ_i, ε_κ)·∂L/∂θ_i with κ from the path regularizer.
pub fn path_sgd_step(net: &NetworkGraph, theta: &[f64], batch: Batch, loss: LossKind, cfg: &OptimizerConfig) -> Result<ParamVector> {
    let (_, g) = loss_gradient(net, theta, batch, loss)?;
    let k = kappa(net, theta, cfg.use_kappa2).kappa;
    apply(theta, &g, &floored(&k, cfg.kappa_floor), cfg.lr)
}

/// Diagonal steepest descent with κ from the data-dependent regularizer on the same batch.
pub fn ddp_sgd_step(net: &NetworkGraph, theta: &[f64], batch: Batch, loss: LossKind, cfg: &OptimizerConfig) -> Result<ParamVector> {
    let (_, g) = loss_gradient(net, theta, batch, loss)?;
    let k = ddp_kappa(net, theta, batch.inputs, cfg.alpha, cfg.stat)?;
    apply(theta, &g, &floored(&k, cfg.kappa_floor), cfg.lr)
}

/// θ'_e = θ_e − η/F[e,e]·∂L/∂θ_e with the exact Fisher diagonal on the batch inputs.
pub fn diag_ng_step(net: &NetworkGraph, theta: &[f64], batch: Batch, loss: LossKind, cfg: &OptimizerConfig) -> Result<ParamVector> {
    let (_, g) = loss_gradient(net, theta, batch, loss)?;
    let f = fisher_diag(net, theta, batch.inputs)?;
    apply(theta, &g, &floored(&f, cfg.kappa_floor), cfg.lr)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UpdateReport {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

/// Stateful optimizer: the chosen preconditioner followed by momentum
/// (velocity accumulates the already-preconditioned step).
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub cfg: OptimizerConfig,
    pub loss: LossKind,
    velocity: Vec<f64>,
    step: usize,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, loss: LossKind, n_params: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer { cfg, loss, velocity: vec![0.0; n_params], step: 0 })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// Restores state saved from an earlier run.
    pub fn resume(&mut self, velocity: Vec<f64>, step: usize) -> Result<()> {
        if velocity.len() != self.velocity.len() {
            return Err(Error::ContractViolation("velocity length differs".into()));
        }
        self.velocity = velocity;
        self.step = step;
        Ok(())
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Per-parameter scale (κ, Fisher diagonal or 1) and the loss gradient.
    /// For `DdpNorm`, θ holds the unnormalized weights w̃.
    pub fn direction(&self, net: &NetworkGraph, theta: &[f64], batch: Batch) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let cfg = &self.cfg;
        match cfg.method {
            Method::DdpNorm => {
                let pass = ddp_norm_forward_backward(net, theta, batch, self.loss, cfg.alpha, cfg.stat)?;
                let ones = vec![1.0; theta.len()];
                Ok((pass.loss, pass.grad, ones))
            }
            Method::Sgd => {
                let (l, g) = loss_gradient(net, theta, batch, self.loss)?;
                let ones = vec![1.0; g.len()];
                Ok((l, g, ones))
            }
            Method::PathSgd => {
                let (l, g) = loss_gradient(net, theta, batch, self.loss)?;
                Ok((l, g, kappa(net, theta, cfg.use_kappa2).kappa))
            }
            Method::DdpSgd => {
                let (l, g) = loss_gradient(net, theta, batch, self.loss)?;
                Ok((l, g, ddp_kappa(net, theta, batch.inputs, cfg.alpha, cfg.stat)?))
            }
            Method::DiagNg => {
                let (l, g) = loss_gradient(net, theta, batch, self.loss)?;
                Ok((l, g, fisher_diag(net, theta, batch.inputs)?))
            }
        }
    }

    /// One update in place.
    pub fn step(&mut self, net: &NetworkGraph, theta: &mut ParamVector, batch: Batch) -> Result<UpdateReport> {
        let (loss, grad, scale) = self.direction(net, theta, batch)?;
        let (kappa_min, kappa_max) = scale
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &k| (a.min(k), b.max(k)));
        let scale = match self.cfg.method {
            Method::Sgd | Method::DdpNorm => scale,
            _ => floored(&scale, self.cfg.kappa_floor),
        };
        let mu = self.cfg.momentum;
        let lr = self.cfg.lr;
        let mut steps: Vec<f64> = grad.iter().zip(&scale).map(|(g, s)| lr / s * g).collect();
        if let Some(c) = self.cfg.max_step_norm {
            let n = steps.iter().map(|d| d * d).sum::<f64>().sqrt();
            if n > c {
                steps.iter_mut().for_each(|d| *d *= c / n);
            }
        }
        let mut next = theta.to_vec();
        for (i, d) in steps.into_iter().enumerate() {
            self.velocity[i] = if mu == 0.0 { d } else { mu * self.velocity[i] + d };
            next[i] -= self.velocity[i];
        }
        *theta = ParamVector::new(next)?;
        self.step += 1;
        Ok(UpdateReport {
            step: self.step,
            loss,
            grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            kappa_min,
            kappa_max,
        })
    }
}
