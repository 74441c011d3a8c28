use crate::data::{minibatches, Dataset};
use crate::error::{Error, Result};
use crate::netgraph::{forward, NetworkGraph};
use crate::optim::{loss_and_grad, loss_gradient, LossKind};
use crate::rng::indexed_stream;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscentConfig {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig { steps: 2000, lr: 0.01, momentum: 0.9, batch_size: 64, seed: 0, loss: LossKind::CrossEntropy }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharpnessEstimate {
    /// L̂(w + u*) − L̂(w) on the full set.
    pub zeta: f64,
    pub alpha: f64,
    pub base_loss: f64,
    pub perturbed_loss: f64,
    pub steps: usize,
    /// Minibatch loss at w + u every 100 ascent steps.
    pub trajectory: Vec<f64>,
}

fn full_loss(net: &NetworkGraph, theta: &[f64], data: &Dataset, loss: LossKind) -> Result<f64> {
    let scores = forward(net, theta, data.inputs.view())?.outputs(net);
    Ok(loss_and_grad(loss, scores.view(), data.labels())?.0)
}

/// Projected stochastic gradient ascent on the box |u_i| ≤ α(|w_i| + 1),
/// starting from u = 0 and clipping after every step.
pub fn max_sharpness(net: &NetworkGraph, theta: &[f64], data: &Dataset, alpha: f64, cfg: &AscentConfig) -> Result<SharpnessEstimate> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid(format!("sharpness radius {alpha} must be non-negative")));
    }
    let base = full_loss(net, theta, data, cfg.loss)?;
    let bound: Vec<f64> = theta.iter().map(|w| alpha * (w.abs() + 1.0)).collect();
    let mut u = vec![0.0; theta.len()];
    let mut vel = vec![0.0; theta.len()];
    let mut trajectory = Vec::new();
    let mut queue: Vec<Vec<usize>> = Vec::new();
    let mut epoch = 0u64;
    let mut perturbed: Vec<f64> = theta.to_vec();
    for step in 0..cfg.steps {
        if alpha == 0.0 {
            break;
        }
        if queue.is_empty() {
            queue = minibatches(data.len(), cfg.batch_size, cfg.seed, epoch)?;
            queue.reverse();
            epoch += 1;
        }
        let idx = queue.pop().unwrap();
        let mb = data.gather(&idx);
        let (l, g) = loss_gradient(net, &perturbed, mb.view(), cfg.loss)?;
        if step % 100 == 0 {
            trajectory.push(l);
        }
        for i in 0..u.len() {
            vel[i] = cfg.momentum * vel[i] + cfg.lr * g[i];
            u[i] = (u[i] + vel[i]).clamp(-bound[i], bound[i]);
            perturbed[i] = theta[i] + u[i];
        }
    }
    let after = full_loss(net, &perturbed, data, cfg.loss)?;
    Ok(SharpnessEstimate { zeta: after - base, alpha, base_loss: base, perturbed_loss: after, steps: cfg.steps, trajectory })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacBayesConfig {
    pub n_perturb: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for PacBayesConfig {
    fn default() -> Self {
        PacBayesConfig { n_perturb: 1000, seed: 0, loss: LossKind::CrossEntropy }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacBayesPoint {
    pub alpha: f64,
    pub kl: f64,
    pub expected_sharpness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacBayesCurve {
    pub points: Vec<PacBayesPoint>,
}

/// KL term (1/α²) Σ_i (w_i / (10|w_i| + 1))².
pub fn pac_bayes_kl(theta: &[f64], alpha: f64) -> f64 {
    theta.iter().map(|w| (w / (10.0 * w.abs() + 1.0)).powi(2)).sum::<f64>() / (alpha * alpha)
}

/// Expected sharpness under u_i ~ N(0, (α(10|w_i|+1))²) and the matching KL
/// for each α. Draw d reuses the same standard-normal vector across α.
pub fn pac_bayes_curve(net: &NetworkGraph, theta: &[f64], data: &Dataset, alpha_grid: &[f64], cfg: &PacBayesConfig) -> Result<PacBayesCurve> {
    if let Some(a) = alpha_grid.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::Invalid(format!("alpha {a} must be positive")));
    }
    if cfg.n_perturb == 0 {
        return Err(Error::Invalid("need at least one perturbation".into()));
    }
    let base = full_loss(net, theta, data, cfg.loss)?;
    let mut sums = vec![0.0; alpha_grid.len()];
    let scale: Vec<f64> = theta.iter().map(|w| 10.0 * w.abs() + 1.0).collect();
    let mut w = theta.to_vec();
    for d in 0..cfg.n_perturb {
        let mut rng = indexed_stream(cfg.seed, crate::rng::streams::PERTURBATION, d as u64);
        let eps: Vec<f64> = (0..theta.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (a, alpha) in alpha_grid.iter().enumerate() {
            for i in 0..w.len() {
                w[i] = theta[i] + alpha * scale[i] * eps[i];
            }
            sums[a] += full_loss(net, &w, data, cfg.loss)? - base;
        }
    }
    Ok(PacBayesCurve {
        points: alpha_grid
            .iter()
            .zip(sums)
            .map(|(&alpha, s)| PacBayesPoint { alpha, kl: pac_bayes_kl(theta, alpha), expected_sharpness: s / cfg.n_perturb as f64 })
            .collect(),
    })
}
